"""Potential models: closed-form values, finite-difference derivatives,
domain handling, and the confinement/kernel assumption checks."""

import numpy as np
import pytest

from levykinetics.errors import DomainError
from levykinetics.potentials import (
    Confinement,
    Coulomb,
    LennardJones,
    LogCoulomb,
    PotentialModel,
    PowerLaw,
    check_HU,
    check_HV_HK,
    hilbert_schmidt_norm,
    min_pair_distance,
)
from levykinetics.rng import RngStream
from levykinetics.sampling import make_configuration_sampler

R_STAR = 2.0 ** (1.0 / 6.0)


# -- closed-form pair profiles -------------------------------------------------


def test_lj_profile_closed_forms():
    lj = LennardJones(c1=1.0, c2=1.0)
    assert lj.profile(1.0) == 0.0  # c1 - c2
    assert abs(lj.profile_d1(R_STAR)) < 1e-14  # equilibrium separation
    assert lj.profile_d1(1.0) == -6.0  # -12 c1 + 6 c2
    assert lj.profile(R_STAR) == pytest.approx(-0.25)  # well depth c2^2/(4 c1)
    assert lj.profile_d2(1.0) == pytest.approx(12.0 * 13.0 - 6.0 * 7.0)


def test_lj_blowup_monotone_at_origin():
    lj = LennardJones(c1=1.0, c2=1.0)
    radii = np.array([1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    vals = lj.profile(radii)
    assert np.all(np.diff(vals) > 0.0)  # grows as r decreases
    assert vals[-1] > 1e70


def test_other_kernels_pointwise():
    assert PowerLaw(B=2.0, beta=3.0).profile(2.0) == pytest.approx(0.25)
    assert Coulomb(dim=3).profile(2.0) == pytest.approx(0.5)
    assert Coulomb(dim=5).profile(2.0) == pytest.approx(2.0**-3)
    assert LogCoulomb().profile(1.0) == 0.0
    assert LogCoulomb().profile_d1(2.0) == -0.5


def test_kernel_parameter_guards():
    with pytest.raises(ValueError):
        LennardJones(c1=0.0, c2=1.0)
    with pytest.raises(ValueError):
        PowerLaw(B=1.0, beta=0.0)
    with pytest.raises(ValueError):
        Coulomb(dim=2)


def test_confinement_values_and_guards():
    c = Confinement(c0=2.0, exponent=4.0)
    u = np.array([1.0, 0.0, 0.0])
    assert c.value(np.zeros(3)) == pytest.approx(2.0)
    assert c.value(u) == pytest.approx(2.0 * 2.0**2)
    with pytest.raises(ValueError):
        Confinement(c0=1.0, exponent=1.5)
    with pytest.raises(ValueError):
        Confinement(c0=-1.0)


# -- geometry helpers ----------------------------------------------------------


def test_min_pair_distance_hand_example():
    x = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
    assert min_pair_distance(x) == pytest.approx(1.0)
    batch = np.stack([x, x + 7.0])  # translation cannot change it
    np.testing.assert_allclose(min_pair_distance(batch), [1.0, 1.0])


def test_hilbert_schmidt_norm_is_frobenius():
    rng = np.random.default_rng(1)
    h = rng.normal(size=(4, 6, 6))
    np.testing.assert_allclose(hilbert_schmidt_norm(h), np.linalg.norm(h, axis=(-2, -1)))


# -- model-level evaluations ---------------------------------------------------


def test_model_constructor_guards():
    with pytest.raises(ValueError):
        PotentialModel(n_particles=2, dim=3)  # no energy at all
    with pytest.raises(ValueError):
        PotentialModel(n_particles=2, dim=2, interaction=Coulomb(dim=3))
    with pytest.raises(ValueError):
        PotentialModel(n_particles=2, dim=3, interaction=LogCoulomb())
    with pytest.raises(ValueError):
        PotentialModel(
            n_particles=2, dim=2, confinement=Confinement(), normalization="bogus"
        )


def test_pair_weight_by_normalization():
    lj = LennardJones(1.0, 1.0)
    pairs = PotentialModel(n_particles=4, dim=3, interaction=lj, normalization="pairs")
    mf = PotentialModel(n_particles=4, dim=3, interaction=lj, normalization="mean_field")
    assert pairs.pair_weight == 1.0
    assert mf.pair_weight == pytest.approx(0.5)
    # energy of a fixed configuration scales by exactly that weight
    x = np.array([[0, 0, 0], [1.3, 0, 0], [0, 1.7, 0], [0.4, 0.2, 2.0]], dtype=float)
    assert mf.potential(x) == pytest.approx(0.5 * pairs.potential(x))


def test_lj_dimer_energy_decomposition(lj_model):
    # two particles at +-r*/2 on the x-axis: interaction sits at the well
    # bottom -1/4, confinement contributes 2 c0 (1 + (r*/2)^2)
    x = np.array([[-R_STAR / 2, 0.0, 0.0], [R_STAR / 2, 0.0, 0.0]])
    expected = 2.0 * (1.0 + (R_STAR / 2) ** 2) - 0.25
    assert lj_model.potential(x) == pytest.approx(expected)


def test_admissibility_and_domain_error(lj_model):
    good = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    bad = np.zeros((2, 3))  # coincident pair
    assert lj_model.admissible(good)
    assert not lj_model.admissible(bad)
    assert lj_model.potential(bad) == np.inf
    with pytest.raises(DomainError):
        lj_model.gradient(bad)
    with pytest.raises(ValueError):
        lj_model.potential(np.zeros((3, 3)))  # wrong particle count


def _fd_gradient(model, x, h):
    flat = x.ravel()
    g = np.zeros_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        g[i] = (
            model.potential((flat + e).reshape(x.shape))
            - model.potential((flat - e).reshape(x.shape))
        ) / (2 * h)
    return g.reshape(x.shape)


@pytest.mark.parametrize("kind", ["lj", "log_coulomb", "harmonic"])
def test_gradient_matches_finite_differences(kind, lj_model, log_coulomb_model, harmonic_model):
    model = {"lj": lj_model, "log_coulomb": log_coulomb_model, "harmonic": harmonic_model}[kind]
    sampler = make_configuration_sampler(
        model.n_particles, model.dim, RngStream(13).child("fd", kind),
        pair_distances=(0.9, 1.5, 2.5),
    )
    xs = sampler(12)
    for x in xs:
        # step must stay well below the tightest pair separation
        scale = 1.0 if model.n_particles == 1 else float(min_pair_distance(x))
        h = 1e-6 * min(1.0, scale)
        np.testing.assert_allclose(
            model.gradient(x), _fd_gradient(model, x, h), rtol=2e-5, atol=1e-7
        )


def test_hessian_matches_finite_difference_of_gradient(lj_model):
    x = np.array([[-0.8, 0.1, 0.0], [0.7, -0.2, 0.3]])
    nd = x.size
    h = 1e-6
    hess_fd = np.zeros((nd, nd))
    flat = x.ravel()
    for i in range(nd):
        e = np.zeros(nd)
        e[i] = h
        gp = lj_model.gradient((flat + e).reshape(x.shape)).ravel()
        gm = lj_model.gradient((flat - e).reshape(x.shape)).ravel()
        hess_fd[:, i] = (gp - gm) / (2 * h)
    hess = lj_model.hessian(x)
    assert hess.shape == (nd, nd)
    np.testing.assert_allclose(hess, hess_fd, rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(hess, hess.T, atol=1e-12)  # symmetry


def test_interaction_gradient_translation_invariant():
    lj = PotentialModel(n_particles=3, dim=2, interaction=LennardJones(1.0, 1.0))
    x = np.array([[0.0, 0.0], [1.1, 0.2], [-0.3, 1.4]])
    g0 = lj.gradient(x)
    g1 = lj.gradient(x + np.array([5.0, -2.0]))
    np.testing.assert_allclose(g0, g1, atol=1e-12)
    # pairwise forces sum to zero
    np.testing.assert_allclose(g0.sum(axis=0), 0.0, atol=1e-12)


# -- assumption checks ---------------------------------------------------------


def test_confinement_growth_check_passes_on_lj(lj_model):
    sampler = make_configuration_sampler(2, 3, RngStream(99).child("hu"))
    report = check_HU(lj_model, sampler, n=1500)
    assert report.kind == "HU"
    assert report.passed
    assert report.n_samples > 0
    # the sup estimates it certifies must be finite and recorded
    assert all(np.isfinite(v) for v in report.constants.values())


def test_kernel_check_passes_on_log_coulomb(hvhk_report):
    assert hvhk_report.kind == "HVHK"
    assert hvhk_report.passed
    for key in ("C_V_star", "C_V_2star", "M_V", "R_K"):
        assert key in hvhk_report.constants, key


def test_kernel_check_rejects_lj():
    # the mean-field decomposition requires a repulsive kernel; LJ has an
    # attractive tail and is refused structurally, before any sampling
    mf = PotentialModel(
        n_particles=2, dim=3, confinement=Confinement(1.0, 2.0),
        interaction=LennardJones(1.0, 1.0), normalization="mean_field",
    )
    from levykinetics.errors import UnsupportedModelError

    sampler = make_configuration_sampler(2, 3, RngStream(98).child("hv"))
    with pytest.raises(UnsupportedModelError):
        check_HV_HK(mf, sampler, n=800)
    # pairwise normalization of a true kernel also lacks the structure
    lc = PotentialModel(
        n_particles=3, dim=2, confinement=Confinement(1.0, 2.0),
        interaction=LogCoulomb(), normalization="pairs",
    )
    with pytest.raises(UnsupportedModelError):
        check_HV_HK(lc, make_configuration_sampler(3, 2, RngStream(98)), n=200)
