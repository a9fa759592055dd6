"""Integrator semantics: step maps, rejection handling, layout, convergence order.

The single-step maps are checked against hand arithmetic, the ensemble
machinery against exact linear recursions (the harmonic force is linear, so
the splitting scheme's two-start gap evolves by a known 2x2 matrix), and the
global error against the matrix-exponential solution of the damped oscillator.
"""

import numpy as np
import pytest
from scipy.linalg import expm

from levykinetics.dynamics import (
    PhaseState,
    Rejected,
    SystemSpec,
    simulate,
    step,
)
from levykinetics.errors import DomainError, SimulationStuckError
from levykinetics.noise import NoiseSpec
from levykinetics.potentials import Confinement, LennardJones, PotentialModel

R_STAR = 2.0 ** (1.0 / 6.0)


def harmonic_system(scheme, h=1e-3, gamma=1.0, noise=None):
    model = PotentialModel(n_particles=1, dim=1, confinement=Confinement(1.0, 2.0))
    return SystemSpec(
        n_particles=1, dim=1, gamma=gamma, potential=model, noise=noise,
        scheme=scheme, h=h,
    )


def lj_system(**kw):
    model = PotentialModel(
        n_particles=2,
        dim=3,
        confinement=Confinement(1.0, 2.0),
        interaction=LennardJones(1.0, 1.0),
        normalization="pairs",
    )
    kw.setdefault("noise", None)
    return SystemSpec(n_particles=2, dim=3, gamma=1.0, potential=model, **kw)


def lj_dimer(sep, speed=0.0):
    x = np.array([[-sep / 2, 0.0, 0.0], [sep / 2, 0.0, 0.0]])
    v = np.array([[speed, 0.0, 0.0], [-speed, 0.0, 0.0]])
    return PhaseState(x=x, v=v)


# ---------------------------------------------------------------- step maps


def test_adaptive_step_plain_regime():
    # |G| h = 0.1 is under the substep guard, so the adaptive scheme takes a
    # single plain Euler substep: x' = 0 + 0.1*1, v' = 1 - 0.1*1
    sys = harmonic_system("adaptive_euler")
    z = PhaseState(x=np.array([[0.0]]), v=np.array([[1.0]]))
    out = step(z, sys, dL=np.zeros((1, 1)), h=0.1)
    assert isinstance(out, PhaseState)
    assert out.x[0, 0] == pytest.approx(0.1, rel=1e-15)
    assert out.v[0, 0] == pytest.approx(0.9, rel=1e-15)


def test_tamed_step_caps_huge_force():
    # G = gamma*v = 1000 at the confinement minimum; the tamed decrement is
    # h|G|/(1 + h|G|) = 10/11 instead of the raw (explosive) h*G = 10
    sys = harmonic_system("tamed_euler")
    z = PhaseState(x=np.array([[0.0]]), v=np.array([[1000.0]]))
    out = step(z, sys, dL=np.zeros((1, 1)), h=0.01)
    assert out.v[0, 0] == pytest.approx(1000.0 - 10.0 / 11.0, rel=1e-14)
    assert out.x[0, 0] == pytest.approx(10.0, rel=1e-14)


def test_ou_splitting_exact_friction():
    # at the force minimum the velocity update is the exact OU flow e^{-gamma h} v
    sys = harmonic_system("exact_ou_splitting", gamma=2.5)
    z = PhaseState(x=np.array([[0.0]]), v=np.array([[3.0]]))
    h = 0.3
    out = step(z, sys, dL=np.zeros((1, 1)), h=h)
    assert out.v[0, 0] == pytest.approx(3.0 * np.exp(-2.5 * h), rel=1e-14)
    assert out.x[0, 0] == pytest.approx(3.0 * h, rel=1e-14)


def test_step_jump_increment_is_added():
    sys = harmonic_system("tamed_euler")
    z = PhaseState(x=np.array([[0.0]]), v=np.array([[1.0]]))
    base = step(z, sys, dL=np.zeros((1, 1)), h=0.1)
    kicked = step(z, sys, dL=np.array([[0.25]]), h=0.1)
    assert kicked.v[0, 0] - base.v[0, 0] == pytest.approx(0.25, abs=1e-15)
    assert kicked.x[0, 0] == base.x[0, 0]


def test_step_rejects_proposal_violating_pair_guard():
    sys = lj_system(scheme="tamed_euler", min_pair_guard=1.0, h=0.05)
    z = lj_dimer(R_STAR, speed=10.0)  # closing fast: proposal lands well inside the guard
    out = step(z, sys, dL=np.zeros((2, 3)), h=0.05)
    assert isinstance(out, Rejected)
    assert "left the admissible domain" in out.reason


def test_step_raises_on_inadmissible_input():
    sys = lj_system(scheme="tamed_euler")
    z = PhaseState(x=np.zeros((2, 3)), v=np.zeros((2, 3)))  # coincident pair
    with pytest.raises(DomainError, match="input state"):
        step(z, sys, dL=np.zeros((2, 3)))


# ------------------------------------------------------------- system spec


def test_system_spec_validation():
    model = PotentialModel(n_particles=1, dim=1, confinement=Confinement(1.0, 2.0))
    with pytest.raises(ValueError, match="gamma"):
        SystemSpec(n_particles=1, dim=1, gamma=0.0, potential=model, noise=None)
    with pytest.raises(ValueError, match="step size"):
        SystemSpec(n_particles=1, dim=1, gamma=1.0, potential=model, noise=None, h=0.0)
    with pytest.raises(ValueError, match="scheme"):
        SystemSpec(n_particles=1, dim=1, gamma=1.0, potential=model, noise=None, scheme="rk4")
    with pytest.raises(ValueError, match="shape"):
        SystemSpec(n_particles=2, dim=3, gamma=1.0, potential=model, noise=None)


# ----------------------------------------------------------- ensemble runs


def test_zero_noise_relaxation_to_rest():
    # damped oscillator, spectral abscissa -1/2: amplitudes shrink by ~e^{-25}
    sys = harmonic_system("tamed_euler", h=1e-3)
    z0 = PhaseState(x=np.array([[1.0]]), v=np.array([[0.0]]))
    batch = simulate(sys, z0, t_final=50.0, snapshots=[50.0], seed=0)
    assert abs(batch.xs[0, 0, 0, 0]) < 1e-6
    assert abs(batch.vs[0, 0, 0, 0]) < 1e-6


def test_batch_layout_and_stats():
    sys = lj_system(scheme="tamed_euler", h=1e-3, noise=NoiseSpec(per_particle_alpha=(1.5, 1.5)))
    z0 = lj_dimer(2.0)
    batch = simulate(sys, z0, t_final=0.05, snapshots=[0.02, 0.05], seed=3, n_trajectories=4)
    assert batch.xs.shape == (2, 4, 2, 3)
    assert batch.vs.shape == (2, 4, 2, 3)
    assert np.array_equal(batch.times, [0.02, 0.05])
    assert batch.n_trajectories == 4
    assert batch.stats["n_steps"] == 50
    assert len(batch.stats["rejections_per_trajectory"]) == 4
    assert batch.stats["rejections_total"] >= 0
    assert batch.stats["max_consecutive_rejections"] <= sys.max_rejections


def test_simulate_is_deterministic_in_seed():
    sys = harmonic_system("tamed_euler", h=1e-3, noise=NoiseSpec(per_particle_alpha=(1.5,)))
    z0 = PhaseState(x=np.array([[0.2]]), v=np.array([[-0.4]]))
    a = simulate(sys, z0, t_final=0.5, snapshots=[0.25, 0.5], seed=11, n_trajectories=6)
    b = simulate(sys, z0, t_final=0.5, snapshots=[0.25, 0.5], seed=11, n_trajectories=6)
    c = simulate(sys, z0, t_final=0.5, snapshots=[0.25, 0.5], seed=12, n_trajectories=6)
    assert np.array_equal(a.xs, b.xs) and np.array_equal(a.vs, b.vs)
    assert not np.array_equal(a.xs, c.xs)


def test_common_noise_gap_follows_linear_recursion():
    # With the splitting scheme and force 2x, one step maps (x, v) affinely:
    #   x' = x + h v,   v' = -2h x + e^{-gamma h} v  (+ shared noise).
    # Two ensembles with the same seed see identical increments, so their gap
    # contracts deterministically: gap_n = A^n gap_0.
    h, gamma = 1e-2, 1.0
    sys = harmonic_system("exact_ou_splitting", h=h, gamma=gamma, noise=NoiseSpec(per_particle_alpha=(1.5,)))
    za = PhaseState(x=np.array([[0.0]]), v=np.array([[0.0]]))
    zb = PhaseState(x=np.array([[0.5]]), v=np.array([[-0.3]]))
    snaps = [0.1, 0.2, 0.4]
    a = simulate(sys, za, t_final=0.4, snapshots=snaps, seed=5, n_trajectories=3)
    b = simulate(sys, zb, t_final=0.4, snapshots=snaps, seed=5, n_trajectories=3)
    A = np.array([[1.0, h], [-2.0 * h, np.exp(-gamma * h)]])
    gap0 = np.array([0.5, -0.3])
    for k, t in enumerate(snaps):
        pred = np.linalg.matrix_power(A, round(t / h)) @ gap0
        for m in range(3):
            got = np.array([b.xs[k, m, 0, 0] - a.xs[k, m, 0, 0],
                            b.vs[k, m, 0, 0] - a.vs[k, m, 0, 0]])
            assert np.allclose(got, pred, rtol=1e-10, atol=1e-12)


def test_tamed_scheme_is_first_order():
    # global error vs the exact damped-oscillator flow expm(T*[[0,1],[-2,-1]])
    # should halve when h does
    z0 = np.array([1.0, 0.5])
    T = 1.0
    ref = expm(T * np.array([[0.0, 1.0], [-2.0, -1.0]])) @ z0
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        sys = harmonic_system("tamed_euler", h=h)
        z = PhaseState(x=np.array([[z0[0]]]), v=np.array([[z0[1]]]))
        for _ in range(round(T / h)):
            z = step(z, sys, dL=np.zeros((1, 1)))
        errs.append(np.hypot(z.x[0, 0] - ref[0], z.v[0, 0] - ref[1]))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(1.7 < r < 2.3 for r in ratios), (errs, ratios)


def test_simulate_raises_when_guard_blocks_every_proposal():
    # pair guard wider than the starting separation: every proposal is vetoed
    sys = lj_system(scheme="tamed_euler", h=1e-3, min_pair_guard=2.0)
    z0 = lj_dimer(R_STAR)
    with pytest.raises(SimulationStuckError, match="consecutive rejections"):
        simulate(sys, z0, t_final=1.0, snapshots=[1.0], seed=0)


def test_simulate_input_validation():
    sys = harmonic_system("tamed_euler")
    z0 = PhaseState(x=np.array([[0.0]]), v=np.array([[0.0]]))
    with pytest.raises(ValueError, match="horizon"):
        simulate(sys, z0, t_final=0.0, snapshots=[0.0], seed=0)
    with pytest.raises(ValueError, match="snapshot"):
        simulate(sys, z0, t_final=1.0, snapshots=[], seed=0)
    with pytest.raises(ValueError, match="snapshot"):
        simulate(sys, z0, t_final=1.0, snapshots=[2.0], seed=0)
