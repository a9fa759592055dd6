"""Decay-rate fitting, weighted TV estimates, and the two-start diagnostic.

fit_decay_rate is pinned on synthetic curves with known rates; the weighted
TV estimator on hand-computable atomic ensembles (identical ensembles give
exactly zero, disjoint atoms give exactly the sum of their weights); and the
end-to-end two-start rate on a damped oscillator, where tripling the ensemble
size must not move the fitted rate much.
"""

import numpy as np
import pytest

from levykinetics.dynamics import PhaseState, SystemSpec
from levykinetics.ergodicity import (
    DecayCurve,
    empirical_moment,
    fit_decay_rate,
    gibbs_oracle_check,
    two_start_tv_curve,
    weighted_tv_estimate,
)
from levykinetics.errors import EstimationError, UnsupportedModelError
from levykinetics.dynamics import simulate
from levykinetics.noise import NoiseSpec


# ------------------------------------------------------------- rate fitting


def test_fit_recovers_exact_rate():
    t = np.linspace(0.0, 3.0, 8)
    lam, r2, window = fit_decay_rate(t, 5.0 * np.exp(-2.0 * t))
    assert lam == pytest.approx(2.0, rel=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)
    assert window == (0.0, 3.0)


def test_fit_fills_curve_fields():
    t = np.linspace(0.5, 4.0, 6)
    curve = DecayCurve(times=t, values=np.exp(-0.7 * t))
    lam, r2, window = fit_decay_rate(curve)
    assert curve.lambda_hat == lam and curve.r_squared == r2 and curve.fit_window == window
    assert lam == pytest.approx(0.7, rel=1e-12)


def test_fit_tolerates_multiplicative_noise():
    rng = np.random.default_rng(0)
    t = np.linspace(0.0, 5.0, 24)
    vals = np.exp(-t) * np.exp(0.02 * rng.standard_normal(t.shape))
    lam, r2, _ = fit_decay_rate(t, vals)
    assert 0.9 < lam < 1.1
    assert r2 > 0.95


def test_fit_skips_values_at_the_floor():
    # the first point sits below the floor; the fit must use the clean suffix
    t = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    vals = np.exp(-1.5 * t)
    vals[0] = 1e-9
    lam, r2, window = fit_decay_rate(t, vals, noise_floor=1e-6)
    assert window[0] == 1.0
    assert lam == pytest.approx(1.5, rel=1e-12)


def test_fit_needs_four_points():
    with pytest.raises(EstimationError, match="at least 4"):
        fit_decay_rate(np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.5, 0.25]))
    # a trailing zero empties the usable suffix even when the curve is long
    t = np.linspace(0.0, 5.0, 10)
    vals = np.exp(-t)
    vals[-1] = 0.0
    with pytest.raises(EstimationError):
        fit_decay_rate(t, vals)


def test_decay_curve_guards():
    with pytest.raises(ValueError, match="increasing"):
        DecayCurve(times=np.array([0.0, 1.0, 1.0]), values=np.ones(3))
    with pytest.raises(ValueError, match="length"):
        DecayCurve(times=np.array([0.0, 1.0]), values=np.ones(3))


# ------------------------------------------------------------- weighted TV


def atoms(x, v, m=50):
    """An ensemble of m identical single-particle states."""
    xs = np.full((m, 1, 1), float(x))
    vs = np.full((m, 1, 1), float(v))
    return xs, vs


def test_tv_identical_ensembles_is_exactly_zero(harmonic_lyap):
    rng = np.random.default_rng(1)
    xs = rng.normal(size=(200, 1, 1))
    vs = rng.normal(size=(200, 1, 1))
    assert weighted_tv_estimate(xs, vs, xs, vs, harmonic_lyap) == 0.0


def test_tv_disjoint_atoms_sum_their_weights(harmonic_lyap):
    # two point masses in different histogram bins: the estimate is exactly
    # V(a) + V(b), the total mass of the (unsigned) difference measure
    xa, va = atoms(0.3, 0.1)
    xb, vb = atoms(1.5, -0.2)
    wa = float(harmonic_lyap.value(xa[:1], va[:1])[0])
    wb = float(harmonic_lyap.value(xb[:1], vb[:1])[0])
    tv = weighted_tv_estimate(xa, va, xb, vb, harmonic_lyap, bins=256)
    assert tv == pytest.approx(wa + wb, rel=1e-12)


def test_tv_symmetry_and_range(harmonic_lyap):
    rng = np.random.default_rng(2)
    xa, va = rng.normal(size=(300, 1, 1)), rng.normal(size=(300, 1, 1))
    xb, vb = rng.normal(1.0, 1.0, size=(300, 1, 1)), rng.normal(size=(300, 1, 1))
    ab = weighted_tv_estimate(xa, va, xb, vb, harmonic_lyap)
    ba = weighted_tv_estimate(xb, vb, xa, va, harmonic_lyap)
    assert ab == pytest.approx(ba, rel=1e-12)
    cap = float(np.mean(harmonic_lyap.value(xa, va)) + np.mean(harmonic_lyap.value(xb, vb)))
    assert 0.0 < ab <= cap + 1e-9


def test_tv_separated_clouds_saturate(harmonic_lyap):
    # clouds far apart in velocity share no bins, so the estimate approaches
    # its upper bound mean_A V + mean_B V
    rng = np.random.default_rng(3)
    xa, va = 0.1 * rng.normal(size=(400, 1, 1)), 0.1 * rng.normal(size=(400, 1, 1))
    xb, vb = 0.1 * rng.normal(size=(400, 1, 1)), 30.0 + 0.1 * rng.normal(size=(400, 1, 1))
    tv = weighted_tv_estimate(xa, va, xb, vb, harmonic_lyap, bins=32)
    cap = float(np.mean(harmonic_lyap.value(xa, va)) + np.mean(harmonic_lyap.value(xb, vb)))
    assert tv > 0.85 * cap
    assert tv <= cap + 1e-9


def test_tv_rejects_empty_ensemble(harmonic_lyap):
    xs, vs = atoms(0.0, 0.0, m=5)
    with pytest.raises(ValueError, match="nonempty"):
        weighted_tv_estimate(xs[:0], vs[:0], xs, vs, harmonic_lyap)


# ----------------------------------------------------- ensemble observables


def test_empirical_moment_matches_direct_average(harmonic_lyap):
    sys = SystemSpec(
        n_particles=1, dim=1, gamma=1.0, potential=harmonic_lyap.potential,
        noise=NoiseSpec(per_particle_alpha=(1.5,)), scheme="tamed_euler", h=1e-3,
    )
    z0 = PhaseState(x=np.array([[0.0]]), v=np.array([[2.0]]))
    batch = simulate(sys, z0, t_final=1.0, snapshots=[0.5, 1.0], seed=4, n_trajectories=8)
    curve = empirical_moment(batch, harmonic_lyap)
    assert np.array_equal(curve.times, batch.times)
    for j in range(2):
        direct = float(np.mean(harmonic_lyap.value(batch.xs[j], batch.vs[j])))
        assert curve.values[j] == pytest.approx(direct, rel=1e-12)
    sub = empirical_moment(batch, harmonic_lyap, times=[1.0])
    assert sub.values[0] == pytest.approx(curve.values[1])
    with pytest.raises(ValueError, match="not present"):
        empirical_moment(batch, harmonic_lyap, times=[0.75])


# ------------------------------------------------------- two-start decay


def oscillator_system(harmonic_lyap):
    return SystemSpec(
        n_particles=1, dim=1, gamma=1.0, potential=harmonic_lyap.potential,
        noise=NoiseSpec(per_particle_alpha=(1.5,)), scheme="tamed_euler", h=1e-3,
    )


def test_two_start_curve_shape_and_determinism(harmonic_lyap):
    sys = oscillator_system(harmonic_lyap)
    cold = PhaseState(x=np.array([[0.0]]), v=np.array([[0.0]]))
    hot = PhaseState(x=np.array([[0.0]]), v=np.array([[40.0]]))
    a = two_start_tv_curve(sys, cold, hot, [1.0, 2.0, 3.0], seed=9, n_trajectories=32, lyap=harmonic_lyap)
    b = two_start_tv_curve(sys, cold, hot, [1.0, 2.0, 3.0], seed=9, n_trajectories=32, lyap=harmonic_lyap)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (3,)
    assert np.all(a.values >= 0.0)
    # memory of the hot start fades
    assert a.values[-1] < a.values[0]


def test_two_start_rate_stable_in_ensemble_size(harmonic_lyap):
    # the fitted mixing rate is a property of the dynamics, not of the Monte
    # Carlo budget: ensembles of 128/256/512 trajectories must agree
    sys = oscillator_system(harmonic_lyap)
    cold = PhaseState(x=np.array([[0.0]]), v=np.array([[0.0]]))
    hot = PhaseState(x=np.array([[0.0]]), v=np.array([[40.0]]))
    times = [1.0, 2.0, 3.0, 4.0, 6.0]
    rates = []
    for m in (128, 256, 512):
        curve = two_start_tv_curve(sys, cold, hot, times, seed=7, n_trajectories=m, lyap=harmonic_lyap)
        # shared increments let the ensembles coalesce exactly; drop any
        # trailing zeros before fitting in log space
        nz = np.nonzero(curve.values > 0.0)[0]
        lam, r2, _ = fit_decay_rate(curve.times[: nz[-1] + 1], curve.values[: nz[-1] + 1])
        assert lam > 0.0
        assert r2 > 0.9
        rates.append(lam)
    mean_rate = float(np.mean(rates))
    for lam in rates:
        assert abs(lam - mean_rate) < 0.3 * mean_rate, rates


# ------------------------------------------------------------ Gibbs oracle


def test_gibbs_oracle_rejects_heavy_tailed_noise(harmonic_lyap):
    sys = oscillator_system(harmonic_lyap)
    cold = PhaseState(x=np.array([[0.0]]), v=np.array([[0.0]]))
    batch = simulate(sys, cold, t_final=0.1, snapshots=[0.1], seed=0, n_trajectories=4)
    with pytest.raises(UnsupportedModelError, match="Brownian"):
        gibbs_oracle_check(batch, sys)
