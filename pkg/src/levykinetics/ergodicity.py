"""Empirical ergodicity diagnostics.

Exponential ergodicity in a V-weighted total-variation norm is a statement
about ||P_t(z, .) - mu||_V, which no simulation can evaluate directly (the
invariant measure mu of the stable-noise dynamics has no closed form).  What
*can* be measured:

* the ensemble average of the Lyapunov observable along trajectories
  (``empirical_moment``) — a bounded curve is the crudest evidence of
  tightness, a converging one of equilibration;
* a weighted TV distance between two coupled ensembles started far apart
  (``weighted_tv_estimate``); under common random numbers its decay tracks
  the ergodic mixing rate;
* the decay exponent itself, read off a log-linear least-squares fit
  (``fit_decay_rate``);
* in the Brownian special case the invariant density is exp(-2 gamma H)/Z
  up to normalization, so moments have quadrature oracles and the whole
  integrator/potential stack can be validated end to end
  (``gibbs_oracle_check``).

The TV estimator histograms both ensembles on a compact window (an
H-sublevel set covering at least 99% of both) and accounts for the
windowless mass through the gap between the V-weighted tail moments of the
two ensembles.  Dropping the tails silently would hide exactly the heavy
tails that distinguish stable noise; summing their masses instead of
differencing them would pin the estimate at a floor of roughly
0.02 x (mean tail V) that never decays, swamping the mixing signal the
two-start diagnostic exists to measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .dynamics import PhaseState, SystemSpec, TrajectoryBatch, simulate
from .errors import EstimationError, UnsupportedModelError
from .lyapunov import LyapunovModel
from .potentials import min_pair_distance

__all__ = [
    "DecayCurve",
    "empirical_moment",
    "weighted_tv_estimate",
    "fit_decay_rate",
    "gibbs_oracle_check",
    "two_start_tv_curve",
]


@dataclass
class DecayCurve:
    """A time series of diagnostic values with an optional fitted decay rate."""

    times: np.ndarray
    values: np.ndarray
    lambda_hat: Optional[float] = None
    r_squared: Optional[float] = None
    fit_window: Optional[tuple] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same length")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")


def empirical_moment(
    batch: TrajectoryBatch, lyap: LyapunovModel, times: Optional[Sequence[float]] = None
) -> DecayCurve:
    """Ensemble average of the Lyapunov observable at the requested times."""
    if times is None:
        idx = np.arange(len(batch.times))
    else:
        idx = []
        for t in times:
            hits = np.nonzero(np.isclose(batch.times, t, rtol=0.0, atol=1e-9))[0]
            if hits.size == 0:
                raise ValueError(f"snapshot time {t} not present in the batch")
            idx.append(int(hits[0]))
        idx = np.asarray(idx)
    vals = np.array([float(np.mean(lyap.value(batch.xs[j], batch.vs[j]))) for j in idx])
    return DecayCurve(times=batch.times[idx], values=vals)


# --------------------------------------------------------------------------
# weighted TV between ensembles
# --------------------------------------------------------------------------


def _features(xs: np.ndarray, vs: np.ndarray, lyap: LyapunovModel) -> np.ndarray:
    """Histogram coordinates: the full state when 2Nd <= 4, else a
    3-dimensional projection (H, |v|, min pair distance) — |x| replaces the
    pair distance for a single particle."""
    m = len(xs)
    n, d = xs.shape[-2], xs.shape[-1]
    if 2 * n * d <= 4:
        return np.concatenate([xs.reshape(m, -1), vs.reshape(m, -1)], axis=1)
    u = lyap.potential.potential(xs)
    h = 0.5 * np.sum(vs**2, axis=(-2, -1)) + u
    speed = np.sqrt(np.sum(vs**2, axis=(-2, -1)))
    if n >= 2:
        third = min_pair_distance(xs)
    else:
        third = np.sqrt(np.sum(xs**2, axis=(-2, -1)))
    return np.stack([h, speed, third], axis=1)


def _hamiltonian(xs: np.ndarray, vs: np.ndarray, lyap: LyapunovModel) -> np.ndarray:
    return 0.5 * np.sum(vs**2, axis=(-2, -1)) + lyap.potential.potential(xs)


def weighted_tv_estimate(
    xs_a: np.ndarray,
    vs_a: np.ndarray,
    xs_b: np.ndarray,
    vs_b: np.ndarray,
    lyap: LyapunovModel,
    bins: Optional[int] = None,
) -> float:
    """V-weighted total-variation distance estimate between two ensembles.

    sum over bins of |p_A - p_B| (mean V in bin), over a compact window
    given by the smallest H-sublevel set containing at least 99% of both
    ensembles, plus the V-weighted tail-moment gap
    |tail mass A (mean tail V of A) - tail mass B (mean tail V of B)|.
    Lies in [0, mean_A V + mean_B V]; symmetric in the ensembles; exactly
    zero for identical ensembles.
    """
    if len(xs_a) == 0 or len(xs_b) == 0:
        raise ValueError("both ensembles must be nonempty")
    ha = _hamiltonian(xs_a, vs_a, lyap)
    hb = _hamiltonian(xs_b, vs_b, lyap)
    # smallest sample-supported sublevel covering >= 99% of each ensemble
    def q99(h):
        k = int(np.ceil(0.99 * len(h))) - 1
        return float(np.sort(h)[k])

    cutoff = max(q99(ha), q99(hb))
    in_a = ha <= cutoff
    in_b = hb <= cutoff

    fa = _features(xs_a, vs_a, lyap)
    fb = _features(xs_b, vs_b, lyap)
    va = np.asarray(lyap.value(xs_a, vs_a), dtype=float)
    vb = np.asarray(lyap.value(xs_b, vs_b), dtype=float)

    n_min = min(len(xs_a), len(xs_b))
    k_bins = bins if bins is not None else max(2, int(np.ceil(n_min ** (1.0 / 3.0))))

    windowed = np.concatenate([fa[in_a], fb[in_b]], axis=0)
    edges = []
    for c in range(windowed.shape[1]):
        lo, hi = float(np.min(windowed[:, c])), float(np.max(windowed[:, c]))
        if hi <= lo:
            hi = lo + 1.0
        pad = 1e-9 * (hi - lo)
        edges.append(np.linspace(lo - pad, hi + pad, k_bins + 1))

    counts_a, _ = np.histogramdd(fa[in_a], bins=edges)
    counts_b, _ = np.histogramdd(fb[in_b], bins=edges)
    p_a = counts_a / len(xs_a)
    p_b = counts_b / len(xs_b)

    both = np.concatenate([fa[in_a], fb[in_b]], axis=0)
    wboth = np.concatenate([va[in_a], vb[in_b]])
    counts_all, _ = np.histogramdd(both, bins=edges)
    weight_sum, _ = np.histogramdd(both, bins=edges, weights=wboth)
    mean_v = np.divide(weight_sum, counts_all, out=np.zeros_like(weight_sum), where=counts_all > 0)

    window_term = float(np.sum(np.abs(p_a - p_b) * mean_v))

    tail_moment_a = float(np.sum(va[~in_a])) / len(xs_a)
    tail_moment_b = float(np.sum(vb[~in_b])) / len(xs_b)
    return window_term + abs(tail_moment_a - tail_moment_b)


# --------------------------------------------------------------------------
# rate fitting
# --------------------------------------------------------------------------


def fit_decay_rate(curve, values: Optional[Sequence[float]] = None, noise_floor: float = 0.0):
    """Least-squares exponential rate from a decay curve.

    Accepts either a DecayCurve or (times, values).  Fits log(value) against
    t on the longest suffix whose values all exceed ``noise_floor``; needs at
    least 4 points.  Returns (lambda_hat, r_squared, (t_start, t_end)) with
    the sign convention that decay gives a positive rate; a DecayCurve
    argument also gets its fit fields filled in.
    """
    if isinstance(curve, DecayCurve):
        times, vals = curve.times, curve.values
    else:
        times = np.asarray(curve, dtype=float)
        vals = np.asarray(values, dtype=float)
    ok = vals > max(noise_floor, 0.0)
    # longest suffix entirely above the floor
    bad = np.nonzero(~ok)[0]
    start = int(bad[-1]) + 1 if bad.size else 0
    t_fit, v_fit = times[start:], vals[start:]
    if len(v_fit) < 4:
        raise EstimationError(
            f"need at least 4 values above the noise floor to fit a rate, have {len(v_fit)}"
        )
    logs = np.log(v_fit)
    slope, intercept = np.polyfit(t_fit, logs, 1)
    pred = slope * t_fit + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    if ss_tot > 0.0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    lam = -float(slope)
    window = (float(t_fit[0]), float(t_fit[-1]))
    if isinstance(curve, DecayCurve):
        curve.lambda_hat = lam
        curve.r_squared = float(r2)
        curve.fit_window = window
    return lam, float(r2), window


# --------------------------------------------------------------------------
# Brownian-limit Gibbs oracle
# --------------------------------------------------------------------------


def _gibbs_potential_moment(model, gamma: float, l_box: float):
    """Quadrature of E U under density ∝ exp(-2 gamma U) over [-L, L]^{Nd}."""
    ndim = model.n_particles * model.dim

    def u_flat(*coords):
        x = np.asarray(coords, dtype=float).reshape(model.n_particles, model.dim)
        u = float(model.potential(x))
        return u

    if ndim == 1:

        def dens(x):
            u = u_flat(x)
            return np.exp(-2.0 * gamma * u)

        z, _ = integrate.quad(dens, -l_box, l_box)
        num, _ = integrate.quad(lambda x: u_flat(x) * dens(x), -l_box, l_box)
        return num / z
    if ndim > 4:
        raise UnsupportedModelError(
            f"Gibbs quadrature oracle supports N*d <= 4, got {ndim}"
        )
    ranges = [(-l_box, l_box)] * ndim

    def dens(*coords):
        return float(np.exp(-2.0 * gamma * u_flat(*coords)))

    z, _ = integrate.nquad(dens, ranges, opts={"epsabs": 1e-8, "epsrel": 1e-8})
    num, _ = integrate.nquad(
        lambda *c: u_flat(*c) * dens(*c), ranges, opts={"epsabs": 1e-8, "epsrel": 1e-8}
    )
    return num / z


def gibbs_oracle_check(
    batch: TrajectoryBatch,
    sys: SystemSpec,
    burn_in: float = 0.25,
    l_box: Optional[float] = None,
) -> dict:
    """Compare an equilibrated Brownian-mode ensemble against the invariant
    density proportional to exp(-2 gamma (|v|^2/2 + U(x))).

    Velocity marginals are exactly Gaussian with E|v_i|^2 = d/(2 gamma); the
    potential moment comes from numerical quadrature, never a hand formula.
    z-scores use the across-trajectory spread of time-averaged statistics.
    """
    if sys.noise is None or not sys.noise.all_brownian:
        raise UnsupportedModelError("Gibbs oracle applies to Brownian mode (all alpha = 2) only")
    t_min = burn_in * float(batch.times[-1])
    keep = batch.times >= t_min
    if not np.any(keep):
        raise ValueError("burn-in removed every snapshot")
    xs = batch.xs[keep]  # (S, M, N, d)
    vs = batch.vs[keep]

    # per-trajectory time averages -> across-trajectory stderr
    v2_traj = np.mean(np.sum(vs**2, axis=-1), axis=(0, 2))  # (M,)
    u_traj = np.mean(sys.potential.potential(xs), axis=0)  # (M,)
    m = v2_traj.shape[0]

    e_v2 = float(np.mean(v2_traj))
    se_v2 = float(np.std(v2_traj, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    oracle_v2 = sys.dim / (2.0 * sys.gamma)

    if l_box is None:
        if sys.potential.confinement is None:
            raise UnsupportedModelError(
                "Gibbs quadrature needs a confining term (or an explicit l_box)"
            )
        c0 = sys.potential.confinement.c0
        p = sys.potential.confinement.exponent
        l_box = (20.0 / (2.0 * sys.gamma * c0)) ** (1.0 / p) + 1.0
    e_u = float(np.mean(u_traj))
    se_u = float(np.std(u_traj, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    oracle_u = float(_gibbs_potential_moment(sys.potential, sys.gamma, l_box))

    # separability: x- and v-statistics should be uncorrelated under the
    # product-form invariant density
    u_flat_samples = sys.potential.potential(xs).ravel()
    v2_flat_samples = np.sum(vs**2, axis=(-2, -1)).ravel()
    corr = float(np.corrcoef(u_flat_samples, v2_flat_samples)[0, 1])

    return {
        "velocity_moment": e_v2,
        "velocity_moment_oracle": oracle_v2,
        "velocity_moment_stderr": se_v2,
        "velocity_moment_z": (e_v2 - oracle_v2) / se_v2 if se_v2 and np.isfinite(se_v2) else float("nan"),
        "potential_moment": e_u,
        "potential_moment_oracle": oracle_u,
        "potential_moment_stderr": se_u,
        "potential_moment_z": (e_u - oracle_u) / se_u if se_u and np.isfinite(se_u) else float("nan"),
        "xv_correlation": corr,
        "n_trajectories": int(m),
        "n_snapshots": int(xs.shape[0]),
        "burn_in_time": float(t_min),
    }


# --------------------------------------------------------------------------
# two-start mixing diagnostic
# --------------------------------------------------------------------------


def two_start_tv_curve(
    sys: SystemSpec,
    z_a: PhaseState,
    z_b: PhaseState,
    times: Sequence[float],
    seed: int,
    n_trajectories: int,
    lyap: LyapunovModel,
    bins: Optional[int] = None,
) -> DecayCurve:
    """Weighted-TV decay between ensembles from two starts under shared noise.

    Both ensembles run with the same seed, hence identical jump increments
    (common random numbers): the distance between them then measures memory
    of the initial condition rather than independent sampling noise.
    """
    times = sorted(float(t) for t in times)
    t_final = times[-1]
    batch_a = simulate(sys, z_a, t_final, times, seed, n_trajectories)
    batch_b = simulate(sys, z_b, t_final, times, seed, n_trajectories)
    vals = []
    for j in range(len(batch_a.times)):
        vals.append(
            weighted_tv_estimate(
                batch_a.xs[j], batch_a.vs[j], batch_b.xs[j], batch_b.vs[j], lyap, bins=bins
            )
        )
    return DecayCurve(times=np.asarray(batch_a.times), values=np.asarray(vals))
