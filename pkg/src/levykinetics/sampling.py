"""Stratified state sampling for assumption checks, sandwich tests and drift scans.

The checkers and the drift verifier all need scans that hit the proofs' hard
regions: large velocities, large confinement energy, and — for interacting
models — near-singular pair separations.  Plain Gaussian clouds essentially
never visit those, so samplers here cycle deterministically through strata:

* Gaussian clouds at several length scales,
* configurations with one pair pinned at a prescribed separation, walking a
  log-spaced ladder of distances,
* far-field configurations with one particle sent to a large radius,

and, for phase states, velocity shells over several speed scales (including
zero).  Every sampler is a plain callable ``sampler(n) -> array`` so the
check operations stay agnostic of the construction.
"""

from __future__ import annotations

import numpy as np

from .potentials import PotentialModel
from .rng import RngStream

__all__ = [
    "make_configuration_sampler",
    "make_state_sampler",
    "drift_scan_states",
    "default_pair_ladder",
]


def default_pair_ladder(lo: float = 1e-4, hi: float = 10.0, count: int = 24) -> np.ndarray:
    """Log-spaced pair-separation ladder used by the stratified samplers."""
    return np.geomspace(lo, hi, count)


def _unit_vectors(rng: RngStream, n: int, d: int) -> np.ndarray:
    g = rng.normal(size=(n, d))
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    return g / norms


def make_configuration_sampler(
    n_particles: int,
    dim: int,
    rng: RngStream,
    cloud_scales=(0.5, 2.0, 8.0),
    pair_distances=None,
    far_radii=(10.0, 30.0),
):
    """Return ``sampler(n) -> (n, N, d)`` cycling through position strata."""
    if pair_distances is None:
        pair_distances = default_pair_ladder()
    pair_distances = np.asarray(pair_distances, dtype=float)

    strata = [("cloud", s) for s in cloud_scales]
    if n_particles >= 2 and len(pair_distances):
        strata.append(("pair", None))
    strata.append(("far", None))
    pair_counter = [0]

    def sampler(n: int) -> np.ndarray:
        xs = rng.normal(size=(n, n_particles, dim))
        kinds = [strata[m % len(strata)] for m in range(n)]
        for m, (kind, scale) in enumerate(kinds):
            if kind == "cloud":
                xs[m] *= scale
            elif kind == "pair":
                dist = pair_distances[pair_counter[0] % len(pair_distances)]
                pair_counter[0] += 1
                xs[m] *= 1.5
                xs[m, 1] = xs[m, 0] + dist * _unit_vectors(rng, 1, dim)[0]
            else:  # far
                radius = far_radii[m % len(far_radii)]
                xs[m, 0] = radius * _unit_vectors(rng, 1, dim)[0]
        return xs

    return sampler


def make_state_sampler(
    model: PotentialModel,
    rng: RngStream,
    velocity_scales=(0.0, 0.5, 2.0, 8.0, 32.0),
    **config_kwargs,
):
    """Return ``sampler(n) -> (xs, vs)`` of admissible stratified phase states."""
    conf_sampler = make_configuration_sampler(
        model.n_particles, model.dim, rng.child(1), **config_kwargs
    )
    vel_rng = rng.child(2)

    def sampler(n: int):
        xs = np.empty((0, model.n_particles, model.dim))
        for _ in range(5):
            cand = conf_sampler(n - len(xs))
            cand = cand[model.admissible(cand)]
            xs = np.concatenate([xs, cand]) if len(xs) else cand
            if len(xs) >= n:
                break
        if len(xs) < n:
            raise RuntimeError("could not draw enough admissible configurations")
        xs = xs[:n]
        vs = vel_rng.normal(size=xs.shape)
        scales = np.array([velocity_scales[m % len(velocity_scales)] for m in range(n)])
        vs *= scales[:, None, None]
        return xs, vs

    return sampler


def drift_scan_states(
    model: PotentialModel,
    rng: RngStream,
    n_states: int = 500,
    pair_floor: float = 1e-3,
    pair_ceiling: float = 3.0,
    velocity_scales=(0.0, 0.5, 2.0, 8.0, 32.0),
):
    """Stratified scan for drift certification, pair distances down to ``pair_floor``."""
    ladder = (
        np.geomspace(pair_floor, pair_ceiling, 16) if model.n_particles >= 2 else None
    )
    sampler = make_state_sampler(
        model,
        rng,
        velocity_scales=velocity_scales,
        pair_distances=ladder,
    )
    return sampler(n_states)
