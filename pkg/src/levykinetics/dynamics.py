"""Time integration of the kinetic system and deterministic control synthesis.

The state is (x, v) with x the particle configuration and v the velocities;
positions follow dx = v dt and velocities feel friction, the potential force
and a jump increment:

    dv = -(gamma v + grad U(x)) dt + dL.

Near a singular potential the drift is unbounded, so plain explicit Euler
explodes; the default scheme tames the drift by G -> G/(1 + h|G|), and any
proposed position that leaves the admissible domain (or dips below a hard
minimum pair distance) is rejected and retried with a geometrically reduced
step.  Jumps use exact stable sampling over the elapsed time — no small-jump
diffusion surrogate.

One deliberate convention break: particles flagged Brownian (alpha_i = 2)
receive velocity kicks ~ N(0, h I) per step — unit diffusion, so that the
invariant density of the limit dynamics is proportional to
exp(-2 gamma (|v|^2/2 + U)) and the Gibbs cross-checks in the ergodicity
module have clean closed forms.  The stable sampler's alpha = 2 endpoint has
variance 2t instead; the noise module documents the same convention choice.

The second half of the module constructs smooth controls driving the
noise-free system between two states: a quintic Hermite plan for the
positions (with greedily inserted via-points to keep pair distances safe),
then the control read off from the velocity line of the ODE.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, PlanningError, SimulationStuckError
from .noise import NoiseSpec, sample_isotropic_stable
from .potentials import PotentialModel, min_pair_distance
from .rng import RngStream

__all__ = [
    "PhaseState",
    "SystemSpec",
    "Rejected",
    "TrajectoryBatch",
    "ControlPath",
    "step",
    "simulate",
    "synthesize_control",
    "integrate_controlled",
]

SCHEMES = ("tamed_euler", "adaptive_euler", "exact_ou_splitting")


@dataclass(frozen=True)
class PhaseState:
    """One point of the phase space: configuration x and velocities v, (N, d)."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if x.shape != v.shape or x.ndim != 2:
            raise ValueError(f"x and v must both have shape (N, d), got {x.shape}, {v.shape}")


@dataclass(frozen=True)
class SystemSpec:
    """Full description of the dynamics to integrate.

    ``min_pair_guard`` is the hard floor under which a proposed configuration
    is rejected outright (floating point never hits an exact collision, so
    admissibility alone would not protect the integrator).
    ``adaptive_guard`` bounds |G| h per substep of the adaptive scheme.
    """

    n_particles: int
    dim: int
    gamma: float
    potential: PotentialModel
    noise: Optional[NoiseSpec]  # None runs the noise-free (deterministic) dynamics
    scheme: str = "tamed_euler"
    h: float = 1e-3
    min_pair_guard: float = 1e-6
    adaptive_guard: float = 1.0
    max_rejections: int = 40

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError(f"friction gamma must be positive, got {self.gamma}")
        if self.h <= 0.0:
            raise ValueError(f"step size must be positive, got {self.h}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.potential.n_particles != self.n_particles or self.potential.dim != self.dim:
            raise ValueError("potential shape disagrees with (n_particles, dim)")
        if self.noise is not None and self.noise.n_particles != self.n_particles:
            raise ValueError(
                f"noise spec carries {self.noise.n_particles} particles, system has {self.n_particles}"
            )


@dataclass(frozen=True)
class Rejected:
    """Returned by ``step`` when the proposal left the admissible domain."""

    reason: str


@dataclass
class TrajectoryBatch:
    """Ensemble snapshots: xs and vs have shape (n_times, M, N, d)."""

    times: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    seed: int
    scheme: str
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def n_trajectories(self) -> int:
        return self.xs.shape[1]


# --------------------------------------------------------------------------
# single-step integrators
# --------------------------------------------------------------------------


def _check_admissible(model: PotentialModel, x: np.ndarray, guard: float) -> bool:
    return bool(np.all(model.admissible(x))) and float(np.min(min_pair_distance(x))) > guard


def step(z: PhaseState, sys: SystemSpec, dL: np.ndarray, h: Optional[float] = None):
    """One integration step; returns the new PhaseState or ``Rejected``.

    ``dL`` is the jump increment for the whole step, shape (N, d).  Raises
    DomainError if the *input* state is already inadmissible — that is a
    caller bug, distinct from an honest rejection of the proposal.
    """
    h = sys.h if h is None else h
    model = sys.potential
    if not _check_admissible(model, z.x, 0.0):
        raise DomainError("input state outside the admissible domain")
    dL = np.asarray(dL, dtype=float)

    if sys.scheme == "tamed_euler":
        g = sys.gamma * z.v + model.gradient(z.x)
        tame = 1.0 + h * float(np.linalg.norm(g))
        v_new = z.v - h * g / tame + dL
        x_new = z.x + z.v * h
    elif sys.scheme == "exact_ou_splitting":
        v_new = np.exp(-sys.gamma * h) * z.v - h * model.gradient(z.x) + dL
        x_new = z.x + z.v * h
    else:  # adaptive_euler
        x_new, v_new = z.x, z.v
        remaining = h
        while remaining > 1e-15 * h:
            g = sys.gamma * v_new + model.gradient(x_new)
            h_sub = remaining
            norm_g = float(np.linalg.norm(g))
            while norm_g * h_sub > sys.adaptive_guard:
                h_sub *= 0.5
            x_next = x_new + v_new * h_sub
            if not _check_admissible(model, x_next, sys.min_pair_guard):
                return Rejected("adaptive substep left the admissible domain")
            v_new = v_new - h_sub * g
            x_new = x_next
            remaining -= h_sub
        v_new = v_new + dL
        return PhaseState(x=x_new, v=v_new)

    if not _check_admissible(model, x_new, sys.min_pair_guard):
        return Rejected("proposed configuration left the admissible domain")
    return PhaseState(x=x_new, v=v_new)


def _propose_batch(sys: SystemSpec, xs: np.ndarray, vs: np.ndarray, dL: np.ndarray, h: float):
    """Vectorized proposal for an (M, N, d) ensemble (tamed / exact OU only)."""
    model = sys.potential
    if sys.scheme == "tamed_euler":
        g = sys.gamma * vs + model.gradient(xs)
        tame = 1.0 + h * np.sqrt(np.sum(g * g, axis=(-2, -1), keepdims=True))
        vs_new = vs - h * g / tame + dL
    else:
        vs_new = np.exp(-sys.gamma * h) * vs - h * model.gradient(xs) + dL
    xs_new = xs + vs * h
    return xs_new, vs_new


def _sample_jump_block(sys: SystemSpec, stream: RngStream, m: int, h: float) -> np.ndarray:
    """Jump increments for m trajectories over time h, shape (m, N, d).

    Brownian particles get unit-diffusion kicks N(0, h I); stable particles
    get exact isotropic alpha-stable increments; a None noise spec means the
    deterministic dynamics (all zeros).
    """
    out = np.zeros((m, sys.n_particles, sys.dim))
    if sys.noise is None:
        return out
    for i, alpha in enumerate(sys.noise.per_particle_alpha):
        if alpha == 2.0:
            out[:, i, :] = stream.normal(0.0, np.sqrt(h), size=(m, sys.dim))
        else:
            out[:, i, :] = sample_isotropic_stable(sys.dim, alpha, h, stream, size=m)
    return out


# --------------------------------------------------------------------------
# ensemble simulation
# --------------------------------------------------------------------------


def simulate(
    sys: SystemSpec,
    z0: PhaseState,
    t_final: float,
    snapshots: Sequence[float],
    seed: int,
    n_trajectories: int = 1,
) -> TrajectoryBatch:
    """Integrate an ensemble of ``n_trajectories`` copies started at ``z0``.

    Noise is keyed by (seed, step) with one row per trajectory, so two
    ensembles run with the same seed from different starts see *identical*
    increments — common random numbers, which the two-start ergodicity
    diagnostic relies on.  Rejected macro steps are completed per-trajectory
    with geometrically reduced substeps and fresh noise keyed by
    (step, trajectory, attempt); more than ``max_rejections`` consecutive
    rejections raises SimulationStuckError.
    """
    if t_final <= 0.0:
        raise ValueError(f"horizon must be positive, got {t_final}")
    model = sys.potential
    if not _check_admissible(model, z0.x, 0.0):
        raise DomainError("initial state outside the admissible domain")
    snaps = np.asarray(sorted(set(float(t) for t in snapshots)))
    if snaps.size == 0:
        raise ValueError("at least one snapshot time is required")
    if snaps[0] < 0.0 or snaps[-1] > t_final + 1e-9:
        raise ValueError("snapshot times must lie in [0, t_final]")

    n_steps = int(round(t_final / sys.h))
    snap_steps = np.minimum(np.round(snaps / sys.h).astype(int), n_steps)
    snap_lookup = {}
    for j, s in zip(snap_steps, snaps):
        snap_lookup.setdefault(int(j), []).append(float(s))

    m = n_trajectories
    xs = np.broadcast_to(z0.x, (m,) + z0.x.shape).copy()
    vs = np.broadcast_to(z0.v, (m,) + z0.v.shape).copy()
    root = RngStream(seed)

    times_out, xs_out, vs_out = [], [], []
    rejections = np.zeros(m, dtype=int)
    max_consecutive = 0

    def record(step_index: int):
        for t_snap in snap_lookup.get(step_index, []):
            times_out.append(t_snap)
            xs_out.append(xs.copy())
            vs_out.append(vs.copy())

    record(0)
    for j in range(n_steps):
        h = sys.h
        dL = _sample_jump_block(sys, root.child("step", j), m, h)
        if sys.scheme == "adaptive_euler":
            ok = np.zeros(m, dtype=bool)  # no batch fast path for the substep loop
            prop_x, prop_v = xs, vs
        else:
            prop_x, prop_v = _propose_batch(sys, xs, vs, dL, h)
            ok = _admissible_mask(model, prop_x, sys.min_pair_guard)
        new_x = np.where(ok[:, None, None], prop_x, xs)
        new_v = np.where(ok[:, None, None], prop_v, vs)
        for traj in np.nonzero(~ok)[0]:
            state, consec = _complete_macro_step(
                sys, PhaseState(xs[traj], vs[traj]), dL[traj], h, root, j, int(traj)
            )
            new_x[traj], new_v[traj] = state.x, state.v
            rejections[traj] += consec
            max_consecutive = max(max_consecutive, consec)
        xs, vs = new_x, new_v
        record(j + 1)

    order = np.argsort(times_out, kind="stable")
    times_arr = np.asarray(times_out)[order]
    keep = np.ones(len(times_arr), dtype=bool)
    keep[1:] = np.diff(times_arr) > 0
    return TrajectoryBatch(
        times=times_arr[keep],
        xs=np.stack(xs_out)[order][keep],
        vs=np.stack(vs_out)[order][keep],
        seed=seed,
        scheme=sys.scheme,
        stats={
            "rejections_total": int(rejections.sum()),
            "rejections_per_trajectory": rejections.tolist(),
            "max_consecutive_rejections": int(max_consecutive),
            "n_steps": n_steps,
        },
    )


def _admissible_mask(model: PotentialModel, xs: np.ndarray, guard: float) -> np.ndarray:
    ok = model.admissible(xs)
    if model.n_particles > 1:
        ok = ok & (min_pair_distance(xs) > guard)
    return np.asarray(ok, dtype=bool).reshape(len(xs))


def _complete_macro_step(
    sys: SystemSpec,
    z: PhaseState,
    dL_full: np.ndarray,
    h: float,
    root: RngStream,
    step_index: int,
    traj: int,
):
    """Finish one macro step for a trajectory whose full-h proposal failed.

    Advances through the interval with geometrically reduced attempts; each
    retry draws fresh noise for its own duration.  Returns (state, number of
    rejections encountered).
    """
    state = z
    remaining = h
    h_try = h
    dL = dL_full
    consec = 0
    total_rejected = 0
    attempt = 0
    while remaining > 1e-12 * h:
        result = step(state, sys, dL, h_try)
        if isinstance(result, Rejected):
            consec += 1
            total_rejected += 1
            if consec > sys.max_rejections:
                raise SimulationStuckError(
                    f"trajectory {traj} stuck at step {step_index}: "
                    f"{consec} consecutive rejections, min pair distance "
                    f"{float(np.min(min_pair_distance(state.x))):.3e}"
                )
            h_try *= 0.5
        else:
            state = result
            remaining -= h_try
            consec = 0
            h_try = remaining
        attempt += 1
        if remaining > 1e-12 * h:
            dL = _sample_jump_block(
                sys, root.child("retry", step_index, traj, attempt), 1, h_try
            )[0]
    return state, total_rejected


# --------------------------------------------------------------------------
# deterministic control synthesis
# --------------------------------------------------------------------------


@dataclass
class ControlPath:
    """A smooth planned path and the control realizing it.

    The plan is piecewise quintic in scaled time; ``breakpoints`` are the
    segment times (including 0 and T) and ``coeffs[k]`` holds segment k's
    polynomial coefficients, shape (6, N, d), in the local variable
    s = (t - t_k)/(t_{k+1} - t_k).  Grid arrays sample the plan and the
    control u (u(0) = 0) for reporting; evaluation inside the integrator
    uses the exact polynomials.
    """

    t_final: float
    breakpoints: np.ndarray
    coeffs: list
    grid_times: np.ndarray
    grid_x: np.ndarray
    grid_v: np.ndarray
    grid_u: np.ndarray
    delta_plan: float
    min_pair_planned: float

    def evaluate(self, t: float):
        """Exact plan values (x, v, a) at time t."""
        return _eval_plan(self.breakpoints, self.coeffs, self.t_final, t)


def _eval_plan(breakpoints, coeffs, t_final, t):
    """Plan values (x, v, a) at time t from the piecewise quintic polynomials."""
    t = float(np.clip(t, 0.0, t_final))
    k = int(np.searchsorted(breakpoints, t, side="right") - 1)
    k = min(max(k, 0), len(coeffs) - 1)
    tau = breakpoints[k + 1] - breakpoints[k]
    s = (t - breakpoints[k]) / tau
    c = coeffs[k]  # (6, N, d)
    powers = s ** np.arange(6)
    x = np.tensordot(powers, c, axes=(0, 0))
    dpow = np.arange(6) * s ** np.concatenate([[0], np.arange(5)])
    v = np.tensordot(dpow, c, axes=(0, 0)) / tau
    ddcoef = np.arange(6) * (np.arange(6) - 1)
    ddpow = ddcoef * s ** np.concatenate([[0, 0], np.arange(4)])
    a = np.tensordot(ddpow, c, axes=(0, 0)) / tau**2
    return x, v, a


def _quintic_coeffs(x0, v0, x1, v1, tau):
    """Quintic Hermite coefficients in s on [0,1], zero endpoint acceleration."""
    delta = x1 - x0
    a = delta - v0 * tau
    b = (v1 - v0) * tau
    c3 = 10.0 * a - 4.0 * b
    c4 = -15.0 * a + 7.0 * b
    c5 = 6.0 * a - 3.0 * b
    zero = np.zeros_like(x0)
    return np.stack([x0, v0 * tau, zero, c3, c4, c5])


def _delta_plan_default(model: PotentialModel) -> float:
    from .potentials import LennardJones

    if isinstance(model.interaction, LennardJones):
        # half the potential-minimum separation of the r^-12 - r^-6 kernel
        return 0.5 * (2.0 * model.interaction.c1 / model.interaction.c2) ** (1.0 / 6.0)
    return 0.1


def synthesize_control(
    z0: PhaseState,
    zT: PhaseState,
    t_final: float,
    sys: SystemSpec,
    delta_plan: Optional[float] = None,
    n_grid: int = 2048,
    max_detours: int = 8,
) -> ControlPath:
    """Plan a smooth path z0 -> zT and the control that drives it.

    Positions follow quintic Hermite segments (zero endpoint acceleration);
    if the plan's minimum pair distance drops below ``delta_plan``, a
    via-point is inserted at the worst time pushing the offending pair to a
    comfortable clearance (grazing exactly delta_plan is dynamically
    unstable), and planning repeats.  The control is read off the velocity
    line: u(t) = v(t) - v(0) + int_0^t (gamma v + grad U(x)) dr.
    """
    if t_final <= 0.0:
        raise ValueError(f"horizon must be positive, got {t_final}")
    model = sys.potential
    for state, name in ((z0, "start"), (zT, "target")):
        if not _check_admissible(model, state.x, 0.0):
            raise DomainError(f"{name} state outside the admissible domain")
    if delta_plan is None:
        delta_plan = _delta_plan_default(model)
    if model.n_particles > 1:
        for state, name in ((z0, "start"), (zT, "target")):
            if float(np.min(min_pair_distance(state.x))) < delta_plan:
                raise PlanningError(
                    f"{name} state has pair distance below delta_plan={delta_plan:.3e}; "
                    "the endpoints are pinned, no detour can fix them"
                )

    anchors_t = [0.0, t_final]
    anchors_x = [z0.x, zT.x]
    anchors_v = [z0.v, zT.v]

    for _ in range(max_detours + 1):
        breakpoints, coeffs = _build_segments(anchors_t, anchors_x, anchors_v)
        path = _sample_plan(breakpoints, coeffs, t_final, n_grid)
        t_grid, x_grid, v_grid, a_grid = path
        if model.n_particles < 2:
            min_pair = np.inf
            break
        pair_d = min_pair_distance(x_grid)
        worst = int(np.argmin(pair_d))
        min_pair = float(pair_d[worst])
        if min_pair >= delta_plan:
            break
        anchors_t, anchors_x, anchors_v = _insert_via(
            anchors_t,
            anchors_x,
            anchors_v,
            t_grid[worst],
            x_grid[worst],
            v_grid[worst],
            delta_plan,
        )
    else:
        raise PlanningError(
            f"no admissible plan after {max_detours} via-point insertions "
            f"(min pair distance {min_pair:.3e} < {delta_plan:.3e})"
        )

    # control from the velocity line, cumulative trapezoid on the fine grid
    grad_u = model.gradient(x_grid)  # (n_grid, N, d)
    integrand = sys.gamma * v_grid + grad_u
    dt = np.diff(t_grid)
    cum = np.zeros_like(v_grid)
    cum[1:] = np.cumsum(
        0.5 * dt[:, None, None] * (integrand[1:] + integrand[:-1]), axis=0
    )
    u_grid = v_grid - v_grid[0] + cum

    return ControlPath(
        t_final=t_final,
        breakpoints=np.asarray(breakpoints),
        coeffs=coeffs,
        grid_times=t_grid,
        grid_x=x_grid,
        grid_v=v_grid,
        grid_u=u_grid,
        delta_plan=float(delta_plan),
        min_pair_planned=float(min_pair),
    )


def _build_segments(anchors_t, anchors_x, anchors_v):
    breakpoints = np.asarray(anchors_t)
    coeffs = []
    for k in range(len(anchors_t) - 1):
        tau = anchors_t[k + 1] - anchors_t[k]
        coeffs.append(
            _quintic_coeffs(anchors_x[k], anchors_v[k], anchors_x[k + 1], anchors_v[k + 1], tau)
        )
    return breakpoints, coeffs


def _sample_plan(breakpoints, coeffs, t_final, n_grid):
    t_grid = np.linspace(0.0, t_final, n_grid + 1)
    xs, vs, accs = [], [], []
    for t in t_grid:
        x, v, a = _eval_plan(breakpoints, coeffs, t_final, float(t))
        xs.append(x)
        vs.append(v)
        accs.append(a)
    return t_grid, np.stack(xs), np.stack(vs), np.stack(accs)


def _insert_via(anchors_t, anchors_x, anchors_v, t_star, x_star, v_star, delta_plan):
    """Add a via configuration at the worst time, pushing the closest pair apart."""
    n = x_star.shape[0]
    best = (np.inf, 0, 1)
    for i in range(n):
        for j in range(i + 1, n):
            r = float(np.linalg.norm(x_star[i] - x_star[j]))
            if r < best[0]:
                best = (r, i, j)
    r, i, j = best
    center = 0.5 * (x_star[i] + x_star[j])
    if r > 1e-12:
        unit = (x_star[i] - x_star[j]) / r
    else:
        # coincident on the plan: deflect perpendicular to the relative velocity
        rel = v_star[i] - v_star[j]
        unit = _any_perpendicular(rel)
    clearance = max(2.5 * delta_plan, 1.5 * r)
    x_via = x_star.copy()
    x_via[i] = center + 0.5 * clearance * unit
    x_via[j] = center - 0.5 * clearance * unit

    ts = list(anchors_t)
    k = int(np.searchsorted(ts, t_star))
    lo, hi = ts[k - 1], ts[k]
    # keep the via comfortably inside its segment
    t_via = float(np.clip(t_star, lo + 0.2 * (hi - lo), lo + 0.8 * (hi - lo)))
    new_t = ts[:k] + [t_via] + ts[k:]
    new_x = list(anchors_x[:k]) + [x_via] + list(anchors_x[k:])
    new_v = list(anchors_v[:k]) + [v_star] + list(anchors_v[k:])
    return new_t, new_x, new_v


def _any_perpendicular(vec: np.ndarray) -> np.ndarray:
    d = vec.shape[-1]
    if d == 1:
        return np.ones(1)
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        out = np.zeros(d)
        out[0] = 1.0
        return out
    unit = vec / norm
    probe = np.zeros(d)
    probe[int(np.argmin(np.abs(unit)))] = 1.0
    perp = probe - (probe @ unit) * unit
    return perp / np.linalg.norm(perp)


def integrate_controlled(z0: PhaseState, cp: ControlPath, sys: SystemSpec, n_steps: int = 4096) -> PhaseState:
    """Integrate the controlled noise-free ODE with RK4 and return the endpoint.

    dx = v dt;  dv = -(gamma v + grad U(x)) dt + du(t), with du/dt evaluated
    exactly from the plan polynomials: u'(t) = a_plan + gamma v_plan +
    grad U(x_plan).
    """
    model = sys.potential

    def du_dt(t):
        x_p, v_p, a_p = cp.evaluate(t)
        return a_p + sys.gamma * v_p + model.gradient(x_p)

    def rhs(t, x, v):
        return v, -(sys.gamma * v + model.gradient(x)) + du_dt(t)

    x, v = z0.x.astype(float).copy(), z0.v.astype(float).copy()
    h = cp.t_final / n_steps
    t = 0.0
    for k in range(n_steps):
        kx1, kv1 = rhs(t, x, v)
        kx2, kv2 = rhs(t + 0.5 * h, x + 0.5 * h * kx1, v + 0.5 * h * kv1)
        kx3, kv3 = rhs(t + 0.5 * h, x + 0.5 * h * kx2, v + 0.5 * h * kv2)
        kx4, kv4 = rhs(t + h, x + h * kx3, v + h * kv3)
        x = x + (h / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
        v = v + (h / 6.0) * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4)
        t += h
        if not np.all(model.admissible(x)):
            raise DomainError(f"controlled path left the admissible domain at t = {t:.6f}")
    return PhaseState(x=x, v=v)
