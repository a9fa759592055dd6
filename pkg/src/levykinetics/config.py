"""TOML run configuration: parsing, validation, and model construction.

A config file has up to seven tables — ``[system]`` (with nested
``[system.potential]`` and ``[system.noise]``), ``[lyapunov]``,
``[quadrature]``, ``[simulation]``, ``[drift]``, ``[diagnose]``,
``[control]``, ``[output]`` — of which only ``[system]`` is mandatory.
``validate_config`` is a total function returning a list of violations;
construction helpers (``build_potential`` and friends) assume a validated
config and raise on genuinely impossible inputs only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

try:
    import tomllib  # Python >= 3.11
except ImportError:  # pragma: no cover - depends on interpreter version
    import tomli as tomllib

from .generator import QuadratureSpec
from .noise import NoiseSpec
from .potentials import (
    Confinement,
    Coulomb,
    LennardJones,
    LogCoulomb,
    PotentialModel,
    PowerLaw,
)

__all__ = [
    "RunConfig",
    "Violation",
    "load_config",
    "validate_config",
    "build_potential",
    "build_noise",
    "build_quadrature",
]

POTENTIAL_KINDS = ("harmonic", "lennard_jones", "coulomb", "log_coulomb", "power_law")


@dataclass
class Violation:
    """One failed validation rule: where, what, and the modeling assumption
    the rule protects."""

    field: str
    rule: str
    assumption: str

    def __str__(self):
        return f"{self.field}: {self.rule} [{self.assumption}]"


@dataclass
class RunConfig:
    """Parsed run configuration with defaults filled in."""

    # [system]
    n_particles: int = 1
    dim: int = 1
    gamma: float = 1.0
    # [system.potential]
    potential_kind: str = "harmonic"
    c0: float = 1.0
    confinement_exponent: float = 2.0
    c1: float = 1.0
    c2: float = 1.0
    power_B: float = 1.0
    power_beta: float = 1.0
    normalization: Optional[str] = None  # default chosen per kind
    # [system.noise]
    alpha: tuple = (2.0,)
    # [lyapunov]
    case: str = "case1"
    theta: float = 0.5
    kappa: Optional[float] = None
    # [quadrature]
    quadrature: dict = field(default_factory=dict)
    # [simulation]
    scheme: str = "tamed_euler"
    h: float = 1e-3
    t_final: float = 1.0
    n_trajectories: int = 1
    snapshots: tuple = ()
    seed: Optional[int] = None
    x0: Optional[list] = None
    v0: Optional[list] = None
    # [drift]
    drift_states: int = 500
    pair_floor: float = 1e-3
    pair_ceiling: float = 3.0
    estimate_samples: int = 4000
    c_cap: Optional[float] = None
    # [diagnose]
    diagnose_times: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)
    diagnose_bins: Optional[int] = None
    x_b: Optional[list] = None
    v_b: Optional[list] = None
    gibbs_check: bool = False
    # [control]
    control_t_final: float = 1.0
    control_x1: Optional[list] = None
    control_v1: Optional[list] = None
    delta_plan: Optional[float] = None
    # [output]
    report_path: str = "report.json"
    csv_path: str = "data.csv"


def _as_alpha_tuple(raw, n_particles: int) -> tuple:
    if isinstance(raw, (int, float)):
        return (float(raw),) * n_particles
    return tuple(float(a) for a in raw)


def load_config(path: str) -> RunConfig:
    """Parse a TOML file into a RunConfig. Raises OSError / TOMLDecodeError
    on unreadable input; field-level problems are left to validate_config."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)

    cfg = RunConfig()
    sys_tbl = raw.get("system", {})
    cfg.n_particles = int(sys_tbl.get("n_particles", cfg.n_particles))
    cfg.dim = int(sys_tbl.get("dim", cfg.dim))
    cfg.gamma = float(sys_tbl.get("gamma", cfg.gamma))

    pot = sys_tbl.get("potential", {})
    cfg.potential_kind = str(pot.get("kind", cfg.potential_kind))
    cfg.c0 = float(pot.get("c0", cfg.c0))
    cfg.confinement_exponent = float(pot.get("exponent", cfg.confinement_exponent))
    cfg.c1 = float(pot.get("c1", cfg.c1))
    cfg.c2 = float(pot.get("c2", cfg.c2))
    cfg.power_B = float(pot.get("B", cfg.power_B))
    cfg.power_beta = float(pot.get("beta", cfg.power_beta))
    if "normalization" in pot:
        cfg.normalization = str(pot["normalization"])

    noise = sys_tbl.get("noise", {})
    cfg.alpha = _as_alpha_tuple(noise.get("alpha", 2.0), cfg.n_particles)

    lyap = raw.get("lyapunov", {})
    cfg.case = str(lyap.get("case", cfg.case))
    cfg.theta = float(lyap.get("theta", cfg.theta))
    if "kappa" in lyap:
        cfg.kappa = float(lyap["kappa"])

    cfg.quadrature = dict(raw.get("quadrature", {}))

    sim = raw.get("simulation", {})
    cfg.scheme = str(sim.get("scheme", cfg.scheme))
    cfg.h = float(sim.get("h", cfg.h))
    cfg.t_final = float(sim.get("t_final", cfg.t_final))
    cfg.n_trajectories = int(sim.get("n_trajectories", cfg.n_trajectories))
    cfg.snapshots = tuple(float(t) for t in sim.get("snapshots", ()))
    if "seed" in sim:
        cfg.seed = int(sim["seed"])
    cfg.x0 = sim.get("x0")
    cfg.v0 = sim.get("v0")

    drift = raw.get("drift", {})
    cfg.drift_states = int(drift.get("n_states", cfg.drift_states))
    cfg.pair_floor = float(drift.get("pair_floor", cfg.pair_floor))
    cfg.pair_ceiling = float(drift.get("pair_ceiling", cfg.pair_ceiling))
    cfg.estimate_samples = int(drift.get("estimate_samples", cfg.estimate_samples))
    if "c_cap" in drift:
        cfg.c_cap = float(drift["c_cap"])

    diag = raw.get("diagnose", {})
    cfg.diagnose_times = tuple(float(t) for t in diag.get("times", cfg.diagnose_times))
    if "bins" in diag:
        cfg.diagnose_bins = int(diag["bins"])
    cfg.x_b = diag.get("x_b")
    cfg.v_b = diag.get("v_b")
    cfg.gibbs_check = bool(diag.get("gibbs_check", cfg.gibbs_check))

    ctl = raw.get("control", {})
    cfg.control_t_final = float(ctl.get("t_final", cfg.control_t_final))
    cfg.control_x1 = ctl.get("x1")
    cfg.control_v1 = ctl.get("v1")
    if "delta_plan" in ctl:
        cfg.delta_plan = float(ctl["delta_plan"])

    out = raw.get("output", {})
    cfg.report_path = str(out.get("report", cfg.report_path))
    cfg.csv_path = str(out.get("csv", cfg.csv_path))
    return cfg


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

_MEAN_FIELD_KINDS = ("coulomb", "log_coulomb", "power_law")


def validate_config(cfg: RunConfig) -> List[Violation]:
    """Check every config invariant; returns an empty list iff all hold."""
    out: List[Violation] = []

    def bad(field_name, rule, assumption):
        out.append(Violation(field_name, rule, assumption))

    if cfg.n_particles < 1:
        bad("system.n_particles", f"must be >= 1, got {cfg.n_particles}",
            "the dynamics acts on at least one particle")
    if cfg.dim < 1:
        bad("system.dim", f"must be >= 1, got {cfg.dim}",
            "the state space has positive dimension")
    if cfg.gamma <= 0.0:
        bad("system.gamma", f"friction must be positive, got {cfg.gamma}",
            "dissipation requires strictly positive friction")

    if cfg.potential_kind not in POTENTIAL_KINDS:
        bad("system.potential.kind",
            f"unknown potential kind {cfg.potential_kind!r}; known: {', '.join(POTENTIAL_KINDS)}",
            "the energy must be one of the implemented singular models")
    if cfg.potential_kind == "coulomb" and cfg.dim < 3:
        bad("system.potential.kind", f"coulomb kernel needs dim >= 3, got {cfg.dim}",
            "the Coulomb kernel r^(2-d) is repulsive and integrable only for d >= 3")
    if cfg.potential_kind == "log_coulomb" and cfg.dim != 2:
        bad("system.potential.kind", f"log_coulomb kernel is planar, got dim={cfg.dim}",
            "the logarithmic kernel is the d = 2 Coulomb potential")
    if cfg.c0 <= 0.0:
        bad("system.potential.c0", f"confinement strength must be positive, got {cfg.c0}",
            "the confinement must dominate at large radii")

    if len(cfg.alpha) != cfg.n_particles:
        bad("system.noise.alpha",
            f"{len(cfg.alpha)} stability indices for {cfg.n_particles} particles",
            "each particle carries its own driving noise")
    for i, a in enumerate(cfg.alpha):
        if not (0.0 < a <= 2.0):
            bad(f"system.noise.alpha[{i}]", f"stability index must lie in (0, 2], got {a}",
                "alpha-stable noise is defined for stability indices in (0, 2]")

    if cfg.case not in ("case1", "case2"):
        bad("lyapunov.case", f"must be 'case1' or 'case2', got {cfg.case!r}",
            "exactly two Lyapunov constructions are available")
    min_alpha = min(cfg.alpha) if cfg.alpha else 2.0
    if not (0.0 < cfg.theta):
        bad("lyapunov.theta", f"moment exponent must be positive, got {cfg.theta}",
            "the Lyapunov weight is a positive fractional power of the energy")
    elif cfg.theta >= min_alpha:
        bad("lyapunov.theta",
            f"theta = {cfg.theta} >= min alpha = {min_alpha}",
            "the driving noise only has finite moments of order strictly below the "
            "smallest stability index, so the weighted energy must use theta < min alpha")
    if cfg.case == "case2":
        norm = cfg.normalization or (
            "mean_field" if cfg.potential_kind in _MEAN_FIELD_KINDS else "pairs"
        )
        if cfg.potential_kind not in _MEAN_FIELD_KINDS or norm != "mean_field":
            bad("lyapunov.case",
                f"case2 with potential kind {cfg.potential_kind!r} "
                f"(normalization {norm!r})",
                "the second construction requires that the potential can be written as "
                "confinement plus a mean-field repulsive kernel")

    if cfg.scheme not in ("tamed_euler", "adaptive_euler", "exact_ou_splitting"):
        bad("simulation.scheme", f"unknown scheme {cfg.scheme!r}",
            "only the implemented integrators are admissible")
    if cfg.h <= 0.0:
        bad("simulation.h", f"step size must be positive, got {cfg.h}",
            "explicit time stepping needs a positive step")
    if cfg.t_final <= 0.0:
        bad("simulation.t_final", f"horizon must be positive, got {cfg.t_final}",
            "simulation runs forward in time")
    if cfg.n_trajectories < 1:
        bad("simulation.n_trajectories", f"must be >= 1, got {cfg.n_trajectories}",
            "an ensemble needs at least one trajectory")
    for t in cfg.snapshots:
        if not (0.0 <= t <= cfg.t_final):
            bad("simulation.snapshots", f"snapshot {t} outside [0, {cfg.t_final}]",
                "snapshots must lie inside the simulated horizon")
    return out


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------


def build_potential(cfg: RunConfig) -> PotentialModel:
    conf = Confinement(c0=cfg.c0, exponent=cfg.confinement_exponent)
    kind = cfg.potential_kind
    if kind == "harmonic":
        interaction = None
    elif kind == "lennard_jones":
        interaction = LennardJones(c1=cfg.c1, c2=cfg.c2)
    elif kind == "coulomb":
        interaction = Coulomb(dim=cfg.dim)
    elif kind == "log_coulomb":
        interaction = LogCoulomb()
    elif kind == "power_law":
        interaction = PowerLaw(B=cfg.power_B, beta=cfg.power_beta)
    else:
        raise ValueError(f"unknown potential kind {kind!r}")
    normalization = cfg.normalization or (
        "mean_field" if kind in _MEAN_FIELD_KINDS else "pairs"
    )
    return PotentialModel(
        n_particles=cfg.n_particles,
        dim=cfg.dim,
        confinement=conf,
        interaction=interaction,
        normalization=normalization,
    )


def build_noise(cfg: RunConfig) -> NoiseSpec:
    return NoiseSpec(per_particle_alpha=tuple(cfg.alpha))


def build_quadrature(cfg: RunConfig) -> Optional[QuadratureSpec]:
    if not cfg.quadrature:
        return None
    return QuadratureSpec(**cfg.quadrature)
