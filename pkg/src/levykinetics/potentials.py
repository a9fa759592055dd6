"""Analytic N-particle potentials: confinement plus pairwise radial interaction.

The energy of a configuration ``x = (x^(1), ..., x^(N))``, each particle in
``R^d``, is

    U(x) = sum_i V(x^(i)) + w * sum_{i<j} k(|x^(i) - x^(j)|)

where ``V`` is a confining one-particle term, ``k`` a radial pair profile and
``w`` the pair weight: ``1`` for plain ``sum over i<j`` normalization or
``2/N`` for the mean-field convention ``(1/N) sum over ordered pairs``.

All pair kinds here are singular (repulsive) at zero separation, so the
admissible domain is ``D(U) = {x : all pairwise distances > 0}``.  Outside it
``potential`` returns ``+inf`` — a rejection signal, never arithmetic input —
and derivative evaluations raise :class:`~levykinetics.errors.DomainError`.

Evaluations broadcast over leading batch axes: ``x`` of shape ``(..., N, d)``
yields energies of shape ``(...)``, gradients ``(..., N, d)`` and Hessians
``(..., N*d, N*d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, EstimationError, UnsupportedModelError

__all__ = [
    "Confinement",
    "LennardJones",
    "PowerLaw",
    "Coulomb",
    "LogCoulomb",
    "RadialPerturbation",
    "PotentialModel",
    "AssumptionReport",
    "min_pair_distance",
    "pair_distance_matrix",
    "hilbert_schmidt_norm",
    "check_HU",
    "check_HV_HK",
]


# --------------------------------------------------------------------------
# confinement
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Confinement:
    """One-particle confining term ``V(u) = c0 (1+|u|^2)^(p/2) + phi(u)``.

    The optional perturbation ``phi`` must come with its own analytic
    gradient and Hessian (callables on single points of R^d); it defaults to
    zero.  The exponent is restricted to ``p >= 2`` so that the confinement
    grows at least quadratically.
    """

    c0: float = 1.0
    exponent: float = 2.0
    perturbation: Optional["SmoothPerturbation"] = None

    def __post_init__(self):
        if self.c0 <= 0.0:
            raise ValueError(f"confinement strength must be positive, got {self.c0}")
        if self.exponent < 2.0:
            raise ValueError(f"confinement exponent must be >= 2, got {self.exponent}")

    def value(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        s = 1.0 + np.sum(u * u, axis=-1)
        out = self.c0 * s ** (self.exponent / 2.0)
        if self.perturbation is not None:
            out = out + self._apply(self.perturbation.value, u, scalar=True)
        return out

    def gradient(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        s = 1.0 + np.sum(u * u, axis=-1)
        out = (self.c0 * self.exponent) * s[..., None] ** (self.exponent / 2.0 - 1.0) * u
        if self.perturbation is not None:
            out = out + self._apply(self.perturbation.gradient, u)
        return out

    def hessian(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        d = u.shape[-1]
        s = 1.0 + np.sum(u * u, axis=-1)
        p = self.exponent
        eye = np.eye(d)
        out = (self.c0 * p) * s[..., None, None] ** (p / 2.0 - 1.0) * eye
        out = out + (self.c0 * p * (p - 2.0)) * s[..., None, None] ** (
            p / 2.0 - 2.0
        ) * (u[..., :, None] * u[..., None, :])
        if self.perturbation is not None:
            out = out + self._apply(self.perturbation.hessian, u)
        return out

    @staticmethod
    def _apply(fn: Callable, u: np.ndarray, scalar: bool = False):
        """Map a single-point callable over the leading batch axes of u."""
        if u.ndim == 1:
            return np.asarray(fn(u), dtype=float)
        flat = u.reshape(-1, u.shape[-1])
        vals = np.array([fn(p) for p in flat], dtype=float)
        shape = u.shape[:-1] if scalar else u.shape[:-1] + vals.shape[1:]
        return vals.reshape(shape)


@dataclass(frozen=True)
class SmoothPerturbation:
    """A smooth function of one particle position with supplied derivatives."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]


# --------------------------------------------------------------------------
# pairwise radial kinds: k(r), k'(r), k''(r)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LennardJones:
    """``k(r) = c1 r^-12 - c2 r^-6`` with positive coefficients."""

    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.c1 <= 0.0 or self.c2 < 0.0:
            raise ValueError(f"need c1 > 0, c2 >= 0; got c1={self.c1}, c2={self.c2}")

    def profile(self, r):
        return self.c1 * r**-12.0 - self.c2 * r**-6.0

    def profile_d1(self, r):
        return -12.0 * self.c1 * r**-13.0 + 6.0 * self.c2 * r**-7.0

    def profile_d2(self, r):
        return 156.0 * self.c1 * r**-14.0 - 42.0 * self.c2 * r**-8.0


@dataclass(frozen=True)
class PowerLaw:
    """``k(r) = B r^-beta`` — covers Riesz kernels and generalized cores."""

    B: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.B <= 0.0 or self.beta <= 0.0:
            raise ValueError(f"need B > 0 and beta > 0; got B={self.B}, beta={self.beta}")

    def profile(self, r):
        return self.B * r**-self.beta

    def profile_d1(self, r):
        return -self.B * self.beta * r ** -(self.beta + 1.0)

    def profile_d2(self, r):
        return self.B * self.beta * (self.beta + 1.0) * r ** -(self.beta + 2.0)


@dataclass(frozen=True)
class Coulomb:
    """``k(r) = r^(2-d)`` in ambient dimension d >= 3."""

    dim: int = 3

    def __post_init__(self):
        if self.dim < 3:
            raise ValueError(f"Coulomb kernel needs d >= 3, got d={self.dim}")

    def profile(self, r):
        return r ** (2.0 - self.dim)

    def profile_d1(self, r):
        return (2.0 - self.dim) * r ** (1.0 - self.dim)

    def profile_d2(self, r):
        return (2.0 - self.dim) * (1.0 - self.dim) * r ** (-float(self.dim))


@dataclass(frozen=True)
class LogCoulomb:
    """``k(r) = -log r``, the planar (d = 2) Coulomb kernel."""

    def profile(self, r):
        return -np.log(r)

    def profile_d1(self, r):
        return -1.0 / r

    def profile_d2(self, r):
        return 1.0 / (r * r)


@dataclass(frozen=True)
class RadialPerturbation:
    """Smooth radial addition to a pair profile, with supplied derivatives."""

    profile: Callable[[np.ndarray], np.ndarray]
    profile_d1: Callable[[np.ndarray], np.ndarray]
    profile_d2: Callable[[np.ndarray], np.ndarray]


_CASE2_KINDS = (Coulomb, LogCoulomb)


# --------------------------------------------------------------------------
# configuration geometry helpers
# --------------------------------------------------------------------------


def _pair_geometry(x: np.ndarray):
    """Upper-triangle pair separations: indices, difference vectors, distances."""
    n = x.shape[-2]
    iu, ju = np.triu_indices(n, k=1)
    diff = x[..., iu, :] - x[..., ju, :]
    r = np.linalg.norm(diff, axis=-1)
    return iu, ju, diff, r


def min_pair_distance(x) -> np.ndarray:
    """Minimum over i<j of |x^(i) - x^(j)|; +inf for a single particle."""
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        raise ValueError(f"configuration must have shape (..., N, d), got {x.shape}")
    if x.shape[-2] < 2:
        return np.full(x.shape[:-2], np.inf) if x.ndim > 2 else np.inf
    _, _, _, r = _pair_geometry(x)
    out = r.min(axis=-1)
    return out if out.ndim else float(out)


def pair_distance_matrix(x) -> np.ndarray:
    """Full (..., N, N) distance matrix with +inf on the diagonal."""
    x = np.asarray(x, dtype=float)
    diff = x[..., :, None, :] - x[..., None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    n = x.shape[-2]
    r[..., np.arange(n), np.arange(n)] = np.inf
    return r


def hilbert_schmidt_norm(h: np.ndarray) -> np.ndarray:
    """Frobenius norm over the trailing two (matrix) axes."""
    return np.sqrt(np.sum(np.asarray(h) ** 2, axis=(-2, -1)))


# --------------------------------------------------------------------------
# the model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialModel:
    """Immutable N-particle energy model; all evaluations are pure."""

    n_particles: int
    dim: int
    confinement: Optional[Confinement] = None
    interaction: object = None
    normalization: str = "pairs"
    interaction_perturbation: Optional[RadialPerturbation] = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError(f"need at least one particle, got {self.n_particles}")
        if self.dim < 1:
            raise ValueError(f"need dimension >= 1, got {self.dim}")
        if self.normalization not in ("pairs", "mean_field"):
            raise ValueError(
                f"normalization must be 'pairs' or 'mean_field', got {self.normalization!r}"
            )
        if self.confinement is None and self.interaction is None:
            raise ValueError("model needs a confinement, an interaction, or both")
        if isinstance(self.interaction, Coulomb) and self.interaction.dim != self.dim:
            raise ValueError(
                f"Coulomb kernel dimension {self.interaction.dim} != model dimension {self.dim}"
            )
        if isinstance(self.interaction, LogCoulomb) and self.dim != 2:
            raise ValueError(f"LogCoulomb kernel is planar; model dimension is {self.dim}")
        if self.interaction_perturbation is not None and self.interaction is None:
            raise ValueError("interaction perturbation given without an interaction")

    # -- structural properties ------------------------------------------------

    @property
    def pair_weight(self) -> float:
        """Weight of each unordered pair in the energy."""
        if self.normalization == "pairs":
            return 1.0
        return 2.0 / self.n_particles

    @property
    def has_case2_structure(self) -> bool:
        """True when U decomposes as confinement + mean-field repulsive kernel."""
        return (
            self.confinement is not None
            and isinstance(self.interaction, _CASE2_KINDS)
            and self.normalization == "mean_field"
        )

    def _as_config(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-2:] != (self.n_particles, self.dim):
            raise ValueError(
                f"configuration shape {x.shape} incompatible with "
                f"(N, d) = ({self.n_particles}, {self.dim})"
            )
        return x

    def admissible(self, x) -> np.ndarray:
        """Boolean mask of configurations inside D(U)."""
        x = self._as_config(x)
        finite = np.all(np.isfinite(x), axis=(-2, -1))
        if self.interaction is None or self.n_particles == 1:
            return finite
        return finite & (min_pair_distance(x) > 0.0)

    # -- pair profile with optional perturbation -------------------------------

    def _k(self, r, order: int = 0):
        names = ("profile", "profile_d1", "profile_d2")
        out = getattr(self.interaction, names[order])(r)
        if self.interaction_perturbation is not None:
            out = out + getattr(self.interaction_perturbation, names[order])(r)
        return out

    # -- evaluations ------------------------------------------------------------

    def potential(self, x):
        """U(x) as an extended real; +inf outside D(U)."""
        x = self._as_config(x)
        total = np.zeros(x.shape[:-2])
        if self.confinement is not None:
            total = total + self.confinement.value(x).sum(axis=-1)
        if self.interaction is not None and self.n_particles > 1:
            _, _, _, r = _pair_geometry(x)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                k = self._k(r)
            pair_sum = self.pair_weight * k.sum(axis=-1)
            total = np.where(r.min(axis=-1) > 0.0, total + pair_sum, np.inf)
        return total if total.ndim else float(total)

    def gradient(self, x):
        """Analytic gradient of U, shape (..., N, d).  Raises outside D(U)."""
        x = self._as_config(x)
        self._require_admissible(x)
        g = np.zeros_like(x)
        if self.confinement is not None:
            g = g + self.confinement.gradient(x)
        if self.interaction is not None and self.n_particles > 1:
            iu, ju, diff, r = _pair_geometry(x)
            radial = self.pair_weight * self._k(r, order=1) / r
            contrib = radial[..., None] * diff
            for p in range(len(iu)):
                g[..., iu[p], :] += contrib[..., p, :]
                g[..., ju[p], :] -= contrib[..., p, :]
        return g

    def hessian(self, x):
        """Analytic Hessian of U, shape (..., N*d, N*d); symmetric."""
        x = self._as_config(x)
        self._require_admissible(x)
        n, d = self.n_particles, self.dim
        batch = x.shape[:-2]
        h = np.zeros(batch + (n, d, n, d))
        if self.confinement is not None:
            ch = self.confinement.hessian(x)
            for i in range(n):
                h[..., i, :, i, :] += ch[..., i, :, :]
        if self.interaction is not None and n > 1:
            iu, ju, diff, r = _pair_geometry(x)
            unit = diff / r[..., None]
            proj = unit[..., :, None] * unit[..., None, :]
            eye = np.eye(d)
            block = self.pair_weight * (
                self._k(r, order=2)[..., None, None] * proj
                + (self._k(r, order=1) / r)[..., None, None] * (eye - proj)
            )
            for p in range(len(iu)):
                i, j = iu[p], ju[p]
                b = block[..., p, :, :]
                h[..., i, :, i, :] += b
                h[..., j, :, j, :] += b
                h[..., i, :, j, :] -= b
                h[..., j, :, i, :] -= b
        return h.reshape(batch + (n * d, n * d))

    def _require_admissible(self, x):
        ok = self.admissible(x)
        if not np.all(ok):
            raise DomainError(
                "configuration outside D(U): coincident particles or non-finite coordinates"
            )


# --------------------------------------------------------------------------
# assumption checkers
# --------------------------------------------------------------------------


@dataclass
class AssumptionReport:
    """Outcome of a sampled assumption check, with extracted constants.

    ``passed`` is true iff every sampled margin satisfies its inequality with
    the report's constants (margins here are all of the form
    "constant-side minus sampled-side", so nonnegative means satisfied) and
    the sampled sup was stable under refinement.  ``witnesses`` holds the
    offending configurations when the check fails.
    """

    kind: str
    passed: bool
    sampled_sup: Optional[float]
    constants: dict
    margins: dict
    witnesses: list
    n_samples: int
    model: PotentialModel
    notes: list = field(default_factory=list)


def _admissible_samples(model: PotentialModel, sampler, n: int) -> np.ndarray:
    xs = np.asarray(sampler(n), dtype=float)
    if xs.shape[-2:] != (model.n_particles, model.dim):
        raise ValueError(
            f"sampler produced shape {xs.shape}, expected (*, {model.n_particles}, {model.dim})"
        )
    mask = model.admissible(xs)
    if xs.ndim == 2:
        xs = xs[None]
        mask = np.atleast_1d(mask)
    xs = xs[mask]
    if len(xs) == 0:
        raise ValueError("sampler yielded no admissible configurations")
    return xs


def check_HU(model: PotentialModel, sampler, n: int = 2000) -> AssumptionReport:
    """Sampled check that U(1+|hess U|_HS) <= C_U (1+|grad U|^2) looks bounded.

    The sampled sup of the ratio is reported together with
    ``C_U = 1.05 * sup``; ``passed`` additionally requires the sup to be
    stable under refinement (the sup over an interleaved half-sample must not
    sit far below the full-sample sup, which would indicate the scan is still
    discovering larger ratios).
    """
    xs = _admissible_samples(model, sampler, n)
    u = np.asarray(model.potential(xs))
    g = model.gradient(xs)
    hnorm = hilbert_schmidt_norm(model.hessian(xs))
    gsq = np.sum(g * g, axis=(-2, -1))
    ratio = u * (1.0 + hnorm) / (1.0 + gsq)

    finite = np.isfinite(ratio)
    xs, ratio = xs[finite], ratio[finite]
    if len(ratio) == 0:
        raise ValueError("no finite ratio values among the sampled configurations")

    sup_full = float(np.max(ratio))
    sup_half = float(np.max(ratio[::2]))
    c_u = 1.05 * sup_full
    stable = (sup_full - sup_half) <= 0.5 * (abs(sup_full) + 1e-9)
    passed = bool(np.isfinite(sup_full) and stable)

    order = np.argsort(ratio)[::-1][:5]
    witnesses = [] if passed else [xs[k] for k in order]
    return AssumptionReport(
        kind="HU",
        passed=passed,
        sampled_sup=sup_full,
        constants={"C_U": c_u},
        margins={
            "ratio_margin_min": float(np.min(c_u * (1.0 + gsq[finite]) - u[finite] * (1.0 + hnorm[finite]))),
            "sup_half_sample": sup_half,
        },
        witnesses=witnesses,
        n_samples=len(ratio),
        model=model,
        notes=[] if stable else ["sampled sup not stable under refinement"],
    )


def _case2_single_particle_stats(model: PotentialModel, xs: np.ndarray):
    """Pool particle positions and evaluate V, grad V, |u| at each."""
    us = xs.reshape(-1, model.dim)
    conf = model.confinement
    v = conf.value(us)
    gv = conf.gradient(us)
    radius = np.linalg.norm(us, axis=-1)
    return us, v, gv, radius


def _estimate_HV_constants(v, gv, us, radius):
    """Extract (C_V*, M_V, C_V**, M_V*) from pooled single-particle samples."""
    dot = np.sum(gv * us, axis=-1)
    gnorm = np.linalg.norm(gv, axis=-1)

    # far field: the asymptotically binding region for both (H_V) ratios
    far_cut = max(1.0, float(np.quantile(radius, 0.8)))
    far = radius >= far_cut
    if not np.any(far):
        far = radius >= np.median(radius)
    ratio_quad = v[far] / radius[far] ** 2
    ratio_dot = dot[far] / v[far]
    c_v_star = 0.95 * float(min(ratio_quad.min(), ratio_dot.min()))
    if c_v_star <= 0.0:
        raise EstimationError("confinement does not look quadratically coercive on samples")

    m_v = 1.05 * float(
        max(
            0.0,
            np.max(c_v_star * radius**2 - v),
            np.max(c_v_star * v - dot),
        )
    )

    pos = v > 0.0
    c_v_2star = 1.05 * float(np.max(gnorm[pos] / v[pos]))
    m_v_star = 1.05 * float(max(0.0, np.max(gnorm - c_v_2star * v)))
    return c_v_star, m_v, c_v_2star, m_v_star


def _estimate_HK_constants(perturbed_k, r_k: float = 1.0):
    """Extract (R_K, C_K*) on a dense log grid of radii in (0, R_K]."""
    rs = np.geomspace(1e-4, r_k, 4001)
    k = perturbed_k(rs, 0)
    k1 = perturbed_k(rs, 1)
    if np.any(k < -1e-12):
        raise EstimationError(f"kernel negative inside radius {r_k}")
    pos = k > 1e-12
    ratio = -k1[pos] / k[pos]
    if np.any(ratio <= 0.0):
        raise EstimationError("kernel radial derivative not repulsive inside R_K")
    c_k_star = 0.95 * float(np.min(ratio))
    # boundary: where K ~ 0 the inequality degenerates to k'(r) <= 0
    if np.any(k1[~pos] > 0.0):
        raise EstimationError("kernel not decreasing near the neutral radius")
    return r_k, c_k_star


def _homogeneity_ratios(model: PotentialModel, xs: np.ndarray):
    """Per-configuration LHS/RHS of the triple-sum homogeneity inequality.

    Both sides are negative for repulsive kernels (the RHS sum is
    sum_{i != j} k'(r_ij) < 0), so the admissible constants are
    C <= LHS/RHS pointwise and we report the ratio array.
    """
    n = model.n_particles
    diff = xs[:, :, None, :] - xs[:, None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    np.einsum("mii->mi", r)[:] = 1.0  # placeholder on the diagonal, masked below
    unit = diff / r[..., None]
    k1 = model._k(r, order=1)
    off = ~np.eye(n, dtype=bool)

    grad_k = k1[..., None] * unit  # (m, i, k, d): grad K(x_i - x_k)
    # lhs = sum_i sum_{j != i} sum_{k != i} <unit[i,j], grad_k[i,k]>
    sum_units = np.where(off[None, :, :, None], unit, 0.0).sum(axis=2)  # (m, i, d)
    sum_grads = np.where(off[None, :, :, None], grad_k, 0.0).sum(axis=2)
    lhs = np.einsum("mid,mid->m", sum_units, sum_grads)
    rhs = np.where(off[None, :, :], k1, 0.0).sum(axis=(1, 2))
    return lhs, rhs


def check_HV_HK(model: PotentialModel, sampler, n: int = 2000) -> AssumptionReport:
    """Sampled verification of the confinement/kernel assumptions, with constants.

    Verifies, on samples: the two-sided quadratic-coercivity inequality for V,
    the gradient-domination inequality for V, kernel positivity and radial
    repulsion inside R_K, and the N-particle homogeneity inequality; extracts
    every constant with 0.95/1.05 safety factors so all sampled margins hold
    by construction.
    """
    if not model.has_case2_structure:
        raise UnsupportedModelError(
            "model lacks the confinement + mean-field repulsive-kernel decomposition"
        )
    xs = _admissible_samples(model, sampler, n)
    us, v, gv, radius = _case2_single_particle_stats(model, xs)
    notes: list = []
    constants: dict = {}
    margins: dict = {}
    witnesses: list = []
    passed = True

    try:
        c_v_star, m_v, c_v_2star, m_v_star = _estimate_HV_constants(v, gv, us, radius)
        constants.update(
            {"C_V_star": c_v_star, "M_V": m_v, "C_V_2star": c_v_2star, "M_V_star": m_v_star}
        )
        dot = np.sum(gv * us, axis=-1)
        margins["HV_lower"] = float(np.min(v - c_v_star * radius**2 + m_v))
        margins["HV_upper"] = float(np.min(m_v + dot - c_v_star * v))
        margins["HV_gradient"] = float(
            np.min(c_v_2star * v + m_v_star - np.linalg.norm(gv, axis=-1))
        )
    except EstimationError as exc:
        passed = False
        notes.append(f"HV estimation failed: {exc}")

    try:
        r_k, c_k_star = _estimate_HK_constants(model._k)
        constants.update({"R_K": r_k, "C_K_star": c_k_star})
        rs = np.geomspace(1e-4, r_k, 4001)
        kvals = model._k(rs, 0)
        margins["HK_positivity"] = float(np.min(kvals))
        margins["HK_repulsion"] = float(np.min(-model._k(rs, 1) - c_k_star * kvals))
    except EstimationError as exc:
        passed = False
        notes.append(f"HK estimation failed: {exc}")

    if model.n_particles >= 2:
        lhs, rhs = _homogeneity_ratios(model, xs)
        ratios = lhs / rhs
        if np.any(lhs > 1e-12) or np.any(ratios <= 0.0):
            passed = False
            bad = np.argsort(ratios)[:5]
            witnesses.extend(xs[k] for k in bad)
            notes.append("homogeneity inequality admits no positive constant on samples")
        else:
            c_k_2star = 0.95 * float(np.min(ratios))
            constants["C_K_2star"] = c_k_2star
            margins["HK_homogeneity"] = float(np.min(c_k_2star * rhs - lhs))

    if not all(m >= -1e-9 for m in margins.values() if np.isfinite(m)):
        passed = False

    return AssumptionReport(
        kind="HVHK",
        passed=passed,
        sampled_sup=None,
        constants=constants,
        margins=margins,
        witnesses=witnesses,
        n_samples=len(xs),
        model=model,
        notes=notes,
    )
