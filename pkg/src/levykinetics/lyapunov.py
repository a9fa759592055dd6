"""Lyapunov functions for kinetic dynamics under heavy-tailed noise.

Two constructions are provided, both of the form ``value = W(x, v)^(theta/2)``
with ``W >= 1`` and ``theta`` below every particle's stability index (the
heavy tails admit only that fractional moment):

* **Case 1** (generic singular potentials, e.g. Lennard-Jones): the quadratic
  energy ``C* + |v|^2/2 + U(x)`` plus the cutoff-localized correction
  ``psi_kappa = kappa * cutoff(U) * U * <v, grad U> / |grad U|^2``.
* **Case 2** (mean-field confinement + repulsive kernel, e.g. Coulomb):
  the energy plus ``-(a/N) sum_{i != j} <v_i, n(x_i - x_j)> + b <x, v>``.

Both carry machine-estimated admissible constants.  The drift combination

    I1 = <grad_x W, v> - <grad_v W, gamma v + grad U>

is evaluated through per-case expanded identities in which the transport
term ``<grad U, v>`` cancels analytically; the naive difference of the two
inner products loses all precision near the singular set, where
``|grad U|`` reaches 1e38 while I1 itself is moderate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EstimationError, UnsupportedModelError
from .potentials import PotentialModel, hilbert_schmidt_norm

__all__ = [
    "smooth_cutoff",
    "smooth_cutoff_d1",
    "Case1Constants",
    "Case2Params",
    "LyapunovModel",
    "estimate_case1_constants",
    "derive_case2_params",
]


# --------------------------------------------------------------------------
# C-infinity cutoff
# --------------------------------------------------------------------------


def _bump(s: np.ndarray) -> np.ndarray:
    """exp(-1/s) for s > 0, else 0; the standard smooth step ingredient."""
    out = np.zeros_like(s)
    pos = s > 0.0
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.exp(-1.0 / s[pos])
    return out


def smooth_cutoff(u, r0: float):
    """C^inf monotone transition: 0 on (-inf, r0], 1 on [2 r0, inf).

    Uses g(s) = f(s)/(f(s) + f(1-s)) with f(s) = exp(-1/s), applied to
    s = (u - r0)/r0.  The maximum slope is exactly 2/r0, attained at the
    midpoint u = 1.5 r0.
    """
    if r0 <= 0.0:
        raise ValueError(f"cutoff level must be positive, got r0={r0}")
    u = np.asarray(u, dtype=float)
    s = (u - r0) / r0
    f = _bump(s)
    g = _bump(1.0 - s)
    denom = f + g
    out = np.where(denom > 0.0, f / np.where(denom > 0.0, denom, 1.0), 0.0)
    out = np.where(s >= 1.0, 1.0, out)
    return out if out.ndim else float(out)


def smooth_cutoff_d1(u, r0: float):
    """Derivative of :func:`smooth_cutoff` with respect to u."""
    if r0 <= 0.0:
        raise ValueError(f"cutoff level must be positive, got r0={r0}")
    u = np.asarray(u, dtype=float)
    s = (u - r0) / r0
    inside = (s > 0.0) & (s < 1.0)
    sa = np.where(inside, s, 0.5)
    f = _bump(sa)
    g = _bump(1.0 - sa)
    # g'(s) = (f'(s) g + f g'(1-s) chain) / (f+g)^2 with f'(s) = exp(-1/s)/s^2
    fp = f / sa**2
    gp = g / (1.0 - sa) ** 2
    deriv = (fp * g + f * gp) / (f + g) ** 2
    out = np.where(inside, deriv / r0, 0.0)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# Case 1: constants and estimation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Case1Constants:
    """Admissible constants for the cutoff-corrected Lyapunov function.

    Primitive fields are estimated by sampling; ``theta0``, ``beta0`` and
    ``kappa_star`` are pure functions of them (see :meth:`derive`), so a
    stored instance can always be reproduced bitwise from its primitives.
    """

    r0: float
    R_U_star: float
    C_U_star: float
    C_U_beta0_star: float
    C_star: float
    gamma: float
    kappa: float
    theta0: float
    beta0: float
    kappa_star: float

    def __post_init__(self):
        if min(self.r0, self.C_U_star, self.R_U_star, self.gamma) <= 0.0:
            raise ValueError("r0, R_U_star, C_U_star and gamma must be positive")
        if not (0.0 < self.kappa < self.kappa_star):
            raise ValueError(
                f"kappa={self.kappa} outside the admissible range (0, {self.kappa_star})"
            )

    @staticmethod
    def kappa_bound(theta0, gamma, C_U_star, beta0, C_U_beta0_star) -> float:
        return min(
            1.0 / np.sqrt(theta0),
            1.0 / (2.0 * theta0 * gamma),
            gamma / (4.0 * (5.0 + 3.0 * max(C_U_star, beta0 * C_U_beta0_star))),
        )

    @classmethod
    def derive(
        cls,
        r0: float,
        R_U_star: float,
        C_U_star: float,
        C_U_beta0_star: float,
        C_star: float,
        gamma: float,
        kappa: Optional[float] = None,
    ) -> "Case1Constants":
        theta0 = max(r0, C_U_star, R_U_star)
        beta0 = max(2.0 * r0, R_U_star)
        kappa_star = cls.kappa_bound(theta0, gamma, C_U_star, beta0, C_U_beta0_star)
        if kappa is None:
            kappa = 0.9 * kappa_star
        return cls(
            r0=r0,
            R_U_star=R_U_star,
            C_U_star=C_U_star,
            C_U_beta0_star=C_U_beta0_star,
            C_star=C_star,
            gamma=gamma,
            kappa=kappa,
            theta0=theta0,
            beta0=beta0,
            kappa_star=kappa_star,
        )


def estimate_case1_constants(
    model: PotentialModel,
    gamma: float,
    sampler,
    n: int = 4000,
    kappa: Optional[float] = None,
) -> Case1Constants:
    """Estimate admissible Case-1 constants by stratified sampling.

    Recipes (all with 1.05 safety factors, so the estimates err on the side
    that keeps the inequalities valid on the scanned region):

    * ``r0``: 1.05 x the largest sampled energy at which ``|grad U| <= 1``,
      so that energies above r0 have gradients bounded away from zero;
    * ``R_U_star = 2 r0`` and ``C_U_star``: 1.05 x the sampled sup of
      ``U (1 + |hess U|_HS) / |grad U|^2`` over ``{U >= R_U_star}``;
    * ``C_U_beta0_star``: 1.05 x the sampled sup of the Hessian norm over the
      sublevel set ``{U <= beta0}``, ``beta0 = 2 r0``;
    * ``C_star = 1 + max(r0, 1.05 |sampled inf U|)``;
    * ``kappa = 0.9 kappa_star`` unless overridden.
    """
    if gamma <= 0.0:
        raise ValueError(f"friction must be positive, got gamma={gamma}")
    xs = np.asarray(sampler(n), dtype=float)
    xs = xs[model.admissible(xs)]
    if len(xs) == 0:
        raise EstimationError("sampler yielded no admissible configurations")

    u = np.asarray(model.potential(xs))
    grad = model.gradient(xs)
    gnorm = np.sqrt(np.sum(grad * grad, axis=(-2, -1)))
    finite = np.isfinite(u) & np.isfinite(gnorm)
    xs, u, gnorm = xs[finite], u[finite], gnorm[finite]

    small_grad = gnorm <= 1.0
    if not np.any(small_grad):
        raise EstimationError(
            "no sampled state has |grad U| <= 1; cannot locate the r0 level"
        )
    r0 = 1.05 * float(np.max(u[small_grad]))
    if r0 <= 0.0:
        raise EstimationError(f"estimated r0={r0} not positive")

    R_U_star = 2.0 * r0
    beta0 = 2.0 * r0

    high = u >= R_U_star
    if not np.any(high):
        raise EstimationError(
            f"no sampled state has U >= R_U_star={R_U_star}; scan range too small"
        )
    hnorm_high = hilbert_schmidt_norm(model.hessian(xs[high]))
    ratio = u[high] * (1.0 + hnorm_high) / gnorm[high] ** 2
    C_U_star = 1.05 * float(np.max(ratio))

    low = u <= beta0
    if not np.any(low):
        raise EstimationError(f"no sampled state has U <= beta0={beta0}")
    C_U_beta0_star = 1.05 * float(np.max(hilbert_schmidt_norm(model.hessian(xs[low]))))

    C_star = 1.0 + max(r0, 1.05 * max(0.0, -float(np.min(u))))
    return Case1Constants.derive(
        r0, R_U_star, C_U_star, C_U_beta0_star, C_star, gamma, kappa
    )


# --------------------------------------------------------------------------
# Case 2: parameters and derivation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Case2Params:
    """Perturbation coefficients and sandwich data for the mean-field case.

    ``a`` and ``b`` are the largest admissible values under the constraint
    system tying them to the confinement constants (see
    :meth:`admissible_ab`); ``Cstar`` makes the base function >= 1 on the
    scanned states; ``(r1, r2, c1, c2)`` record the two-sided comparison with
    the indicator-truncated energy used by the sandwich test.
    """

    a: float
    b: float
    Cstar: float
    r1: float
    r2: float
    c1: float
    c2: float
    gamma: float
    C_V_star: float
    C_V_2star: float
    M_V: float

    def __post_init__(self):
        if not (0.0 < self.a and 0.0 < self.b):
            raise ValueError(f"perturbation coefficients must be positive, got a={self.a}, b={self.b}")
        if self.a + self.b > 0.5 + 1e-12:
            raise ValueError(f"a + b = {self.a + self.b} exceeds 1/2")
        if not (0.0 < self.c1 <= self.c2):
            raise ValueError(f"sandwich constants must satisfy 0 < c1 <= c2, got {self.c1}, {self.c2}")

    @staticmethod
    def admissible_ab(c_v_star: float, c_v_2star: float, gamma: float):
        """Largest (a, b) admissible for the drift argument, given V's constants."""
        b = min(
            0.5 * min(c_v_star, gamma),
            c_v_star**2 / (8.0 * gamma),
            c_v_2star / (2.0 * c_v_2star + c_v_star),
        )
        a = b * c_v_star / (2.0 * c_v_2star)
        return a, b


def _case2_perturbation_pieces(x: np.ndarray):
    """Pairwise unit-vector sums and projection terms shared by Case-2 formulas."""
    n = x.shape[-2]
    diff = x[..., :, None, :] - x[..., None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    idx = np.arange(n)
    r[..., idx, idx] = 1.0  # diagonal placeholder; masked out below
    unit = diff / r[..., None]
    off = ~np.eye(n, dtype=bool)
    unit = np.where(off[..., None], unit, 0.0)
    sum_n = unit.sum(axis=-2)  # (..., N, d): sum over j != i of n(x_i - x_j)
    return unit, r, off, sum_n


def _case2_theta(unit, r, off, v):
    """Theta_i = sum_{j != i} (I - n n^T)(v_i - v_j)/r_ij, for all i."""
    dv = v[..., :, None, :] - v[..., None, :, :]
    along = np.sum(dv * unit, axis=-1, keepdims=True) * unit
    proj = np.where(off[..., None], (dv - along) / r[..., None], 0.0)
    return proj.sum(axis=-2)


def derive_case2_params(report, gamma: float, sampler, n: int = 4000) -> Case2Params:
    """Derive Case-2 parameters from a passed confinement/kernel report.

    ``b`` takes its three-way minimum bound and ``a`` its largest admissible
    multiple; ``Cstar`` is set from the sampled infimum of the non-constant
    part (1.05 safety), so the base function is >= 1 on the scan; the
    sandwich constants ``c1, c2`` come from extremal sampled ratios against
    the truncated-energy reference.
    """
    if gamma <= 0.0:
        raise ValueError(f"friction must be positive, got gamma={gamma}")
    if not report.passed:
        raise EstimationError("assumption report did not pass; refusing to derive parameters")
    needed = ("C_V_star", "C_V_2star", "M_V", "R_K")
    missing = [k for k in needed if k not in report.constants]
    if missing:
        raise EstimationError(f"report lacks constants {missing}")
    c_v_star = report.constants["C_V_star"]
    c_v_2star = report.constants["C_V_2star"]
    m_v = report.constants["M_V"]
    r_k = report.constants["R_K"]
    if min(c_v_star, c_v_2star) <= 0.0:
        raise EstimationError("non-positive confinement constants")

    a, b = Case2Params.admissible_ab(c_v_star, c_v_2star, gamma)
    model: PotentialModel = report.model
    xs, vs = sampler(n)
    xs = np.asarray(xs, dtype=float)
    vs = np.asarray(vs, dtype=float)

    u = np.asarray(model.potential(xs))
    unit, _, _, sum_n = _case2_perturbation_pieces(xs)
    pert = -(a / model.n_particles) * np.sum(vs * sum_n, axis=(-2, -1))
    xv = np.sum(xs * vs, axis=(-2, -1))
    base0 = 0.5 * np.sum(vs * vs, axis=(-2, -1)) + u + pert + b * xv
    Cstar = 1.0 + 1.05 * max(0.0, -float(np.min(base0)))

    r1 = max(1.05 * float(np.sqrt(max(m_v, 0.0) / c_v_star)), 1.0)
    r2 = r_k / 2.0

    ref = _case2_reference(model, xs, vs, r1, r2)
    ratios = (Cstar + base0) / ref
    c1 = 0.95 * float(np.min(ratios))
    c2 = 1.05 * float(np.max(ratios))

    return Case2Params(
        a=a,
        b=b,
        Cstar=Cstar,
        r1=r1,
        r2=r2,
        c1=c1,
        c2=c2,
        gamma=gamma,
        C_V_star=c_v_star,
        C_V_2star=c_v_2star,
        M_V=m_v,
    )


def _case2_reference(model: PotentialModel, xs, vs, r1: float, r2: float):
    """Truncated-energy comparison function of the two-sided sandwich."""
    conf = model.confinement.value(xs)  # (..., N)
    radii = np.linalg.norm(xs, axis=-1)
    v_part = np.where(radii >= r1, conf, 0.0).sum(axis=-1)
    nn = model.n_particles
    iu, ju = np.triu_indices(nn, k=1)
    seps = np.linalg.norm(xs[..., iu, :] - xs[..., ju, :], axis=-1)
    k_part = (2.0 / nn) * np.where(
        seps <= r2, model._k(seps), 0.0
    ).sum(axis=-1)
    return 1.0 + np.sum(vs * vs, axis=(-2, -1)) + v_part + k_part


# --------------------------------------------------------------------------
# the assembled Lyapunov model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LyapunovModel:
    """One of the two Lyapunov constructions, bound to a potential model.

    ``theta`` must lie strictly below ``min_alpha`` (the smallest stability
    index among the driving noises): the jump part of the generator is finite
    exactly for sub-``alpha`` fractional moments.  ``value >= 1`` everywhere
    on the admissible domain; the drift verifier relies on that normalization.
    """

    potential: PotentialModel
    gamma: float
    theta: float
    min_alpha: float
    case1: Optional[Case1Constants] = None
    case2: Optional[Case2Params] = None

    def __post_init__(self):
        if (self.case1 is None) == (self.case2 is None):
            raise ValueError("exactly one of case1/case2 must be set")
        if self.gamma <= 0.0:
            raise ValueError(f"friction must be positive, got gamma={self.gamma}")
        if not (0.0 < self.min_alpha <= 2.0):
            raise ValueError(f"min_alpha={self.min_alpha} outside (0, 2]")
        if not (0.0 < self.theta < self.min_alpha):
            raise ValueError(
                f"theta={self.theta} outside (0, min_alpha={self.min_alpha}): "
                "the heavy-tailed noise has no higher finite moment"
            )
        if self.case2 is not None and not self.potential.has_case2_structure:
            raise UnsupportedModelError(
                "Case-2 construction requires the mean-field confinement+kernel decomposition"
            )

    @property
    def power(self) -> float:
        """The exponent p = theta/2 applied to the base function."""
        return self.theta / 2.0

    # -- base function W and its pieces ---------------------------------------

    def base(self, x, v):
        """The pre-power base W(x, v); the Lyapunov value is W**(theta/2)."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.case1 is not None:
            c = self.case1
            u, grad, g2, mask, safe = self._case1_geometry(x)
            cut = smooth_cutoff(u, c.r0)
            vg = np.sum(v * grad, axis=(-2, -1))
            psi = np.where(mask, c.kappa * cut * u * vg / safe, 0.0)
            w = c.C_star + 0.5 * np.sum(v * v, axis=(-2, -1)) + u + psi
        else:
            p = self.case2
            u = np.asarray(self.potential.potential(x))
            _, _, _, sum_n = _case2_perturbation_pieces(x)
            pert = -(p.a / self.potential.n_particles) * np.sum(v * sum_n, axis=(-2, -1))
            w = (
                p.Cstar
                + 0.5 * np.sum(v * v, axis=(-2, -1))
                + u
                + pert
                + p.b * np.sum(x * v, axis=(-2, -1))
            )
        return w if np.ndim(w) else float(w)

    def value(self, x, v):
        """The Lyapunov function W**(theta/2)."""
        return self.base(x, v) ** self.power

    def base_fiber_gradient(self, x, v):
        """grad_v W, shape (..., N, d); the i-th row is the i-th fiber gradient.

        Along every velocity fiber W is exactly quadratic with unit Hessian:
        W(v + e_i z) = W(v) + <w_i, z> + |z|^2/2.  The jump quadrature builds
        its exact increments from this.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.case1 is not None:
            c = self.case1
            u, grad, g2, mask, safe = self._case1_geometry(x)
            cut = smooth_cutoff(u, c.r0)
            coeff = np.where(mask, c.kappa * cut * u / safe, 0.0)
            return v + coeff[..., None, None] * grad
        p = self.case2
        _, _, _, sum_n = _case2_perturbation_pieces(x)
        return v - (p.a / self.potential.n_particles) * sum_n + p.b * x

    def base_drift(self, x, v):
        """I1 = <grad_x W, v> - <grad_v W, gamma v + grad U>, evaluated stably.

        Uses the expanded per-case identities in which the transport term
        <grad U, v> has cancelled analytically; essential near the singular
        set where that term dwarfs the result.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        gamma = self.gamma
        vsq = np.sum(v * v, axis=(-2, -1))
        if self.case1 is not None:
            c = self.case1
            u, grad, g2, mask, safe = self._case1_geometry(x)
            cut = smooth_cutoff(u, c.r0)
            cutd = smooth_cutoff_d1(u, c.r0)
            vg = np.sum(v * grad, axis=(-2, -1))
            psi = np.where(mask, c.kappa * cut * u * vg / safe, 0.0)

            hess = self.potential.hessian(x)
            nd = self.potential.n_particles * self.potential.dim
            vf = v.reshape(v.shape[:-2] + (nd,))
            gf = grad.reshape(grad.shape[:-2] + (nd,))
            hv = np.einsum("...ij,...j->...i", hess, vf)
            vhv = np.einsum("...i,...i->...", vf, hv)
            hg = np.einsum("...ij,...j->...i", hess, gf)
            ghv = np.einsum("...i,...i->...", hg, vf)

            correction = np.where(
                mask,
                c.kappa * (-cut * u + (cut + cutd * u) * vg**2 / safe)
                + (c.kappa * cut * u / safe) * (vhv - 2.0 * vg * ghv / safe),
                0.0,
            )
            out = -gamma * vsq - gamma * psi + correction
        else:
            p = self.case2
            grad = self.potential.gradient(x)
            unit, r, off, sum_n = _case2_perturbation_pieces(x)
            theta_vec = _case2_theta(unit, r, off, v)
            over_n = p.a / self.potential.n_particles
            out = (
                -(gamma - p.b) * vsq
                - over_n * np.sum(theta_vec * v, axis=(-2, -1))
                + gamma * over_n * np.sum(v * sum_n, axis=(-2, -1))
                - p.b * gamma * np.sum(x * v, axis=(-2, -1))
                + over_n * np.sum(sum_n * grad, axis=(-2, -1))
                - p.b * np.sum(x * grad, axis=(-2, -1))
            )
        return out if np.ndim(out) else float(out)

    # -- full gradients of the powered function -------------------------------

    def gradients(self, x, v):
        """(grad_x, grad_v) of value = W**(theta/2), each shaped (..., N, d)."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.case1 is not None:
            gx, gv = self._case1_base_gradients(x, v)
        else:
            gx, gv = self._case2_base_gradients(x, v)
        w = self.base(x, v)
        factor = self.power * np.asarray(w) ** (self.power - 1.0)
        factor = factor[..., None, None] if np.ndim(factor) else factor
        return factor * gx, factor * gv

    def _case1_base_gradients(self, x, v):
        c = self.case1
        u, grad, g2, mask, safe = self._case1_geometry(x)
        cut = smooth_cutoff(u, c.r0)
        cutd = smooth_cutoff_d1(u, c.r0)
        vg = np.sum(v * grad, axis=(-2, -1))

        hess = self.potential.hessian(x)
        nd = self.potential.n_particles * self.potential.dim
        shape = x.shape[:-2] + (nd,)
        vf = v.reshape(shape)
        gf = grad.reshape(shape)
        hv = np.einsum("...ij,...j->...i", hess, vf)
        hg = np.einsum("...ij,...j->...i", hess, gf)

        coeff_v = np.where(mask, c.kappa * cut * u / safe, 0.0)
        gv = vf + coeff_v[..., None] * gf

        term1 = np.where(mask, c.kappa * cutd * u * vg / safe, 0.0)[..., None] * gf
        inner = vg[..., None] * gf + u[..., None] * (hv - 2.0 * (vg / safe)[..., None] * hg)
        term2 = np.where(mask, c.kappa * cut / safe, 0.0)[..., None] * inner
        gx = gf + term1 + term2
        new_shape = x.shape[:-2] + (self.potential.n_particles, self.potential.dim)
        return gx.reshape(new_shape), gv.reshape(new_shape)

    def _case2_base_gradients(self, x, v):
        p = self.case2
        grad = self.potential.gradient(x)
        unit, r, off, sum_n = _case2_perturbation_pieces(x)
        theta_vec = _case2_theta(unit, r, off, v)
        over_n = p.a / self.potential.n_particles
        gv = v - over_n * sum_n + p.b * x
        gx = grad - over_n * theta_vec + p.b * v
        return gx, gv

    # -- shared geometry -------------------------------------------------------

    def _case1_geometry(self, x):
        """U, grad U, |grad U|^2 and the cutoff-support mask with safe divisor."""
        u = np.asarray(self.potential.potential(x))
        grad = self.potential.gradient(x)
        g2 = np.sum(grad * grad, axis=(-2, -1))
        mask = u > self.case1.r0
        safe = np.where(mask, np.maximum(g2, 1e-300), 1.0)
        return u, grad, g2, mask, safe
