"""Tail bounds for sums of independent random symmetric matrices.

All bounds share the shape

    C(mode) * d' * exp(exponent(r)),    d' = tr(V) / sigma_sq >= 1,

with C = e/(e-1) for the supremum of the largest eigenvalue and C = 2 for the
supremum of the operator norm.  Raw values may exceed 1 and are kept as such;
``TailBoundResult.clamped`` caps them for reporting.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from opconc.errors import PreconditionError
from opconc.psi import E_OVER_E_MINUS_1, PsiFn, chernoff_exponent, chernoff_infimum, h_fn, theta_star
from opconc.specmat import ArrayLike, SymMatrix, as_sym, eigvals, is_psd

# d' is computed as a float ratio; tr(V) = ||V|| gives d' = 1 up to rounding
_DPRIME_SLACK = 1e-12


class Mode(enum.Enum):
    MAX_EIG = "maxeig"
    OP_NORM = "opnorm"

    @property
    def prefactor(self) -> float:
        return E_OVER_E_MINUS_1 if self is Mode.MAX_EIG else 2.0

    @classmethod
    def parse(cls, value: "Mode | str") -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown mode {value!r}; expected 'maxeig' or 'opnorm'") from None


@dataclass(frozen=True)
class VarianceProxy:
    """tr(V_n) and sigma_sq >= ||V_n||, optionally with V_n itself."""

    trace_V: float
    sigma_sq: float
    V: SymMatrix | None = None

    def __post_init__(self):
        if not self.sigma_sq > 0:
            raise PreconditionError(f"sigma_sq must be > 0, got {self.sigma_sq}")
        if not self.trace_V >= 0:
            raise PreconditionError(f"trace_V must be >= 0, got {self.trace_V}")
        if self.trace_V < self.sigma_sq * (1.0 - _DPRIME_SLACK):
            raise PreconditionError(
                f"d′ = trace_V/sigma_sq = {self.trace_V / self.sigma_sq:.6g} violates d′ ≥ 1"
            )
        if self.V is not None:
            w = eigvals(self.V)
            if not is_psd(self.V):
                raise PreconditionError(f"V must be PSD; lambda_min = {w[-1]:.3e}")
            if w[0] > self.sigma_sq + 1e-9:
                raise PreconditionError(f"sigma_sq = {self.sigma_sq} < ||V|| = {w[0]}")
            if not math.isclose(float(np.trace(self.V.values)), self.trace_V, rel_tol=1e-12, abs_tol=1e-12):
                raise PreconditionError("trace_V does not match tr(V)")

    @classmethod
    def from_matrix(cls, V: ArrayLike, sigma_sq: float | None = None) -> "VarianceProxy":
        """Build from V; sigma_sq defaults to ||V||, the tightest legal choice."""
        v = as_sym(V)
        if sigma_sq is None:
            sigma_sq = float(max(eigvals(v)[0], 0.0))
        return cls(float(np.trace(v.values)), float(sigma_sq), v)

    @property
    def d_prime(self) -> float:
        return max(self.trace_V / self.sigma_sq, 1.0)


@dataclass(frozen=True)
class TailBoundResult:
    r: float
    raw: float
    theta_used: float
    mode: Mode
    kind: str

    @property
    def clamped(self) -> float:
        return min(self.raw, 1.0)

    @property
    def probability_bound(self) -> float:
        return self.clamped

    def to_row(self) -> dict:
        return {
            "kind": self.kind,
            "mode": self.mode.value,
            "r": self.r,
            "theta": self.theta_used,
            "raw_bound": self.raw,
            "clamped_bound": self.clamped,
        }


CSV_FIELDS = ("kind", "mode", "r", "theta", "raw_bound", "clamped_bound")


def _check_r(r: float) -> float:
    r = float(r)
    if not (r >= 0 and math.isfinite(r)):
        raise PreconditionError(f"r must be finite and >= 0, got {r}")
    return r


def master_bound(d_prime: float, psi: PsiFn, sigma_sq: float, r: float, mode: Mode | str) -> TailBoundResult:
    """C(mode) * d' * inf_theta exp(psi(theta) sigma_sq - theta r)."""
    mode = Mode.parse(mode)
    r = _check_r(r)
    if not d_prime >= 1.0:
        raise PreconditionError(f"d' = {d_prime} violates d′ ≥ 1")
    theta, value = chernoff_infimum(psi, sigma_sq, r)
    return TailBoundResult(r, mode.prefactor * d_prime * value, theta, mode, "master")


def master_bound_at(d_prime: float, psi: PsiFn, sigma_sq: float, r: float, mode: Mode | str,
                    theta: float) -> TailBoundResult:
    """Master bound evaluated at a fixed theta instead of the infimum."""
    mode = Mode.parse(mode)
    r = _check_r(r)
    if not d_prime >= 1.0:
        raise PreconditionError(f"d' = {d_prime} violates d′ ≥ 1")
    value = math.exp(chernoff_exponent(psi, sigma_sq, r, theta))
    return TailBoundResult(r, mode.prefactor * d_prime * value, theta, mode, "master")


def _closed(kind: str, vp: VarianceProxy, r: float, mode, exponent: float, theta: float) -> TailBoundResult:
    mode = Mode.parse(mode)
    return TailBoundResult(r, mode.prefactor * vp.d_prime * math.exp(exponent), theta, mode, kind)


def _gaussian_tail(kind: str, vp: VarianceProxy, r: float, mode) -> TailBoundResult:
    r = _check_r(r)
    return _closed(kind, vp, r, mode, -r * r / (2.0 * vp.sigma_sq),
                   theta_star("subgaussian", r=r, sigma_sq=vp.sigma_sq))


def hoeffding_bound(vp: VarianceProxy, r: float, mode: Mode | str) -> TailBoundResult:
    """Hoeffding: X_i^2 <= A_i^2 and V = (1/2) sum (A_i^2 + E X_i^2)."""
    return _gaussian_tail("hoeffding", vp, r, mode)


def subgaussian_bound(vp: VarianceProxy, r: float, mode: Mode | str) -> TailBoundResult:
    """Sub-Gaussian: log E exp(theta X_i) <= theta^2/2 Delta V_i."""
    return _gaussian_tail("subgaussian", vp, r, mode)


def _need_positive(name: str, value: float) -> float:
    if not value > 0:
        raise PreconditionError(f"{name} must be > 0, got {value}")
    return float(value)


def bennett_bound(vp: VarianceProxy, c: float, r: float, mode: Mode | str) -> TailBoundResult:
    """exp(-(sigma^2/c^2) h(c r / sigma^2)), for ||X_i|| <= c."""
    c = _need_positive("c", c)
    r = _check_r(r)
    s2 = vp.sigma_sq
    exponent = -(s2 / (c * c)) * h_fn(c * r / s2)
    return _closed("bennett", vp, r, mode, exponent, theta_star("bennett", r=r, sigma_sq=s2, c=c))


def bernstein_bound(vp: VarianceProxy, c: float, r: float, mode: Mode | str) -> TailBoundResult:
    """exp(-r^2 / (2 (sigma^2 + c r))) under the moment condition E|X|^k <= k!/2 c^(k-2) Delta V."""
    c = _need_positive("c", c)
    r = _check_r(r)
    s2 = vp.sigma_sq
    exponent = -r * r / (2.0 * (s2 + c * r))
    return _closed("bernstein", vp, r, mode, exponent, theta_star("bernstein", r=r, sigma_sq=s2, c=c))


def subexponential_bound(vp: VarianceProxy, nu: float, alpha: float, r: float, mode: Mode | str) -> TailBoundResult:
    """exp(-min(r^2/nu^2, r/alpha) / 2)."""
    nu = _need_positive("nu", nu)
    alpha = _need_positive("alpha", alpha)
    r = _check_r(r)
    exponent = -0.5 * min(r * r / (nu * nu), r / alpha)
    return _closed("subexponential", vp, r, mode, exponent,
                   theta_star("subexponential", r=r, nu=nu, alpha=alpha))


def ambient_subgaussian_bound(d: int, sigma_sq: float, r: float) -> float:
    """2 d exp(-r^2 / (2 sigma^2)), the ambient-dimension operator-norm bound."""
    if int(d) != d or d < 1:
        raise PreconditionError(f"d must be a positive integer, got {d}")
    return 2.0 * d * math.exp(-r * r / (2.0 * sigma_sq))


class DegenerateRadiusWarning(RuntimeWarning):
    """(2/delta) tr(V)/sigma^2 < 1: the log term is negative."""


def _log_term(trace_V: float, sigma_sq: float, delta: float) -> float:
    if not 0.0 < delta < 1.0:
        raise PreconditionError(f"delta must lie in (0, 1), got {delta}")
    arg = (2.0 / delta) * trace_V / sigma_sq
    if arg < 1.0:
        warnings.warn(f"(2/delta) tr(V)/sigma^2 = {arg:.6g} < 1; radius is not meaningful",
                      DegenerateRadiusWarning, stacklevel=3)
    return math.log(arg)


def confidence_radius(n: int, sigma: float, c: float, trace_V: float, delta: float) -> float:
    """Radius of the (1 - delta) interval for ||S_n / n - mu||.

        sigma sqrt((2/n) L) + (c / (3n)) L,    L = log((2/delta) tr(V)/sigma^2)

    The formula is evaluated literally.  Which sigma to pass is a
    normalization choice; see :func:`confidence_radius_from_variance`.
    """
    if int(n) != n or n < 1:
        raise PreconditionError(f"n must be a positive integer, got {n}")
    _need_positive("sigma", sigma)
    _need_positive("c", c)
    L = _log_term(trace_V, sigma * sigma, delta)
    return max(sigma * math.sqrt(2.0 * max(L, 0.0) / n) + c * L / (3.0 * n), 0.0)


NORMALIZATIONS = ("per_sum", "per_sample")


def confidence_radius_from_variance(n: int, c: float, V_sum: ArrayLike, delta: float,
                                    normalization: str = "per_sum") -> float:
    """Confidence radius from the variance matrix V_n = sum_i E X_i^2 of the n-term sum.

    ``per_sum`` plugs sigma^2 = ||V_n|| (conservative); ``per_sample`` plugs
    sigma^2 = ||V_n|| / n, the per-observation variance scale under which
    sigma sqrt(2L/n) is the usual sqrt(variance/n) rate.  d' is the same
    under both.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    v = as_sym(V_sum)
    norm = float(eigvals(v)[0])
    tr = float(np.trace(v.values))
    if normalization == "per_sample":
        norm, tr = norm / n, tr / n
    return confidence_radius(n, math.sqrt(norm), c, tr, delta)


def bernstein_relaxed_mean_tail(n: int, sigma_sq_sum: float, c: float, trace_V: float, radius: float) -> float:
    """2 d' exp(-t^2 / (2 (sigma^2 + c t / 3))) at t = n * radius (the mean deviation)."""
    t = n * radius
    return 2.0 * (trace_V / sigma_sq_sum) * math.exp(-t * t / (2.0 * (sigma_sq_sum + c * t / 3.0)))


def bernstein_relaxed_radius(n: int, sigma_sq_sum: float, c: float, trace_V: float, delta: float) -> float:
    """Exact inverse of :func:`bernstein_relaxed_mean_tail` in the radius.

    Solves t^2 = 2L (sigma^2 + c t / 3) for the sum deviation t and returns t / n.
    """
    L = _log_term(trace_V, sigma_sq_sum, delta)
    L = max(L, 0.0)
    a = c * L / 3.0
    t = a + math.sqrt(a * a + 2.0 * sigma_sq_sum * L)
    return t / n


def trace_exp_gap(V: ArrayLike, s: float, sigma_sq: float | None = None) -> tuple[float, float]:
    """Both sides of tr[exp(sV) - I] <= (exp(s sigma^2) - 1) tr(V) / sigma^2 for PSD V.

    sigma_sq defaults to ||V||.  Returns ``(lhs, rhs)``.
    """
    w = eigvals(V)
    if sigma_sq is None:
        sigma_sq = float(w[0])
    lhs = float(np.sum(np.expm1(s * w)))
    rhs = math.expm1(s * sigma_sq) * float(np.sum(w)) / sigma_sq
    return lhs, rhs
