"""CGF-like functions, the auxiliary scalars phi/varphi/g/p/h, and Chernoff optimization.

The four psi families:

    normal          theta**2 / 2                        theta_max = inf
    poisson(c)      (exp(c theta) - c theta - 1) / c**2  theta_max = inf
    gamma(c)        theta**2 / (2 (1 - c theta))        theta_max = 1/c
    exponential     theta**2 nu**2 / (2 sigma_sq)       theta_max = 1/alpha
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from opconc.errors import DomainError, OpconcError, PreconditionError
from opconc.policy import get_policy

E_OVER_E_MINUS_1 = math.e / (math.e - 1.0)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # 1/golden ratio

PSI_KINDS = ("normal", "poisson", "gamma", "exponential")


@dataclass(frozen=True)
class PsiFn:
    kind: str
    c: float | None = None
    nu: float | None = None
    alpha: float | None = None
    sigma_sq: float | None = None

    def __post_init__(self):
        if self.kind not in PSI_KINDS:
            raise ValueError(f"unknown psi kind {self.kind!r}; expected one of {PSI_KINDS}")
        if self.kind in ("poisson", "gamma"):
            if self.c is None or not self.c > 0:
                raise ValueError(f"{self.kind} psi needs c > 0, got {self.c}")
        if self.kind == "exponential":
            for name in ("nu", "alpha", "sigma_sq"):
                v = getattr(self, name)
                if v is None or not v > 0:
                    raise ValueError(f"exponential psi needs {name} > 0, got {v}")

    @classmethod
    def normal(cls) -> "PsiFn":
        return cls("normal")

    @classmethod
    def poisson(cls, c: float) -> "PsiFn":
        return cls("poisson", c=float(c))

    @classmethod
    def gamma(cls, c: float) -> "PsiFn":
        return cls("gamma", c=float(c))

    @classmethod
    def exponential(cls, nu: float, alpha: float, sigma_sq: float) -> "PsiFn":
        return cls("exponential", nu=float(nu), alpha=float(alpha), sigma_sq=float(sigma_sq))

    @property
    def theta_max(self) -> float:
        if self.kind == "gamma":
            return 1.0 / self.c
        if self.kind == "exponential":
            return 1.0 / self.alpha
        return math.inf

    @property
    def theta_cap(self) -> float:
        """Largest theta the optimizer will evaluate (a hair inside any pole)."""
        tm = self.theta_max
        return tm if math.isinf(tm) else (1.0 - get_policy().pole_margin) * tm

    def __call__(self, theta: float) -> float:
        return psi_eval(self, theta)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for name in ("c", "nu", "alpha", "sigma_sq"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PsiFn":
        allowed = {"kind", "c", "nu", "alpha", "sigma_sq"}
        extra = set(obj) - allowed
        if extra:
            raise ValueError(f"unknown psi fields {sorted(extra)}")
        return cls(**obj)


def _expm1_minus_x(x: float) -> float:
    """exp(x) - x - 1 without cancellation near 0."""
    if abs(x) < 1e-4:
        return x * x * (0.5 + x * (1.0 / 6.0 + x / 24.0))
    return math.expm1(x) - x


def psi_eval(psi: PsiFn, theta: float) -> float:
    theta = float(theta)
    if not (theta >= 0.0 and theta < psi.theta_max):
        raise DomainError(f"theta={theta!r} outside [0, theta_max={psi.theta_max!r}) for {psi.kind} psi")
    if psi.kind == "normal":
        return 0.5 * theta * theta
    if psi.kind == "poisson":
        c = psi.c
        try:
            return _expm1_minus_x(c * theta) / (c * c)
        except OverflowError:
            return math.inf
    if psi.kind == "gamma":
        t = min(theta, psi.theta_cap)
        return t * t / (2.0 * (1.0 - psi.c * t))
    return theta * theta * psi.nu**2 / (2.0 * psi.sigma_sq)


def phi(u):
    """exp(u) - u - 1; accepts scalars or arrays."""
    u_arr = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        series = u_arr * u_arr * (0.5 + u_arr * (1.0 / 6.0 + u_arr / 24.0))
        out = np.where(np.abs(u_arr) < 1e-4, series, np.expm1(u_arr) - u_arr)
    return float(out) if out.ndim == 0 else out


def varphi(u):
    """cosh(u) - 1, computed as 2 sinh(u/2)**2."""
    u_arr = np.asarray(u, dtype=float)
    with np.errstate(over="ignore"):
        out = 2.0 * np.sinh(0.5 * u_arr) ** 2
    return float(out) if out.ndim == 0 else out


def p_fn(u):
    """min(-u, 1)."""
    out = np.minimum(-np.asarray(u, dtype=float), 1.0)
    return float(out) if out.ndim == 0 else out


def g_fn(u):
    """exp(u) + p(u) - 1, which equals phi(u) for u >= -1 and exp(u) below."""
    u_arr = np.asarray(u, dtype=float)
    with np.errstate(over="ignore"):
        out = np.where(u_arr >= -1.0, phi(u_arr), np.exp(u_arr))
    return float(out) if out.ndim == 0 else out


def h_fn(u):
    """(1 + u) log(1 + u) - u for u >= 0."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0) or np.any(np.isnan(u_arr)):
        raise DomainError("h(u) is only used for u >= 0")
    with np.errstate(over="ignore", invalid="ignore"):
        # sum_{k>=2} (-1)^k u^k / (k (k-1))
        series = u_arr * u_arr * (
            0.5 - u_arr * (1.0 / 6.0 - u_arr * (1.0 / 12.0 - u_arr * (1.0 / 20.0 - u_arr / 30.0)))
        )
        out = np.where(u_arr < 1e-3, series, (1.0 + u_arr) * np.log1p(u_arr) - u_arr)
    return float(out) if out.ndim == 0 else out


THETA_STAR_KINDS = ("subgaussian", "hoeffding", "bennett", "bernstein", "subexponential", "martingale_bernstein")


def theta_star(bound_kind: str, *, r: float, sigma_sq: float | None = None, c: float | None = None,
               nu: float | None = None, alpha: float | None = None) -> float:
    """Closed-form Chernoff parameter used by each corollary."""
    if r < 0 or not math.isfinite(r):
        raise PreconditionError(f"r must be finite and >= 0, got {r}")

    def need(**vals):
        for name, v in vals.items():
            if v is None or not v > 0:
                raise PreconditionError(f"{bound_kind} theta* needs {name} > 0, got {v}")

    if bound_kind in ("subgaussian", "hoeffding"):
        need(sigma_sq=sigma_sq)
        return r / sigma_sq
    if bound_kind in ("bennett", "martingale_bernstein"):
        need(sigma_sq=sigma_sq, c=c)
        return math.log1p(c * r / sigma_sq) / c
    if bound_kind == "bernstein":
        need(sigma_sq=sigma_sq, c=c)
        return r / (sigma_sq + c * r)
    if bound_kind == "subexponential":
        need(nu=nu, alpha=alpha)
        theta = r / nu**2
        if theta < 1.0 / alpha:
            return theta
        return (1.0 - get_policy().pole_margin) / alpha
    raise PreconditionError(f"unknown bound kind {bound_kind!r}; expected one of {THETA_STAR_KINDS}")


def chernoff_exponent(psi: PsiFn, sigma_sq: float, r: float, theta: float) -> float:
    """psi(theta) sigma_sq - theta r."""
    return psi_eval(psi, theta) * sigma_sq - theta * r


def chernoff_infimum(psi: PsiFn, sigma_sq: float, r: float) -> tuple[float, float]:
    """Minimize exp(psi(theta) sigma_sq - theta r) over [0, theta_max).

    Grows a bracket from theta = 0 by doubling, then golden-section search.
    Returns ``(theta_opt, value)``.
    """
    if not sigma_sq > 0:
        raise PreconditionError(f"sigma_sq must be > 0, got {sigma_sq}")
    if not r >= 0:
        raise PreconditionError(f"r must be >= 0, got {r}")
    if r == 0:
        return 0.0, 1.0

    cap = psi.theta_cap

    def f(t):
        try:
            v = chernoff_exponent(psi, sigma_sq, r, t)
        except OverflowError:
            return math.inf
        return v if not math.isnan(v) else math.inf

    hi = min(r / sigma_sq, cap)
    if not hi > 0:
        hi = min(1.0, cap)
    # convex with f'(0) = -r < 0: the minimizer is <= hi once f(hi) >= f(hi/2)
    while hi < cap and f(hi) < f(0.5 * hi):
        hi = min(2.0 * hi, cap)

    rtol = get_policy().chernoff_rtol
    a, b = 0.0, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(10_000):
        if b - a <= rtol * max(abs(x1), abs(x2), 1e-300):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    else:  # pragma: no cover - convex exponent always converges
        raise OpconcError("golden-section search did not converge")

    candidates = [(f1, x1), (f2, x2), (f(b), b)]
    val, theta = min(candidates)
    if not math.isfinite(val):
        raise OpconcError(f"Chernoff exponent unbounded or undefined for {psi} (internal invariant)")
    if val > 0.0:
        # the exponent is 0 at theta = 0; a positive minimum breaks convexity
        raise OpconcError(f"Chernoff minimum {val} > 0 for {psi}; psi is not CGF-like")
    return theta, math.exp(val)
