"""Freedman-type bounds under martingale dependence and the V-process catalog.

The master inequality bounds the joint event
{lambda_max(S_n) >= r, lambda_max(V_n) <= sigma^2} by

    e/(e-1) * (1 + tr p(-psi(theta) E V_n)) * exp(psi(theta) sigma^2 - theta r),

valid whenever R_t = tr exp(theta S_t - psi(theta) V_t) is a supermartingale.
:func:`check_pairing` encodes which (V-process, psi) combinations make R_t one.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from opconc.errors import CatalogError, PreconditionError
from opconc.psi import E_OVER_E_MINUS_1, PsiFn, chernoff_exponent, chernoff_infimum, psi_eval, theta_star
from opconc.specmat import ArrayLike, SymMatrix, as_array, batch_spectral, batch_square

MINSKER_CONSTANT = 25.0


class VProcessKind(enum.Enum):
    BRACKET = "bracket"  # [S]_t = sum X_i^2
    PREDICTABLE = "predictable"  # <S>_t = sum E_{i-1} X_i^2
    POSITIVE_PART = "pospart"  # [S+]_t = sum max(0, X_i)^2
    NEGATIVE_PREDICTABLE = "negpred"  # <S->_t = sum E_{i-1} min(0, X_i)^2
    SELF_NORM_I = "selfnorm1"  # ([S]_t + 2 <S>_t) / 3
    SELF_NORM_II = "selfnorm2"  # ([S+]_t + <S->_t) / 2
    HOEFFDING = "hoeffding"  # sum A_i^2 with X_i^2 <= A_i^2
    CUBIC = "cubic"  # [S]_t + sum E_{i-1} |X_i|^3
    BENNETT = "bennett"  # <S>_t, with ||X_i|| <= c
    BERNSTEIN = "bernstein"  # sum Delta V_i from the Bernstein moment condition

    @classmethod
    def parse(cls, value: "VProcessKind | str") -> "VProcessKind":
        if isinstance(value, VProcessKind):
            return value
        try:
            return cls(value)
        except ValueError:
            names = "|".join(k.value for k in cls)
            raise ValueError(f"unknown V-process kind {value!r}; expected {names}") from None


# conditional moments each kind consumes
_NEEDS = {
    VProcessKind.BRACKET: (),
    VProcessKind.POSITIVE_PART: (),
    VProcessKind.PREDICTABLE: ("second",),
    VProcessKind.BENNETT: ("second",),
    VProcessKind.BERNSTEIN: ("declared",),
    VProcessKind.NEGATIVE_PREDICTABLE: ("neg_second",),
    VProcessKind.SELF_NORM_I: ("second",),
    VProcessKind.SELF_NORM_II: ("neg_second",),
    VProcessKind.HOEFFDING: ("hoeffding",),
    VProcessKind.CUBIC: ("abs_third",),
}


def required_moments(kind: VProcessKind | str) -> tuple[str, ...]:
    return _NEEDS[VProcessKind.parse(kind)]


@dataclass(frozen=True)
class ConditionalMoments:
    """Moments of X_t given the past.

    ``declared`` is the Delta V_t of the Bernstein moment condition; for
    bounded increments it is E_{t-1} X_t^2, which is what ensembles supply.
    """

    second: np.ndarray | None = None
    neg_second: np.ndarray | None = None
    abs_third: np.ndarray | None = None
    hoeffding: np.ndarray | None = None
    declared: np.ndarray | None = None


def _pos_sq(x: np.ndarray) -> np.ndarray:
    return batch_spectral(x, lambda w: np.maximum(w, 0.0) ** 2)


def increment(kind: VProcessKind | str, x: np.ndarray, moments: ConditionalMoments | None) -> np.ndarray:
    """Delta V_t for one step; works on a single matrix or a stack (..., d, d)."""
    kind = VProcessKind.parse(kind)
    needs = _NEEDS[kind]
    if needs:
        if moments is None or any(getattr(moments, m) is None for m in needs):
            raise PreconditionError(
                f"V-process {kind.value!r} needs conditional moments {needs}; no callback supplied"
            )
    if kind is VProcessKind.BRACKET:
        return batch_square(x)
    if kind is VProcessKind.POSITIVE_PART:
        return _pos_sq(x)
    if kind in (VProcessKind.PREDICTABLE, VProcessKind.BENNETT):
        return moments.second
    if kind is VProcessKind.BERNSTEIN:
        return moments.declared
    if kind is VProcessKind.NEGATIVE_PREDICTABLE:
        return moments.neg_second
    if kind is VProcessKind.SELF_NORM_I:
        return (batch_square(x) + 2.0 * moments.second) / 3.0
    if kind is VProcessKind.SELF_NORM_II:
        return 0.5 * (_pos_sq(x) + moments.neg_second)
    if kind is VProcessKind.HOEFFDING:
        return moments.hoeffding
    return batch_square(x) + moments.abs_third  # CUBIC


MomentCallback = Callable[[Sequence[np.ndarray]], ConditionalMoments]


class VProcess:
    """Running V_t for one simulated path.

    ``moments`` maps the history X_1..X_{t-1} to the conditional moments of
    X_t; predictable kinds refuse to step without it.
    """

    def __init__(self, kind: VProcessKind | str, dim: int, moments: MomentCallback | None = None):
        self.kind = VProcessKind.parse(kind)
        self.dim = dim
        self.moments = moments
        self.value = np.zeros((dim, dim))
        self.history: list[np.ndarray] = []
        if _NEEDS[self.kind] and moments is None:
            raise PreconditionError(
                f"V-process {self.kind.value!r} needs a conditional-moment callback"
            )

    def step(self, x: ArrayLike) -> SymMatrix:
        x = as_array(x)
        if x.shape != (self.dim, self.dim):
            raise ValueError(f"step matrix has shape {x.shape}, expected {(self.dim, self.dim)}")
        cm = self.moments(self.history) if self.moments is not None else None
        self.value = self.value + increment(self.kind, x, cm)
        self.history.append(x)
        return SymMatrix._trusted(self.value)

    @property
    def state(self) -> SymMatrix:
        return SymMatrix._trusted(self.value)


def v_process_step(process: VProcess, x: ArrayLike) -> SymMatrix:
    return process.step(x)


def check_pairing(kind: VProcessKind | str, psi: PsiFn, c_bound: float | None = None) -> None:
    """Raise :class:`CatalogError` unless (kind, psi) is a known supermartingale construction.

    Normal psi: bracket (conditionally symmetric increments), self-normalized
    I and II, Hoeffding.  Gamma(c >= 1/6): cubic.  Poisson or Gamma with
    c >= ||X_t||: Bennett / predictable.  Gamma with c >= c_bound: Bernstein.
    """
    kind = VProcessKind.parse(kind)
    if kind in (VProcessKind.BRACKET, VProcessKind.SELF_NORM_I, VProcessKind.SELF_NORM_II, VProcessKind.HOEFFDING):
        if psi.kind != "normal":
            raise CatalogError(f"{kind.value} V-process pairs with the normal psi, not {psi.kind}")
        return
    if kind is VProcessKind.CUBIC:
        if psi.kind != "gamma" or psi.c < 1.0 / 6.0:
            raise CatalogError("cubic self-normalized V-process pairs with gamma psi, c >= 1/6")
        return
    if kind in (VProcessKind.BENNETT, VProcessKind.PREDICTABLE, VProcessKind.BERNSTEIN):
        allowed = ("gamma",) if kind is VProcessKind.BERNSTEIN else ("poisson", "gamma")
        if psi.kind not in allowed:
            raise CatalogError(f"{kind.value} V-process pairs with {' or '.join(allowed)} psi, not {psi.kind}")
        if c_bound is None:
            raise CatalogError(f"{kind.value} pairing needs a known bound c on ||X_t||")
        if psi.c < c_bound * (1.0 - 1e-12):
            raise CatalogError(f"psi scale c = {psi.c} is below the increment bound {c_bound}")
        return
    raise CatalogError(f"{kind.value} is a building block, not a stand-alone supermartingale V-process")


def _spectrum(ev: Sequence[float] | np.ndarray) -> np.ndarray:
    lam = np.asarray(ev, dtype=float).ravel()
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    if lam.size and lam.min() < -1e-10 * scale:
        raise PreconditionError(f"E V_n spectrum has negative eigenvalue {lam.min():.3e}")
    return np.maximum(lam, 0.0)


@dataclass(frozen=True)
class MartingaleBoundInput:
    EV_spectrum: tuple
    sigma_sq: float
    r: float
    psi: PsiFn
    c: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "EV_spectrum", tuple(float(x) for x in _spectrum(self.EV_spectrum)))
        if not self.sigma_sq > 0:
            raise PreconditionError(f"sigma_sq must be > 0, got {self.sigma_sq}")
        if not self.r >= 0:
            raise PreconditionError(f"r must be >= 0, got {self.r}")


def trace_p_term(EV_spectrum, scale: float) -> float:
    """tr p(-scale * E V_n) = sum_j min(scale * lambda_j, 1)."""
    if not scale >= 0:
        raise PreconditionError(f"scale must be >= 0, got {scale}")
    lam = _spectrum(EV_spectrum)
    return float(np.sum(np.minimum(scale * lam, 1.0)))


def freedman_bound(inp: MartingaleBoundInput, theta: float) -> float:
    """Master martingale bound at a fixed theta."""
    s = psi_eval(inp.psi, theta)
    t = trace_p_term(inp.EV_spectrum, s)
    return E_OVER_E_MINUS_1 * (t + 1.0) * math.exp(chernoff_exponent(inp.psi, inp.sigma_sq, inp.r, theta))


def freedman_bound_grid_min(inp: MartingaleBoundInput, thetas: Sequence[float] | None = None) -> tuple[float, float]:
    """Smallest :func:`freedman_bound` over a theta grid.

    The grid always contains the exponent's Chernoff optimum and, for the
    Poisson family with known c, theta* = log(1 + c r / sigma^2) / c.
    Returns ``(theta, value)``.
    """
    cap = inp.psi.theta_cap
    theta_opt, _ = chernoff_infimum(inp.psi, inp.sigma_sq, inp.r)
    grid = [0.0, theta_opt]
    if inp.psi.kind == "poisson" and inp.r > 0:
        grid.append(theta_star("martingale_bernstein", r=inp.r, sigma_sq=inp.sigma_sq, c=inp.psi.c))
    if thetas is None:
        hi = min(cap, 4.0 * max(theta_opt, 1e-12))
        thetas = np.linspace(0.0, hi, 201)[1:]
    grid.extend(float(t) for t in thetas if 0.0 <= t < inp.psi.theta_max)
    best = min((freedman_bound(inp, t), t) for t in grid)
    return best[1], best[0]


def _check_c(c: float) -> float:
    if not c > 0:
        raise PreconditionError(f"c must be > 0, got {c}")
    return float(c)


def _bernstein_exp(sigma_sq: float, c: float, r: float) -> float:
    return math.exp(-r * r / (2.0 * (sigma_sq + r * c / 3.0)))


def martingale_bernstein_bound(EV_spectrum, sigma_sq: float, c: float, r: float) -> float:
    """e/(e-1) (1 + tr p(-(r/c) E V_n / sigma^2)) exp(-r^2 / (2 (sigma^2 + r c / 3)))."""
    c = _check_c(c)
    if not sigma_sq > 0 or not r >= 0:
        raise PreconditionError("need sigma_sq > 0 and r >= 0")
    t = trace_p_term(EV_spectrum, (r / c) / sigma_sq)
    return E_OVER_E_MINUS_1 * (1.0 + t) * _bernstein_exp(sigma_sq, c, r)


def martingale_bernstein_opnorm_bound(EV_spectrum, sigma_sq: float, c: float, r: float) -> float:
    """Union bound over lambda_max(S_n) and lambda_max(-S_n)."""
    return 2.0 * martingale_bernstein_bound(EV_spectrum, sigma_sq, c, r)


def minsker_threshold(c: float, sigma_sq: float) -> float:
    """Smallest r for which the comparator bound is stated: (c + sqrt(c^2 + sigma^2)) / 6."""
    return (c + math.sqrt(c * c + sigma_sq)) / 6.0


class OutsideValidityWarning(UserWarning):
    """A comparator formula was evaluated below its validity threshold."""


def minsker_martingale_bound(EV_spectrum, sigma_sq: float, c: float, r: float) -> float:
    """25 tr p(-(r/c) E V_n / sigma^2) exp(-r^2 / (2 (sigma^2 + r c / 3))).

    Below :func:`minsker_threshold` the formula is still returned, with an
    :class:`OutsideValidityWarning`.
    """
    c = _check_c(c)
    if not sigma_sq > 0 or not r >= 0:
        raise PreconditionError("need sigma_sq > 0 and r >= 0")
    if r < minsker_threshold(c, sigma_sq):
        warnings.warn(f"r = {r} is below the validity threshold {minsker_threshold(c, sigma_sq):.6g}",
                      OutsideValidityWarning, stacklevel=2)
    t = trace_p_term(EV_spectrum, (r / c) / sigma_sq)
    return MINSKER_CONSTANT * t * _bernstein_exp(sigma_sq, c, r)
