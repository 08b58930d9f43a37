"""Exact enumeration and Monte Carlo checks of the tail bounds.

Monte Carlo work is split into fixed chunks of path indices.  Each chunk
returns integer counts or float sums that are reduced in chunk order, so the
output does not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import beta

from opconc.bounds import confidence_radius_from_variance
from opconc.ensembles import (
    CONDITIONALLY_SYMMETRIC,
    INDEPENDENT,
    CondSymMartingale,
    EnsembleConfig,
    PathBatch,
    RademacherSeries,
    batch_conditional_moments,
    sample_paths,
    theoretical_params,
)
from opconc.errors import CatalogError, EnumerationCapError, PreconditionError
from opconc.martingale import VProcessKind, check_pairing, increment, required_moments
from opconc.policy import get_policy
from opconc.psi import PsiFn, phi, psi_eval, varphi

CHUNK = 4096
SCALAR_ENUM_CAP = 22
MATRIX_ENUM_CAP = 14
_ENUM_BLOCK = 1 << 15

STATISTICS = ("sup_maxeig", "sup_opnorm", "joint_freedman")


@dataclass(frozen=True)
class Statistic:
    """Prefix-supremum statistic, or the joint Freedman event statistic.

    For ``joint_freedman`` the value is lambda_max(S_n) on paths with
    lambda_max(V_n) <= sigma_sq and -inf elsewhere, so ``value >= r`` is
    exactly the joint event.
    """

    kind: str
    sigma_sq: float | None = None
    v_kind: VProcessKind | None = None

    def __post_init__(self):
        if self.kind not in STATISTICS:
            raise ValueError(f"unknown statistic {self.kind!r}; expected one of {STATISTICS}")
        if self.kind == "joint_freedman":
            if self.sigma_sq is None or self.v_kind is None:
                raise ValueError("joint_freedman needs sigma_sq and v_kind")
            object.__setattr__(self, "v_kind", VProcessKind.parse(self.v_kind))

    @classmethod
    def parse(cls, value: "Statistic | str | dict") -> "Statistic":
        if isinstance(value, Statistic):
            return value
        if isinstance(value, str):
            return cls(value)
        return cls(**value)

    @property
    def label(self) -> str:
        if self.kind == "joint_freedman":
            return f"joint_freedman(sigma_sq={self.sigma_sq!r},v={self.v_kind.value})"
        return self.kind


@dataclass(frozen=True)
class TailEstimate:
    r: float
    p_hat: float
    upper_conf: float
    trials: int
    statistic: str
    count: int

    def to_row(self) -> dict:
        return {"statistic": self.statistic, "r": self.r, "p_hat": self.p_hat,
                "upper_conf": self.upper_conf, "trials": self.trials}


def binomial_upper(count: int, trials: int, alpha: float | None = None) -> float:
    """One-sided exact (Clopper-Pearson) upper confidence limit at level ``alpha``."""
    alpha = get_policy().binomial_alpha if alpha is None else alpha
    if count >= trials:
        return 1.0
    return float(beta.ppf(1.0 - alpha, count + 1, trials - count))


def _v_process_values(cfg: EnsembleConfig, batch: PathBatch, v_kind: VProcessKind) -> np.ndarray:
    """V_t for t = 1..n on every path, shape (P, n, d, d)."""
    names = required_moments(v_kind)
    moments = batch_conditional_moments(cfg, batch, names) if names else None
    return np.cumsum(increment(v_kind, batch.X, moments), axis=1)


def statistic_values(cfg: EnsembleConfig, batch: PathBatch, stat: Statistic) -> np.ndarray:
    S = np.cumsum(batch.X, axis=1)
    if stat.kind == "joint_freedman":
        top = np.linalg.eigvalsh(S[:, -1])[:, -1]
        V = _v_process_values(cfg, batch, stat.v_kind)[:, -1]
        v_top = np.linalg.eigvalsh(V)[:, -1]
        return np.where(v_top <= stat.sigma_sq, top, -np.inf)
    w = S[..., 0, :] if S.shape[-1] == 1 else np.linalg.eigvalsh(S)
    if stat.kind == "sup_maxeig":
        return w[..., -1].max(axis=1)
    return np.maximum(w[..., -1], -w[..., 0]).max(axis=1)


def _counts(values: np.ndarray, r_grid: np.ndarray) -> np.ndarray:
    v = np.sort(values)
    return v.size - np.searchsorted(v, r_grid, side="left")


# -- exact enumeration -------------------------------------------------------


def enumeration_cap(dim: int) -> int:
    return SCALAR_ENUM_CAP if dim == 1 else MATRIX_ENUM_CAP


def enumerate_exact(cfg: RademacherSeries, r_grid: Sequence[float], statistic: Statistic | str = "sup_opnorm",
                    n: int | None = None) -> list[float]:
    """Exact P(statistic >= r) over all 2**n sign patterns.

    Probabilities are count / 2**n and are exact in floating point for n <= 52.
    """
    if not isinstance(cfg, RademacherSeries):
        raise PreconditionError("exact enumeration is only defined for Rademacher series")
    stat = Statistic.parse(statistic)
    n = cfg.length if n is None else int(n)
    cap = enumeration_cap(cfg.dim)
    if n > cap:
        cost = (1 << n) * n * cfg.dim**3
        raise EnumerationCapError(
            f"n = {n} exceeds the enumeration cap {cap} for dim {cfg.dim}: 2**{n} paths, ~{cost:.3g} flops"
        )
    r = np.asarray(r_grid, dtype=float)
    A = np.stack([a.values for a in cfg.coeffs[:n]])
    total = 1 << n
    counts = np.zeros(r.size, dtype=np.int64)
    bits = np.arange(n, dtype=np.int64)
    for start in range(0, total, _ENUM_BLOCK):
        k = np.arange(start, min(start + _ENUM_BLOCK, total), dtype=np.int64)
        signs = np.where((k[:, None] >> bits[None, :]) & 1, -1.0, 1.0)
        batch = PathBatch(signs[:, :, None, None] * A[None], np.broadcast_to(A, (k.size,) + A.shape), signs)
        counts += _counts(statistic_values(cfg, batch, stat), r)
    return [float(c) / total for c in counts]


# -- Monte Carlo ---------------------------------------------------------------


def _chunks(trials: int) -> list[np.ndarray]:
    return [np.arange(s, min(s + CHUNK, trials)) for s in range(0, trials, CHUNK)]


def _map_chunks(fn: Callable[[np.ndarray], object], trials: int, threads: int) -> list:
    chunks = _chunks(trials)
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def run_trials(cfg: EnsembleConfig, n: int, trials: int, r_grid: Sequence[float],
               statistic: Statistic | str = "sup_opnorm", threads: int = 1) -> list[TailEstimate]:
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    stat = Statistic.parse(statistic)
    r = np.asarray(r_grid, dtype=float)

    def work(paths):
        return _counts(statistic_values(cfg, sample_paths(cfg, paths, n), stat), r)

    counts = np.sum(_map_chunks(work, trials, threads), axis=0) if r.size else np.zeros(0, dtype=np.int64)
    return [
        TailEstimate(float(ri), int(c) / trials, binomial_upper(int(c), trials), trials, stat.label, int(c))
        for ri, c in zip(r, counts)
    ]


@dataclass
class BoundComparison:
    estimate: TailEstimate
    bound_kind: str
    bound_value: float
    status: str  # PASS | FAIL | UNVERIFIABLE

    def to_row(self) -> dict:
        e = self.estimate
        return {"statistic": e.statistic, "r": e.r, "p_hat": e.p_hat, "upper_conf": e.upper_conf,
                "bound_kind": self.bound_kind, "bound_value": self.bound_value, "pass": self.status}


MC_CSV_FIELDS = ("statistic", "r", "p_hat", "upper_conf", "bound_kind", "bound_value", "pass")


def compare_to_bound(estimates: Sequence[TailEstimate], bound_kind: str, bound_values: Sequence[float]
                     ) -> list[BoundComparison]:
    """PASS when the exact binomial upper limit sits below the raw bound.

    Bounds under the Monte Carlo floor cannot be confirmed by plain sampling
    and are reported as UNVERIFIABLE unless the point estimate already
    exceeds them.
    """
    out = []
    floor = get_policy().mc_floor
    for est, b in zip(estimates, bound_values):
        if est.upper_conf <= b:
            status = "PASS"
        elif b < floor and est.p_hat <= b:
            status = "UNVERIFIABLE"
        else:
            status = "FAIL"
        out.append(BoundComparison(est, bound_kind, float(b), status))
    return out


@dataclass
class StepReport:
    """Per-step sample means of a process and of its increments."""

    means: np.ndarray  # t = 0..n
    ses: np.ndarray
    diff_means: np.ndarray  # t = 1..n
    diff_ses: np.ndarray
    passed: bool
    trials: int
    extra: dict = field(default_factory=dict)

    @property
    def worst_z(self) -> float:
        z = self.diff_means / np.where(self.diff_ses > 0, self.diff_ses, np.inf)
        return float(np.max(z)) if z.size else 0.0


class _Moments:
    """Running sums for means and standard errors; chunk-order reduction."""

    def __init__(self):
        self.n = 0
        self.s1 = None
        self.s2 = None

    def add(self, part: tuple):
        k, s1, s2 = part
        self.n += k
        self.s1 = s1 if self.s1 is None else self.s1 + s1
        self.s2 = s2 if self.s2 is None else self.s2 + s2

    def result(self) -> tuple[np.ndarray, np.ndarray]:
        mean = self.s1 / self.n
        var = np.maximum(self.s2 / self.n - mean * mean, 0.0) * self.n / max(self.n - 1, 1)
        return mean, np.sqrt(var / self.n)


def _sums(values: np.ndarray) -> tuple:
    return values.shape[0], values.sum(axis=0), (values * values).sum(axis=0)


_SUBMART_FNS = {"phi": phi, "varphi": varphi}


def submartingale_check(cfg: EnsembleConfig, n: int, theta: float, f: str, trials: int,
                        threads: int = 1) -> StepReport:
    """E tr f(theta S_i) for i = 0..n should be nondecreasing.

    PASS when no increment mean is below -n_sigma standard errors.  The
    report's ``extra["trace_exp"]`` carries E tr exp(theta S_i) with its
    standard errors for closed-form comparisons.
    """
    if not isinstance(cfg, INDEPENDENT):
        raise PreconditionError("the submartingale property needs independent increments; "
                                f"{cfg.kind} is a martingale ensemble")
    if f not in _SUBMART_FNS:
        raise ValueError(f"f must be one of {sorted(_SUBMART_FNS)}")
    fn = _SUBMART_FNS[f]
    d = cfg.dim

    def work(paths):
        S = np.cumsum(sample_paths(cfg, paths, n).X, axis=1)
        w = theta * np.linalg.eigvalsh(S)
        vals = np.concatenate([np.zeros((len(paths), 1)), fn(w).sum(axis=-1)], axis=1)
        tr_exp = np.concatenate([np.full((len(paths), 1), float(d)), np.exp(w).sum(axis=-1)], axis=1)
        return _sums(vals), _sums(np.diff(vals, axis=1)), _sums(tr_exp)

    acc = [_Moments(), _Moments(), _Moments()]
    for parts in _map_chunks(work, trials, threads):
        for a, p in zip(acc, parts):
            a.add(p)
    means, ses = acc[0].result()
    dm, dse = acc[1].result()
    em, ese = acc[2].result()
    k = get_policy().n_sigma
    passed = bool(np.all(dm >= -k * dse))
    return StepReport(means, ses, dm, dse, passed, trials, {"trace_exp": (em, ese)})


def _check_ensemble_pairing(cfg: EnsembleConfig, kind: VProcessKind) -> None:
    if kind is VProcessKind.BRACKET and not isinstance(cfg, CONDITIONALLY_SYMMETRIC):
        raise CatalogError("bracket V-process needs conditionally symmetric increments "
                           "(conditionally symmetric construction)")
    if kind is VProcessKind.HOEFFDING and not isinstance(cfg, (RademacherSeries, CondSymMartingale)):
        raise CatalogError("Hoeffding V-process needs a predictable A_t with X_t^2 <= A_t^2")


def supermartingale_check(cfg: EnsembleConfig, v_kind: VProcessKind | str, psi: PsiFn, theta: float,
                          trials: int, n: int, threads: int = 1) -> StepReport:
    """Per-step drift of R_t = tr exp(theta S_t - psi(theta) V_t), R_0 = d.

    PASS when every step's mean increment is at most +n_sigma standard errors.
    """
    kind = VProcessKind.parse(v_kind)
    params = theoretical_params(cfg, n)
    check_pairing(kind, psi, params.c_bound)
    _check_ensemble_pairing(cfg, kind)
    s = psi_eval(psi, theta)
    d = cfg.dim

    def work(paths):
        batch = sample_paths(cfg, paths, n)
        S = np.cumsum(batch.X, axis=1)
        V = _v_process_values(cfg, batch, kind)
        R = np.exp(np.linalg.eigvalsh(theta * S - s * V)).sum(axis=-1)
        R = np.concatenate([np.full((len(paths), 1), float(d)), R], axis=1)
        return _sums(R), _sums(np.diff(R, axis=1))

    acc = [_Moments(), _Moments()]
    for parts in _map_chunks(work, trials, threads):
        for a, p in zip(acc, parts):
            a.add(p)
    means, ses = acc[0].result()
    dm, dse = acc[1].result()
    k = get_policy().n_sigma
    passed = bool(np.all(dm <= k * dse))
    return StepReport(means, ses, dm, dse, passed, trials)


@dataclass(frozen=True)
class CoverageReport:
    radius: float
    coverage: float
    threshold: float
    trials: int
    delta: float
    normalization: str

    @property
    def passed(self) -> bool:
        return self.coverage >= self.threshold


def coverage_check(cfg: EnsembleConfig, n: int, delta: float, trials: int, normalization: str = "per_sum",
                   threads: int = 1) -> CoverageReport:
    """Fraction of paths with ||S_n / n|| inside the (1 - delta) confidence radius."""
    params = theoretical_params(cfg, n)
    if params.c_bound is None:
        raise PreconditionError(f"{cfg.kind} ensemble is unbounded; the interval needs ||X_i|| <= c")
    radius = confidence_radius_from_variance(n, params.c_bound, params.V_n, delta, normalization)

    def work(paths):
        S = sample_paths(cfg, paths, n).X.sum(axis=1) / n
        w = np.linalg.eigvalsh(S)
        return int(np.count_nonzero(np.maximum(w[:, -1], -w[:, 0]) <= radius))

    inside = sum(_map_chunks(work, trials, threads))
    k = get_policy().n_sigma
    threshold = 1.0 - delta - k * math.sqrt(delta * (1.0 - delta) / trials)
    return CoverageReport(radius, inside / trials, threshold, trials, delta, normalization)
