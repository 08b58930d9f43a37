"""Random symmetric-matrix sequences with known theoretical parameters.

Randomness is counter-based: every uniform is a keyed hash of
(seed_root, path_index, step, lane), so path i is the same whether it is drawn
alone, in a batch, or by another worker.  The hash is the SplitMix64
finalizer chained over the four coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from opconc.errors import ConfigError, PreconditionError
from opconc.martingale import ConditionalMoments
from opconc.psi import PsiFn
from opconc.specmat import SymMatrix, batch_spectral, batch_square, eigvals, op_norm

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_E_ABS_GAUSS_CUBED = 2.0 * math.sqrt(2.0 / math.pi)

# lanes partition the hash space per step
_LANE_SIGN = 0
_LANE_GAUSS = 1
_LANE_VECTOR = 1 << 20  # + attempt * d + coordinate


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.array(int(x) & _MASK64, dtype=np.uint64)
    return np.asarray(x).astype(np.uint64)


def counter_uniform(seed_root: int, path, step, lane) -> np.ndarray:
    """Uniform(0, 1) variates, one per broadcast (path, step, lane) triple."""
    with np.errstate(over="ignore"):
        h = _mix(_u64(seed_root) + _GOLDEN)
        for coord in (path, step, lane):
            h = _mix(h + (_u64(coord) + np.uint64(1)) * _GOLDEN)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def _sign(seed_root, paths, steps) -> np.ndarray:
    u = counter_uniform(seed_root, paths[:, None], steps[None, :], _LANE_SIGN)
    return np.where(u < 0.5, -1.0, 1.0)


def _gauss(seed_root, path, step, lane) -> np.ndarray:
    return ndtri(counter_uniform(seed_root, path, step, lane))


def _mat(m) -> SymMatrix:
    return m if isinstance(m, SymMatrix) else SymMatrix(m)


# -- configs -----------------------------------------------------------------


@dataclass(frozen=True)
class RademacherSeries:
    """X_i = eps_i A_i with independent signs."""

    coeffs: tuple
    seed_root: int
    kind: str = field(default="rademacher", init=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(_mat(a) for a in self.coeffs))
        _check_coeffs(self.coeffs)

    @property
    def dim(self) -> int:
        return self.coeffs[0].dim

    @property
    def length(self) -> int:
        return len(self.coeffs)


@dataclass(frozen=True)
class GaussianSeries:
    """X_i = gamma_i A_i with independent standard normals."""

    coeffs: tuple
    seed_root: int
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(_mat(a) for a in self.coeffs))
        _check_coeffs(self.coeffs)

    @property
    def dim(self) -> int:
        return self.coeffs[0].dim

    @property
    def length(self) -> int:
        return len(self.coeffs)


@dataclass(frozen=True)
class BoundedCovariance:
    """X_i = v v^T - pop_cov with v ~ N(0, pop_cov), resampled while ||X_i|| > clip.

    The analytic second moment ignores the (rare) rejections; the resulting
    bias on E X_i and E X_i^2 is small when clip sits far in the tail and is
    checked empirically in the tests.
    """

    pop_cov: SymMatrix
    clip: float
    n: int
    seed_root: int
    kind: str = field(default="bounded_covariance", init=False)

    def __post_init__(self):
        object.__setattr__(self, "pop_cov", _mat(self.pop_cov))
        if not self.clip > 0:
            raise ConfigError(f"clip must be > 0, got {self.clip}")
        if eigvals(self.pop_cov)[-1] < -1e-12:
            raise ConfigError("pop_cov must be PSD")
        if self.n < 1:
            raise ConfigError("n must be >= 1")

    @property
    def dim(self) -> int:
        return self.pop_cov.dim

    @property
    def length(self) -> int:
        return self.n


@dataclass(frozen=True)
class CondSymMartingale:
    """X_t = eps_t (A + drive * tanh(S_{t-1})), tanh applied spectrally.

    The sign is drawn independently of the past, so X_t and -X_t have the
    same conditional law; ||X_t|| <= ||A|| + drive.
    """

    base: SymMatrix
    drive: float
    n: int
    seed_root: int
    kind: str = field(default="cond_sym_martingale", init=False)

    def __post_init__(self):
        object.__setattr__(self, "base", _mat(self.base))
        if not self.drive >= 0:
            raise ConfigError(f"drive must be >= 0, got {self.drive}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def length(self) -> int:
        return self.n


EnsembleConfig = RademacherSeries | GaussianSeries | BoundedCovariance | CondSymMartingale

CONDITIONALLY_SYMMETRIC = (RademacherSeries, GaussianSeries, CondSymMartingale)
INDEPENDENT = (RademacherSeries, GaussianSeries, BoundedCovariance)


def _check_coeffs(coeffs: Sequence[SymMatrix]) -> None:
    if not coeffs:
        raise ConfigError("coefficient list is empty")
    d = coeffs[0].dim
    if any(a.dim != d for a in coeffs):
        raise ConfigError("all coefficient matrices must share one dimension")


def ensemble_from_json(obj: dict) -> EnsembleConfig:
    """Parse an ensemble config; ``seed_root`` is mandatory."""
    obj = dict(obj)
    kind = obj.pop("kind", None)
    if "seed_root" not in obj:
        raise ConfigError("ensemble config needs an explicit seed_root")
    seed = obj.pop("seed_root")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed_root must be an integer")
    try:
        if kind in ("rademacher", "gaussian"):
            repeat = int(obj.pop("repeat", 1))
            coeffs = [SymMatrix.from_json(m) for m in obj.pop("coeffs")] * repeat
            _no_extra(obj, kind)
            cls = RademacherSeries if kind == "rademacher" else GaussianSeries
            return cls(tuple(coeffs), seed)
        if kind == "bounded_covariance":
            cfg = BoundedCovariance(SymMatrix.from_json(obj.pop("pop_cov")), float(obj.pop("clip")),
                                    int(obj.pop("n")), seed)
            _no_extra(obj, kind)
            return cfg
        if kind == "cond_sym_martingale":
            cfg = CondSymMartingale(SymMatrix.from_json(obj.pop("base")), float(obj.pop("drive")),
                                    int(obj.pop("n")), seed)
            _no_extra(obj, kind)
            return cfg
    except KeyError as exc:
        raise ConfigError(f"{kind} ensemble is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {kind} ensemble: {exc}") from None
    raise ConfigError(f"unknown ensemble kind {kind!r}")


def _no_extra(obj: dict, kind: str) -> None:
    if obj:
        raise ConfigError(f"unknown fields for {kind} ensemble: {sorted(obj)}")


def ensemble_to_json(cfg: EnsembleConfig) -> dict:
    if isinstance(cfg, (RademacherSeries, GaussianSeries)):
        return {"kind": cfg.kind, "coeffs": [a.to_json() for a in cfg.coeffs], "seed_root": cfg.seed_root}
    if isinstance(cfg, BoundedCovariance):
        return {"kind": cfg.kind, "pop_cov": cfg.pop_cov.to_json(), "clip": cfg.clip, "n": cfg.n,
                "seed_root": cfg.seed_root}
    return {"kind": cfg.kind, "base": cfg.base.to_json(), "drive": cfg.drive, "n": cfg.n,
            "seed_root": cfg.seed_root}


# -- sampling ----------------------------------------------------------------


@dataclass
class PathBatch:
    """Increments X (P, n, d, d) and, where defined, the predictable coefficient
    C with X_t = eps_t C_t (P, n, d, d)."""

    X: np.ndarray
    coeff: np.ndarray | None = None
    noise: np.ndarray | None = None  # scalar multipliers eps_t or gamma_t, (P, n)


def _check_n(cfg: EnsembleConfig, n: int) -> int:
    n = int(n)
    if n < 1 or n > cfg.length:
        raise PreconditionError(f"n = {n} outside 1..{cfg.length} for {cfg.kind} ensemble")
    return n


def sample_paths(cfg: EnsembleConfig, path_indices, n: int) -> PathBatch:
    n = _check_n(cfg, n)
    paths = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    steps = np.arange(n)
    if isinstance(cfg, (RademacherSeries, GaussianSeries)):
        A = np.stack([a.values for a in cfg.coeffs[:n]])
        if isinstance(cfg, RademacherSeries):
            mult = _sign(cfg.seed_root, paths, steps)
        else:
            mult = _gauss(cfg.seed_root, paths[:, None], steps[None, :], _LANE_GAUSS)
        X = mult[:, :, None, None] * A[None]
        return PathBatch(X, np.broadcast_to(A, X.shape), mult)
    if isinstance(cfg, CondSymMartingale):
        d = cfg.dim
        eps = _sign(cfg.seed_root, paths, steps)
        A = cfg.base.values
        X = np.empty((paths.size, n, d, d))
        C = np.empty_like(X)
        S = np.zeros((paths.size, d, d))
        for t in range(n):
            if cfg.drive > 0:
                C[:, t] = A + cfg.drive * batch_spectral(S, np.tanh)
            else:
                C[:, t] = A
            X[:, t] = eps[:, t, None, None] * C[:, t]
            S = S + X[:, t]
        return PathBatch(X, C, eps)
    return PathBatch(_sample_bounded_covariance(cfg, paths, n))


def _sample_bounded_covariance(cfg: BoundedCovariance, paths: np.ndarray, n: int) -> np.ndarray:
    d = cfg.dim
    root = batch_spectral(cfg.pop_cov.values, lambda w: np.sqrt(np.maximum(w, 0.0)))
    sigma = cfg.pop_cov.values
    X = np.empty((paths.size, n, d, d))
    pending = np.ones((paths.size, n), dtype=bool)
    coords = np.arange(d)
    for attempt in range(10_000):
        pi, ti = np.nonzero(pending)
        if pi.size == 0:
            return X
        lanes = _LANE_VECTOR + attempt * d + coords
        z = _gauss(cfg.seed_root, paths[pi][:, None], ti[:, None], lanes[None, :])
        v = z @ root
        x = v[:, :, None] * v[:, None, :] - sigma
        w = np.linalg.eigvalsh(x)
        ok = np.maximum(w[:, -1], -w[:, 0]) <= cfg.clip
        X[pi[ok], ti[ok]] = x[ok]
        pending[pi[ok], ti[ok]] = False
    raise PreconditionError(f"clip = {cfg.clip} rejects nearly every sample; raise it")


def sample_path(cfg: EnsembleConfig, path_index: int, n: int) -> list[SymMatrix]:
    X = sample_paths(cfg, [path_index], n).X[0]
    return [SymMatrix._trusted(x) for x in X]


# -- theory ------------------------------------------------------------------


@dataclass(frozen=True)
class TheoreticalParams:
    sigma_sq: float
    c_bound: float | None
    V_n: SymMatrix
    trace_V: float
    d_prime: float
    psi_valid: tuple


def _gaussian_fourth(sigma: np.ndarray) -> np.ndarray:
    # E (v v^T - S)^2 = S^2 + tr(S) S for v ~ N(0, S)
    return sigma @ sigma + np.trace(sigma) * sigma


def theoretical_params(cfg: EnsembleConfig, n: int) -> TheoreticalParams:
    n = _check_n(cfg, n)
    if isinstance(cfg, (RademacherSeries, GaussianSeries)):
        V = sum((a.square().values for a in cfg.coeffs[:n]), np.zeros((cfg.dim, cfg.dim)))
        if isinstance(cfg, RademacherSeries):
            c = max(op_norm(a) for a in cfg.coeffs[:n])
            psis = (PsiFn.normal(), PsiFn.poisson(c), PsiFn.gamma(c))
        else:
            c = None
            psis = (PsiFn.normal(),)
    elif isinstance(cfg, BoundedCovariance):
        V = n * _gaussian_fourth(cfg.pop_cov.values)
        c = cfg.clip
        psis = (PsiFn.poisson(c), PsiFn.gamma(c))
    else:
        c = op_norm(cfg.base) + cfg.drive
        if cfg.drive == 0:
            V = n * cfg.base.square().values
        else:
            # Loewner upper bound on every realization of <S>_n
            V = n * c * c * np.eye(cfg.dim)
        psis = (PsiFn.normal(), PsiFn.poisson(c), PsiFn.gamma(c))
    V = SymMatrix(V)
    sigma_sq = float(eigvals(V)[0])
    tr = float(np.trace(V.values))
    if not sigma_sq > 0:
        raise PreconditionError("variance proxy is zero; the ensemble is degenerate")
    return TheoreticalParams(sigma_sq, c, V, tr, max(tr / sigma_sq, 1.0), psis)


def _abs_cubed(x: np.ndarray) -> np.ndarray:
    return batch_spectral(x, lambda w: np.abs(w) ** 3)


def conditional_moments(cfg: EnsembleConfig, history: Sequence) -> ConditionalMoments:
    """Exact moments of X_t given X_1..X_{t-1} (t = len(history) + 1)."""
    t = len(history)
    if t >= cfg.length:
        raise PreconditionError(f"history of length {t} leaves no further step")
    if isinstance(cfg, (RademacherSeries, CondSymMartingale)):
        if isinstance(cfg, RademacherSeries):
            C = cfg.coeffs[t].values
        elif cfg.drive > 0 and t > 0:
            S = np.sum([np.asarray(h, dtype=float) for h in history], axis=0)
            C = cfg.base.values + cfg.drive * batch_spectral(S, np.tanh)
        else:
            C = cfg.base.values
        C2 = batch_square(C)
        return ConditionalMoments(second=C2, neg_second=0.5 * C2, abs_third=_abs_cubed(C),
                                  hoeffding=C2, declared=C2)
    if isinstance(cfg, GaussianSeries):
        A = cfg.coeffs[t].values
        A2 = batch_square(A)
        return ConditionalMoments(second=A2, neg_second=0.5 * A2, abs_third=_E_ABS_GAUSS_CUBED * _abs_cubed(A))
    m2 = _gaussian_fourth(cfg.pop_cov.values)
    return ConditionalMoments(second=m2, declared=m2)


def conditional_second_moment(cfg: EnsembleConfig, history: Sequence) -> SymMatrix:
    return SymMatrix._trusted(conditional_moments(cfg, history).second)


def batch_conditional_moments(cfg: EnsembleConfig, batch: PathBatch, names: Sequence[str]) -> ConditionalMoments:
    """Vectorized :func:`conditional_moments` for every step of every path in ``batch``."""
    names = set(names)
    out = {}
    if isinstance(cfg, (RademacherSeries, CondSymMartingale)):
        C = batch.coeff
        C2 = batch_square(C) if names & {"second", "neg_second", "hoeffding", "declared"} else None
        out = {"second": C2, "hoeffding": C2, "declared": C2,
               "neg_second": None if C2 is None else 0.5 * C2}
        if "abs_third" in names:
            out["abs_third"] = _abs_cubed(C)
    elif isinstance(cfg, GaussianSeries):
        A = batch.coeff
        A2 = batch_square(A)
        out = {"second": A2, "neg_second": 0.5 * A2}
        if "abs_third" in names:
            out["abs_third"] = _E_ABS_GAUSS_CUBED * _abs_cubed(A)
    else:
        m2 = np.broadcast_to(_gaussian_fourth(cfg.pop_cov.values), batch.X.shape)
        out = {"second": m2, "declared": m2}
    missing = [m for m in names if out.get(m) is None]
    if missing:
        raise PreconditionError(f"{cfg.kind} ensemble does not supply conditional moments {missing}")
    return ConditionalMoments(**{k: v for k, v in out.items() if k in names})
