"""Dense real symmetric matrices and their spectral calculus.

Everything downstream (variance proxies, partial sums, V-processes) is a
:class:`SymMatrix`.  Spectral functions follow f(A) = Q f(L) Q^T with the
eigendecomposition delegated to LAPACK's symmetric driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from opconc.errors import DomainError, EigenSolverError, PreconditionError, SymmetryError
from opconc.policy import get_policy

ArrayLike = Union["SymMatrix", np.ndarray, Sequence[Sequence[float]], float]


class SymMatrix:
    """Immutable dense real symmetric d x d matrix.

    Small asymmetries (up to ``sym_tol`` relative to ``max(1, max|a_ij|)``)
    are removed by averaging with the transpose; anything larger is rejected.
    """

    __slots__ = ("_a",)

    def __init__(self, entries: ArrayLike):
        if isinstance(entries, SymMatrix):
            self._a = entries._a
            return
        a = np.array(entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        scale = max(1.0, float(np.max(np.abs(a))))
        asym = float(np.max(np.abs(a - a.T)))
        if asym > get_policy().sym_tol * scale:
            raise SymmetryError(f"max |a_ij - a_ji| = {asym:.3e} exceeds tolerance")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._a = a

    @classmethod
    def _trusted(cls, a: np.ndarray) -> "SymMatrix":
        # caller guarantees an exactly symmetric finite float array
        obj = cls.__new__(cls)
        a = np.array(a, dtype=float)
        a.setflags(write=False)
        obj._a = a
        return obj

    @classmethod
    def identity(cls, dim: int) -> "SymMatrix":
        return cls._trusted(np.eye(dim))

    @classmethod
    def zeros(cls, dim: int) -> "SymMatrix":
        return cls._trusted(np.zeros((dim, dim)))

    @classmethod
    def diag(cls, values: Iterable[float]) -> "SymMatrix":
        return cls(np.diag(np.asarray(list(values), dtype=float)))

    @classmethod
    def from_json(cls, obj: dict) -> "SymMatrix":
        """Parse the literal ``{"dim": d, "rows": [[...], ...]}``."""
        if not isinstance(obj, dict) or set(obj) != {"dim", "rows"}:
            raise ValueError('matrix literal must be {"dim": d, "rows": [[...]]}')
        m = cls(obj["rows"])
        if m.dim != int(obj["dim"]):
            raise ValueError(f"dim={obj['dim']} does not match {m.dim} rows")
        return m

    def to_json(self) -> dict:
        # float -> JSON via repr keeps all 17 significant digits
        return {"dim": self.dim, "rows": [[float(x) for x in row] for row in self._a]}

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @property
    def values(self) -> np.ndarray:
        """Read-only view of the entries."""
        return self._a

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._a.copy() if copy else self._a
        return self._a.astype(dtype)

    def __add__(self, other):
        return SymMatrix._trusted(self._a + as_array(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SymMatrix._trusted(self._a - as_array(other))

    def __rsub__(self, other):
        return SymMatrix._trusted(as_array(other) - self._a)

    def __neg__(self):
        return SymMatrix._trusted(-self._a)

    def __mul__(self, scalar: float):
        if not np.isscalar(scalar):
            return NotImplemented
        return SymMatrix._trusted(float(scalar) * self._a)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return SymMatrix._trusted(self._a / float(scalar))

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self._a.shape == other._a.shape and bool(np.array_equal(self._a, other._a))

    def __hash__(self):
        return hash((self._a.shape, self._a.tobytes()))

    def __repr__(self):
        return f"SymMatrix({self._a.tolist()!r})"

    def square(self) -> "SymMatrix":
        """A @ A, symmetrized against rounding."""
        p = self._a @ self._a
        return SymMatrix._trusted(0.5 * (p + p.T))


def as_sym(a: ArrayLike) -> SymMatrix:
    return a if isinstance(a, SymMatrix) else SymMatrix(a)


def as_array(a: ArrayLike) -> np.ndarray:
    return a.values if isinstance(a, SymMatrix) else np.asarray(a, dtype=float)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in descending order with matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self, f: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
        lam = self.eigenvalues if f is None else f(self.eigenvalues)
        q = self.eigenvectors
        out = (q * lam) @ q.T
        return 0.5 * (out + out.T)


def eigh(a: ArrayLike) -> Spectrum:
    m = as_sym(a)
    try:
        w, q = np.linalg.eigh(m.values)
    except np.linalg.LinAlgError as exc:
        try:
            cond = float(np.linalg.cond(m.values))
        except np.linalg.LinAlgError:
            cond = math.inf
        raise EigenSolverError(
            f"eigh failed for {m.dim}x{m.dim} matrix (norm_max={np.max(np.abs(m.values)):.3e}, "
            f"cond={cond:.3e}): {exc}"
        ) from exc
    w = w[::-1].copy()
    q = q[:, ::-1].copy()
    w.setflags(write=False)
    q.setflags(write=False)
    return Spectrum(w, q)


def eigvals(a: ArrayLike) -> np.ndarray:
    """Eigenvalues only, descending."""
    return np.linalg.eigvalsh(as_array(a))[::-1]


def _eval_on_spectrum(f: Callable, lam: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        try:
            out = np.asarray(f(lam), dtype=float)
            if out.shape != lam.shape:
                raise TypeError
        except (TypeError, ValueError):
            out = np.array([float(f(float(x))) for x in lam])
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise DomainError(f"spectral function is not finite at eigenvalue {lam[bad][0]!r}")
    return out


def apply_spectral_fn(a: ArrayLike, f: Callable) -> SymMatrix:
    """Q f(L) Q^T.

    ``f`` may be vectorized over a numpy array or a plain scalar function.
    """
    decomp = eigh(a)
    return SymMatrix._trusted(decomp.reconstruct(lambda lam: _eval_on_spectrum(f, lam)))


def trace_fn(a: ArrayLike, f: Callable) -> float:
    """tr f(A) from the eigenvalues alone."""
    return float(np.sum(_eval_on_spectrum(f, eigvals(a))))


def trace(a: ArrayLike) -> float:
    return float(np.trace(as_array(a)))


def lambda_max(a: ArrayLike) -> float:
    return float(eigvals(a)[0])


def lambda_min(a: ArrayLike) -> float:
    return float(eigvals(a)[-1])


def op_norm(a: ArrayLike) -> float:
    w = eigvals(a)
    return float(max(w[0], -w[-1], 0.0))


def is_psd(a: ArrayLike, tol: float | None = None) -> bool:
    w = eigvals(a)
    tol = get_policy().psd_tol if tol is None else tol
    return bool(w[-1] >= -tol * max(float(np.max(np.abs(w))), 1e-300))


def intrinsic_dimension(a: ArrayLike) -> float:
    """tr(A) / ||A|| for positive semidefinite A != 0."""
    w = eigvals(a)
    norm = float(max(w[0], -w[-1]))
    if norm == 0.0:
        raise PreconditionError("intrinsic dimension of the zero matrix is undefined (0/0)")
    if w[-1] < -get_policy().psd_tol * norm:
        raise PreconditionError(
            f"intrinsic dimension needs a PSD matrix; lambda_min = {w[-1]:.3e}"
        )
    return float(np.trace(as_array(a))) / norm


def loewner_leq(a: ArrayLike, b: ArrayLike, tol: float = 0.0) -> bool:
    """True iff lambda_min(B - A) >= -tol."""
    a_ = as_array(a)
    b_ = as_array(b)
    if a_.shape != b_.shape:
        raise ValueError(f"dimension mismatch: {a_.shape} vs {b_.shape}")
    return bool(np.linalg.eigvalsh(b_ - a_)[0] >= -tol)


def batch_spectral(x: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply ``f`` spectrally to a stack of symmetric matrices (..., d, d)."""
    w, q = np.linalg.eigh(x)
    fw = f(w)
    out = (q * fw[..., None, :]) @ np.swapaxes(q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def batch_square(x: np.ndarray) -> np.ndarray:
    p = x @ x
    return 0.5 * (p + np.swapaxes(p, -1, -2))
