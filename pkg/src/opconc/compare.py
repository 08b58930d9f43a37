"""Comparisons against earlier matrix concentration constants and bounds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from opconc.bounds import Mode, ambient_subgaussian_bound
from opconc.errors import PreconditionError
from opconc.martingale import (
    OutsideValidityWarning,
    martingale_bernstein_bound,
    minsker_martingale_bound,
    minsker_threshold,
)
from opconc.psi import E_OVER_E_MINUS_1
from opconc.specmat import as_sym, intrinsic_dimension, is_psd


@dataclass(frozen=True)
class PriorConstant:
    source: str
    mode: str  # "opnorm" | "maxeig" | "martingale"
    value: float


PRIOR_CONSTANTS = (
    PriorConstant("minsker", "opnorm", 14.0),
    PriorConstant("tropp", "opnorm", 8.0),
    PriorConstant("minsker", "maxeig", 7.0),
    PriorConstant("tropp", "maxeig", 4.0),
    PriorConstant("minsker", "martingale", 25.0),
)

OURS = {"opnorm": Mode.OP_NORM.prefactor, "maxeig": Mode.MAX_EIG.prefactor, "martingale": E_OVER_E_MINUS_1}

CONSTANTS_FIELDS = ("mode", "source", "prior", "ours", "ratio", "note")


def constants_table() -> list[dict]:
    """Prefactor comparison.  The martingale row compares the leading scalars only;
    the full prefactors carry spectrum-dependent trace terms."""
    rows = []
    for pc in PRIOR_CONSTANTS:
        ours = OURS[pc.mode]
        note = "prefactor multiplies (1 + tr p) vs tr p; see martingale report" if pc.mode == "martingale" else ""
        rows.append({"mode": pc.mode, "source": pc.source, "prior": pc.value, "ours": ours,
                     "ratio": ours / pc.value, "note": note})
    return rows


INTRINSIC_FIELDS = ("r", "intrinsic_bound", "ambient_bound", "ratio")


def intrinsic_vs_ambient(V, d: int, sigma_sq: float | None, r_grid: Sequence[float]) -> list[dict]:
    """Operator-norm sub-Gaussian tail with d' = tr V / sigma^2 against the 2 d version.

    ``ratio`` is the bound ratio, which equals r(V)/d when sigma^2 = ||V||.
    """
    v = as_sym(V)
    if v.dim != d:
        raise PreconditionError(f"V has dimension {v.dim}, expected d = {d}")
    if not is_psd(v):
        raise PreconditionError("V must be positive semidefinite")
    norm = float(np.linalg.eigvalsh(v.values)[-1])
    s2 = norm if sigma_sq is None else float(sigma_sq)
    if s2 < norm * (1.0 - 1e-12):
        raise PreconditionError(f"sigma^2 = {s2} is below ||V|| = {norm}")
    d_prime = max(float(np.trace(v.values)) / s2, 1.0)
    rows = []
    for r in r_grid:
        ambient = ambient_subgaussian_bound(d, s2, float(r))
        intrinsic = Mode.OP_NORM.prefactor * d_prime * math.exp(-float(r) ** 2 / (2.0 * s2))
        rows.append({"r": float(r), "intrinsic_bound": intrinsic, "ambient_bound": ambient,
                     "ratio": d_prime / d})
    return rows


def intrinsic_ratio(V) -> float:
    v = as_sym(V)
    return intrinsic_dimension(v) / v.dim


SHARPENING_FIELDS = ("r", "ours", "minsker", "ratio", "valid")


class SharpeningViolation(AssertionError):
    pass


def martingale_sharpening_report(EV_spectrum, sigma_sq: float, c: float, r_grid: Sequence[float]) -> list[dict]:
    """Rows (r, ours, comparator, ratio, valid).

    Rows below the comparator's validity threshold are kept but flagged and
    excluded from the strict-improvement assertion.
    """
    thr = minsker_threshold(c, sigma_sq)
    rows = []
    for r in r_grid:
        r = float(r)
        valid = r >= thr
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OutsideValidityWarning)
            theirs = minsker_martingale_bound(EV_spectrum, sigma_sq, c, r)
        ours = martingale_bernstein_bound(EV_spectrum, sigma_sq, c, r)
        ratio = ours / theirs if theirs > 0 else math.inf
        rows.append({"r": r, "ours": ours, "minsker": theirs, "ratio": ratio, "valid": valid})
    if not any(row["valid"] for row in rows):
        raise PreconditionError(f"no grid point reaches the validity threshold r >= {thr!r}")
    bad = [row for row in rows if row["valid"] and not row["ratio"] < 1.0]
    if bad:
        raise SharpeningViolation(f"ratio >= 1 at r = {bad[0]['r']!r} (ratio {bad[0]['ratio']!r})")
    return rows
