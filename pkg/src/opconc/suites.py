"""Deterministic inequality suites over dense grids.

Each suite returns a :class:`SuiteResult` naming the first failing grid
point.  Comparisons allow a few ulps of the larger side, which covers
rounding in the two evaluations and nothing more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from opconc.bounds import trace_exp_gap
from opconc.psi import g_fn, h_fn, phi

GRID_POINTS = 10_000
_ULPS = 8.0 * np.finfo(float).eps


@dataclass(frozen=True)
class SuiteResult:
    name: str
    checked: int
    failures: int
    worst_point: float | None = None
    worst_excess: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_row(self) -> dict:
        return {"suite": self.name, "checked": self.checked, "failures": self.failures,
                "worst_point": self.worst_point, "worst_excess": self.worst_excess,
                "status": "PASS" if self.passed else "FAIL", "detail": self.detail}


def _leq(name: str, u: np.ndarray, lhs: np.ndarray, rhs: np.ndarray, detail: str) -> SuiteResult:
    """Check lhs <= rhs pointwise up to a few ulps; report the worst offender."""
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    excess = (lhs - rhs) / np.where(scale > 0, scale, 1.0)
    bad = excess > _ULPS
    k = int(np.argmax(excess))
    if bad.any():
        return SuiteResult(name, u.size, int(bad.sum()), float(u[k]), float(excess[k]),
                           f"{detail}; first failure at u = {float(u[np.argmax(bad)])!r}")
    return SuiteResult(name, u.size, 0, None, float(excess[k]), detail)


def _merge(name: str, parts: list[SuiteResult]) -> SuiteResult:
    failures = sum(p.failures for p in parts)
    worst = max(parts, key=lambda p: p.worst_excess)
    bad = [p for p in parts if p.failures]
    detail = "; ".join(p.detail for p in (bad or parts))
    return SuiteResult(name, sum(p.checked for p in parts), failures,
                       (bad[0].worst_point if bad else None), worst.worst_excess, detail)


def suite_phi_exp(phi_fn: Callable = phi, n: int = GRID_POINTS) -> SuiteResult:
    """(e-1)/e e^u <= phi(u) + 1 <= e^u and e^u / 2 <= cosh u.

    The upper inequality is checked on u >= 0 only: phi(u) + 1 = e^u - u
    exceeds e^u for every u < 0.
    """
    u = np.linspace(-100.0, 100.0, n)
    up = np.linspace(0.0, 100.0, n)
    lower = _leq("phi_exp", u, (math.e - 1.0) / math.e * np.exp(u), phi_fn(u) + 1.0,
                 "(e-1)/e e^u <= phi(u)+1 on [-100, 100]")
    upper = _leq("phi_exp", up, phi_fn(up) + 1.0, np.exp(up), "phi(u)+1 <= e^u on [0, 100]")
    cosh = _leq("phi_exp", u, 0.5 * np.exp(u), np.cosh(u), "e^u/2 <= cosh u on [-100, 100]")
    return _merge("phi_exp", [lower, upper, cosh])


def suite_g_exp(n: int = GRID_POINTS) -> SuiteResult:
    """(e-1)/e e^u <= g(u) + 1 <= e^u + 1."""
    u = np.linspace(-100.0, 100.0, n)
    g = g_fn(u)
    lower = _leq("g_exp", u, (math.e - 1.0) / math.e * np.exp(u), g + 1.0, "(e-1)/e e^u <= g(u)+1")
    upper = _leq("g_exp", u, g + 1.0, np.exp(u) + 1.0, "g(u)+1 <= e^u+1")
    return _merge("g_exp", [lower, upper])


def suite_g_phi(phi_fn: Callable = phi, n: int = GRID_POINTS) -> SuiteResult:
    """0 <= g <= phi."""
    u = np.linspace(-100.0, 100.0, n)
    g = g_fn(u)
    nonneg = _leq("g_phi", u, np.zeros_like(g), g, "0 <= g(u)")
    below = _leq("g_phi", u, g, phi_fn(u), "g(u) <= phi(u)")
    return _merge("g_phi", [nonneg, below])


def suite_h_bound(n: int = GRID_POINTS) -> SuiteResult:
    """h(u) >= u^2 / (2 (1 + u/3)) on [0, 100]."""
    u = np.linspace(0.0, 100.0, n)
    return _leq("h_bound", u, u * u / (2.0 * (1.0 + u / 3.0)), h_fn(u), "u^2/(2(1+u/3)) <= h(u) on [0, 100]")


def random_psd(rng: np.random.Generator, d: int) -> np.ndarray:
    """Random PSD matrix with a spread spectrum (some eigenvalues near zero)."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = rng.exponential(1.0, d) ** 2
    lam[rng.random(d) < 0.2] = 0.0
    if not lam.any():
        lam[0] = 1.0
    return (q * lam) @ q.T


def suite_trace_mgf(matrices: int = 200, scales: int = 20, max_dim: int = 50, seed: int = 20240101,
                    rel_slack: float = 1e-9) -> SuiteResult:
    """tr[exp(sV) - I] <= (e^{s||V||} - 1) tr V / ||V|| for random PSD V."""
    rng = np.random.default_rng(seed)
    failures, checked, worst, worst_pt = 0, 0, -math.inf, None
    detail = f"{matrices} matrices x {scales} scales, d <= {max_dim}"
    for k in range(matrices):
        d = int(rng.integers(1, max_dim + 1))
        V = random_psd(rng, d)
        V = 0.5 * (V + V.T)
        norm = float(np.linalg.eigvalsh(V)[-1])
        for s in np.geomspace(1e-3, 5.0, scales) / max(norm, 1e-300):
            lhs, rhs = trace_exp_gap(V, float(s))
            excess = (lhs - rhs) / max(abs(rhs), 1e-300)
            checked += 1
            if excess > worst:
                worst, worst_pt = excess, float(k)
            if excess > rel_slack:
                failures += 1
    return SuiteResult("trace_mgf", checked, failures, worst_pt if failures else None, float(worst), detail)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "phi_exp": suite_phi_exp,
    "g_exp": suite_g_exp,
    "g_phi": suite_g_phi,
    "h_bound": suite_h_bound,
    "trace_mgf": suite_trace_mgf,
}


def perturbed_phi(delta: float) -> Callable:
    """phi shifted by a constant; used to confirm the suites can fail."""
    return lambda u: phi(u) + delta


def run_suites(names: list[str] | None = None, perturb_phi: float = 0.0) -> list[SuiteResult]:
    names = list(SUITES) if names is None else names
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; expected some of {list(SUITES)}")
    out = []
    for name in names:
        if perturb_phi and name in ("phi_exp", "g_phi"):
            out.append(SUITES[name](phi_fn=perturbed_phi(perturb_phi)))
        else:
            out.append(SUITES[name]())
    return out
