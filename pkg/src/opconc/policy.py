"""Global numeric tolerances.

One mutable record holds every tolerance that is not pinned to a specific
formula.  Override it from a JSON file through the ``OPCONC_NUMERIC_POLICY``
environment variable, or temporarily with :func:`policy_override`.
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

ENV_VAR = "OPCONC_NUMERIC_POLICY"


@dataclass(frozen=True)
class NumericPolicy:
    # asymmetry accepted (and symmetrized away), relative to max(1, max|a_ij|)
    sym_tol: float = 1e-12
    # PSD slack, relative to the operator norm
    psd_tol: float = 1e-10
    # golden-section stopping rule for the Chernoff infimum
    chernoff_rtol: float = 1e-10
    # distance kept from a pole of psi (Gamma, Exponential families)
    pole_margin: float = 1e-9
    # statistical PASS threshold, in standard errors
    n_sigma: float = 4.0
    # one-sided level of the exact binomial upper limit
    binomial_alpha: float = 1e-3
    # bounds below this are reported as unverifiable by plain Monte Carlo
    mc_floor: float = 1e-6


_policy = NumericPolicy()


def get_policy() -> NumericPolicy:
    return _policy


def set_policy(policy: NumericPolicy) -> None:
    global _policy
    _policy = policy


def policy_from_mapping(overrides: dict) -> NumericPolicy:
    known = {f.name for f in dataclasses.fields(NumericPolicy)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown numeric-policy fields: {sorted(unknown)}")
    return dataclasses.replace(NumericPolicy(), **{k: float(v) for k, v in overrides.items()})


def load_policy_file(path: str | os.PathLike) -> NumericPolicy:
    return policy_from_mapping(json.loads(Path(path).read_text()))


def load_policy_from_env() -> NumericPolicy | None:
    """Install the policy named by ``OPCONC_NUMERIC_POLICY``, if set."""
    path = os.environ.get(ENV_VAR)
    if not path:
        return None
    policy = load_policy_file(path)
    set_policy(policy)
    return policy


@contextlib.contextmanager
def policy_override(**changes):
    previous = get_policy()
    set_policy(dataclasses.replace(previous, **changes))
    try:
        yield get_policy()
    finally:
        set_policy(previous)
