"""Intrinsic-dimension concentration bounds for sums of random symmetric matrices.

The package evaluates Chernoff-type tail bounds whose dimensional factor is
tr(V)/||V|| instead of the ambient dimension, inverts them into confidence
radii, and checks them against exact enumeration and Monte Carlo.
"""

from opconc.errors import (
    CatalogError,
    ConfigError,
    DomainError,
    EigenSolverError,
    EnumerationCapError,
    OpconcError,
    PreconditionError,
    SymmetryError,
)
from opconc.policy import NumericPolicy, get_policy, policy_override, set_policy
from opconc.specmat import (
    Spectrum,
    SymMatrix,
    apply_spectral_fn,
    eigh,
    intrinsic_dimension,
    lambda_max,
    lambda_min,
    loewner_leq,
    op_norm,
    trace,
)
from opconc.psi import PsiFn, chernoff_infimum, g_fn, h_fn, p_fn, phi, psi_eval, theta_star, varphi
from opconc.bounds import (
    Mode,
    TailBoundResult,
    VarianceProxy,
    ambient_subgaussian_bound,
    bennett_bound,
    bernstein_bound,
    confidence_radius,
    hoeffding_bound,
    master_bound,
    subexponential_bound,
    subgaussian_bound,
)

__version__ = "0.1.0"

__all__ = [
    "CatalogError",
    "ConfigError",
    "DomainError",
    "EigenSolverError",
    "EnumerationCapError",
    "Mode",
    "NumericPolicy",
    "OpconcError",
    "PreconditionError",
    "PsiFn",
    "Spectrum",
    "SymMatrix",
    "SymmetryError",
    "TailBoundResult",
    "VarianceProxy",
    "ambient_subgaussian_bound",
    "apply_spectral_fn",
    "bennett_bound",
    "bernstein_bound",
    "chernoff_infimum",
    "confidence_radius",
    "eigh",
    "g_fn",
    "get_policy",
    "h_fn",
    "hoeffding_bound",
    "intrinsic_dimension",
    "lambda_max",
    "lambda_min",
    "loewner_leq",
    "master_bound",
    "op_norm",
    "p_fn",
    "phi",
    "policy_override",
    "psi_eval",
    "set_policy",
    "subexponential_bound",
    "subgaussian_bound",
    "theta_star",
    "trace",
    "varphi",
]
