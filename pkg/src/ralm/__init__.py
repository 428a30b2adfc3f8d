"""Constrained optimization on embedded manifolds: a safeguarded augmented
Lagrangian solver with sequential-optimality diagnostics and constraint
qualification certificates.

The library is organized as: `manifold` (sphere/Euclidean/product geometry),
`expr` (problem expressions with forward-mode derivatives), `problem`
(constrained problem container and Lagrangian machinery), `inner_solver`
(Riemannian descent), `alm` (the safeguarded outer loop and trace files),
`linalg` (rank / positive-dependence primitives), `cq_diagnostics`
(certificates and sequence analysis), and `cli` (the `ralm` command).
"""

from .alm import (
    INFEASIBLE_STATIONARY,
    INNER_FAILURE,
    ITER_LIMIT,
    KKT_APPROX,
    AlmConfig,
    AlmTrace,
    GeometricSchedule,
    read_trace,
    run,
    write_trace,
)
from .cq_diagnostics import (
    CqReport,
    SeqOptReport,
    analyze_sequence,
    certify,
    kkt_residual,
    qn_evidence,
)
from .expr import ExprAst, evaluate, eval_grad, parse, unparse
from .manifold import (
    ManifoldSpec,
    Point,
    Tangent,
    euclidean,
    make_point,
    parse_manifold,
    product,
    sphere,
)
from .problem import CroProblem, MultiplierEstimate, make_problem

__version__ = "0.1.0"

__all__ = [
    "AlmConfig",
    "AlmTrace",
    "CqReport",
    "CroProblem",
    "ExprAst",
    "GeometricSchedule",
    "INFEASIBLE_STATIONARY",
    "INNER_FAILURE",
    "ITER_LIMIT",
    "KKT_APPROX",
    "ManifoldSpec",
    "MultiplierEstimate",
    "Point",
    "SeqOptReport",
    "Tangent",
    "analyze_sequence",
    "certify",
    "euclidean",
    "eval_grad",
    "evaluate",
    "kkt_residual",
    "make_point",
    "make_problem",
    "parse",
    "parse_manifold",
    "product",
    "qn_evidence",
    "read_trace",
    "run",
    "sphere",
    "unparse",
    "write_trace",
    "__version__",
]
