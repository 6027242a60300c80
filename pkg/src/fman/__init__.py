"""Natural connections, symmetries and integrability checks for F-manifolds,
computed over truncated multivariate Taylor jets."""

from .algebra import FModel, builtin_example, builtin_models, check_algebra_axioms, check_cyclic, make_dh_model
from .connection import build_natural_connection, check_connection_axioms
from .curvature import check_3rc, check_3rc_model, check_obstructions, obstruction_tensors
from .expr import eval_expr_jet, parse_expression, substitute_linear
from .jet import Jet, UniSeries
from .modelfile import dumps_model, load_model, loads_model
from .report import Report
from .symmetry import (
    adapt_chart,
    check_commuting_flows,
    check_symmetry_equation,
    solve_symmetry,
    solve_symmetry_series,
    transform_e_to_tsarev,
    transform_tsarev_to_e,
    tsarev_system,
)

__version__ = "0.1.0"
