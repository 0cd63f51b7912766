"""Fixed-point solvers for block-structured costs with linear coupling.

Problems are stated as cost blocks (constitutive relations) coupled by linear
constraints (linear interconnections). A per-index change of coordinates
turns the constraints into orthonormal maps and the cost blocks into
generally nonlinear maps; wiring them through delays and iterating finds a
point satisfying the primal and dual stationarity conditions.
"""

from .assembly import SystemGraph, assemble, reduce_sources
from .cr import Battery, CRMap, catalog_cr, classify_map, derive_cr
from .errors import *  # noqa: F401,F403
from .executor import Schedule, Trace, run, step, verify_fixed_point
from .li import ScatteringBlock, build_scattering, catalog_li, verify_behavior
from .oracle import grid_solve, kkt_solve
from .partition import (
    IndexPartition,
    StateVector,
    TransformConvention,
    forward_transform,
    inverse_transform,
    validate_partition,
)
from .problem import (
    CanonicalCR,
    DualCR,
    LIBlock,
    Problem,
    ReducedCR,
    build_dual,
    check_gradient_coupling,
    eval_dual_cost,
    eval_primal_cost,
    reduce_form,
)
from .problem_file import emit_problem, parse_problem
from .recovery import Solution, recover, stationarity_report

__version__ = "0.1.0"
