"""lpforge: symbolic linear-model instantiation, LP emission, and
rolling-horizon decomposition."""

__version__ = "0.1.0"

from .assemble import (build_canonical, efficient_block_maps,
                       instantiate_efficient, instantiate_exhaustive)
from .audit import check_solution
from .canonical import CanonicalModel
from .data import DataBundle
from .decompose import (HorizonPlan, fine_tune, forward_rolling_horizon,
                        guided_frh, guided_rolling_horizon, rolling_horizon,
                        solve_whole)
from .instantiate import normalize
from .ir import (ConstraintBlock, DataPlaceholder, IndexPlaceholder,
                 MultidimExpression, ParamCoef, SymbolicModel, Term,
                 ValidationReport, VariableDecl, emit_ir, parse_ir, validate)
from .lpformat import read_lp, read_triplets, write_lp, write_triplets
from .parallel import PartitionPlan, instantiate_parallel, plan_partition
from .sequential import SequentialMeta, SequentialModel, aggregate_periods, build_sequential
from .solver import (Solution, SolveOptions, fix_variables, round_and_fix,
                     solve_lp)

__all__ = [
    "CanonicalModel", "ConstraintBlock", "DataBundle", "DataPlaceholder",
    "HorizonPlan", "IndexPlaceholder", "MultidimExpression", "ParamCoef",
    "PartitionPlan", "SequentialMeta", "SequentialModel", "Solution",
    "SolveOptions", "SymbolicModel", "Term", "ValidationReport",
    "VariableDecl", "aggregate_periods", "build_canonical",
    "build_sequential", "check_solution", "efficient_block_maps", "emit_ir",
    "fine_tune", "fix_variables", "forward_rolling_horizon", "guided_frh",
    "guided_rolling_horizon", "instantiate_efficient",
    "instantiate_exhaustive", "instantiate_parallel", "normalize",
    "parse_ir", "plan_partition", "read_lp", "read_triplets",
    "rolling_horizon", "round_and_fix", "solve_lp", "solve_whole",
    "validate", "write_lp", "write_triplets",
]
