"""Control synthesis for multi-agent linear systems under per-agent time shifts.

The package synthesizes input sequences whose task satisfaction survives
every combination of integer per-agent time shifts inside a bound, checks
trajectories against a brute-force oracle, and reports the resulting
robustness value. Tasks are piecewise constraint functions or bounded
temporal formulas; encodings deduplicate shift-equivalent reads instead of
enumerating all shift combinations.
"""

from .encoder import EncodedProblem, EncoderConfig, ObjectiveSpec, attach_objective, encode
from .formula import (
    AffineExpr,
    Always,
    And,
    Eventually,
    Formula,
    Not,
    Or,
    Pred,
    Predicate,
    TrueNode,
    Until,
    horizon,
    normalize,
    parse_formula,
    required_instants,
)
from .mip import (
    LpResult,
    MipModel,
    SolveResult,
    export_model,
    models_equivalent,
    parse_lp,
    solve_lp,
    solve_mip,
)
from .scenario import (
    Scenario,
    ScenarioError,
    bundled_scenario_path,
    expand_template,
    load_bundled,
    load_scenario,
    parse_expr,
    scenario_from_dict,
)
from .semantics import (
    AtrValue,
    ConstraintTask,
    TaskPiece,
    Verdict,
    Witness,
    atr,
    eval_constraint_task,
    eval_stl,
    per_side_bounds,
    robust_check,
)
from .shiftsets import (
    PairSetIndex,
    ShiftBound,
    ShiftCapExceeded,
    StlCount,
    build_index,
    contiguous_count,
    count_stl_binaries,
    count_stl_detail,
    count_task_inequalities,
    enumerate_shifts,
)
from .system import (
    AgentModel,
    MultiAgentSystem,
    SimulationError,
    Trajectory,
    effective_index,
    extend_trajectory,
    read_trajectory,
    simulate,
    write_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "AffineExpr",
    "AgentModel",
    "Always",
    "And",
    "AtrValue",
    "ConstraintTask",
    "EncodedProblem",
    "EncoderConfig",
    "Eventually",
    "Formula",
    "LpResult",
    "MipModel",
    "MultiAgentSystem",
    "Not",
    "ObjectiveSpec",
    "Or",
    "PairSetIndex",
    "Pred",
    "Predicate",
    "Scenario",
    "ScenarioError",
    "ShiftBound",
    "ShiftCapExceeded",
    "SimulationError",
    "SolveResult",
    "StlCount",
    "TaskPiece",
    "Trajectory",
    "TrueNode",
    "Until",
    "Verdict",
    "Witness",
    "atr",
    "attach_objective",
    "build_index",
    "bundled_scenario_path",
    "contiguous_count",
    "count_stl_binaries",
    "count_stl_detail",
    "count_task_inequalities",
    "effective_index",
    "encode",
    "enumerate_shifts",
    "eval_constraint_task",
    "eval_stl",
    "expand_template",
    "export_model",
    "extend_trajectory",
    "horizon",
    "load_bundled",
    "load_scenario",
    "models_equivalent",
    "normalize",
    "parse_expr",
    "parse_formula",
    "parse_lp",
    "per_side_bounds",
    "read_trajectory",
    "required_instants",
    "robust_check",
    "scenario_from_dict",
    "simulate",
    "solve_lp",
    "solve_mip",
    "write_trajectory",
]
