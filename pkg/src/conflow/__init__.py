"""conflow: consolidate similar linear business processes into one model,
verify proposed linearizations, and execute role-gated procedure instances."""

from .conditions import ParamEnv, eval_condition, free_params, parse_condition, print_condition
from .consolidate import (
    ConsolidatedModel,
    GraphCM,
    MissingBranchCondition,
    attach_conditions,
    build_graph_cm,
    build_linear_cm,
    graph_to_dot,
    linearize_graph,
)
from .model import (
    DefinitionError,
    ElementaryProcessDef,
    FieldDef,
    InconsistentAnchorOrder,
    ProcessSet,
    StepDef,
    common_steps,
    parse_process_set,
    paths_of,
    serialize_process_set,
)
from .verify import (
    TooLarge,
    Verdict,
    Violation,
    enumerate_valid_linearizations,
    explain,
    verify_linear_cm,
)

__version__ = "0.1.0"
