from .parser import parse_bpmn, WorkflowTemplate  # noqa: F401
from .engine import BpmnEngine, VirtualClock, WallClock  # noqa: F401
from .expressions import parse_condition, eval_condition  # noqa: F401
