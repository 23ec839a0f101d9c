"""
Error hierarchy for aigdiff.

Three families map onto CLI exit codes:
- DataError: malformed files and persistence problems (exit 3)
- NumericalError: non-finite values and degenerate probability math (exit 4)
- GraphError: structural violations in graphs, circuits and arguments
"""

from typing import List, Optional, Sequence


class AigDiffError(Exception):
    """Base class for every error raised by aigdiff."""


# ===== Data / persistence =====


class DataError(AigDiffError):
    """Input or output artifacts are unreadable or inconsistent."""


class DatasetFormatError(DataError):
    """A dataset record does not conform to the JSONL schema."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{prefix}{message}")


class CheckpointError(DataError):
    """Checkpoint file could not be loaded."""


class CheckpointFormatError(CheckpointError):
    """Magic bytes or manifest are not recognised."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint ends before all declared tensor bytes."""


class CheckpointShapeError(CheckpointError):
    """Manifest tensors disagree with the model the config describes."""


# ===== Numerical =====


class NumericalError(AigDiffError):
    """A computation produced values outside its valid domain."""


class NonFiniteActivationError(NumericalError):
    def __init__(self, layer: str):
        self.layer = layer
        super().__init__(f"Non-finite activation in layer '{layer}'")


class NonFiniteLossError(NumericalError):
    def __init__(self, message: str, graph_index: Optional[int] = None, t: Optional[int] = None):
        self.graph_index = graph_index
        self.t = t
        super().__init__(f"{message} (graph_index={graph_index}, t={t})")


class PosteriorError(NumericalError):
    """Reverse posterior could not be formed for an element."""

    def __init__(self, message: str, element: Optional[int] = None):
        self.element = element
        super().__init__(f"{message} (element={element})")


class DegenerateScheduleError(NumericalError):
    """Level offset reaches the full horizon, the timestep map is undefined."""


# ===== Structural =====


class GraphError(AigDiffError, ValueError):
    """A graph, circuit or argument violates a structural precondition."""


class CyclicGraphError(GraphError):
    def __init__(self, cycle: Sequence[int]):
        self.cycle: List[int] = list(cycle)
        path = " -> ".join(str(node) for node in self.cycle)
        super().__init__(f"Cycle detected: {path}")


class ShapeMismatchError(GraphError):
    pass


class InvalidAigError(GraphError):
    pass


class InfeasibleBoundsError(GraphError):
    pass


class LevelStructureError(GraphError):
    pass


class NoEditableGateError(GraphError):
    pass


class DisconnectedLossError(GraphError):
    """Loss tensor carries no autograd history."""


def exit_code_for(error: BaseException) -> int:
    """CLI exit status for an exception raised by a subcommand."""
    if isinstance(error, (DataError, OSError)):
        return 3
    if isinstance(error, NumericalError):
        return 4
    if isinstance(error, GraphError):
        return 4
    return 1


