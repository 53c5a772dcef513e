from typing import Any, Dict, Optional


class EsplError(Exception):
    """Base class for every error raised by the engine"""


class InvalidConfigError(EsplError, ValueError):
    pass


class InvalidMatchError(EsplError, ValueError):
    pass


class RatingNumericError(EsplError, ArithmeticError):
    """Non-finite value met during a rating update"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NodeLookupError(EsplError, LookupError):
    def __init__(self, node_id: int):
        super().__init__(f"Prompt node {node_id} not found in population")
        self.node_id = node_id


class BatchShapeError(EsplError, ValueError):
    pass


class RolloutTransportError(EsplError):
    """Sampler backend failed for one (prompt, problem) cell"""

    def __init__(self, message: str, prompt_id: Any = None, problem_id: Any = None):
        super().__init__(f"{message} (prompt={prompt_id}, problem={problem_id})")
        self.prompt_id = prompt_id
        self.problem_id = problem_id


class EditValidationError(EsplError, ValueError):
    pass


class EditApplicationError(EsplError):
    def __init__(self, message: str, edit_index: int, edit: Any = None):
        super().__init__(f"Edit #{edit_index}: {message}")
        self.edit_index = edit_index
        self.edit = edit


class ReflectionParseError(EsplError):
    pass


class ReflectionTransportError(EsplError):
    pass


class UnknownFormatError(EsplError, ValueError):
    pass


class CheckpointError(EsplError):
    pass


class IterationError(EsplError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"Iteration {iteration}: {message}")
        self.iteration = iteration
