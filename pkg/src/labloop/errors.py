"""Exception hierarchy shared across the package."""


class LabloopError(Exception):
    """Base class for all package-specific errors."""


class SetupError(LabloopError):
    """Session or configuration could not be set up (bad root, bad config)."""


class LogWriteError(LabloopError):
    """The session log file could not be written."""


class RestoreError(LabloopError):
    """A saved session state could not be restored.

    The message names the field (or file) that failed validation.
    """


class ProviderError(LabloopError):
    """An LLM or embedding provider failed after retries."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class ContextOverflowError(LabloopError):
    """The prompt exceeded the provider's context limit."""


class ShapeMismatchError(LabloopError):
    """Embedding dimensions do not agree."""


class DuplicateDocumentError(LabloopError):
    """A document with the same doc_id is already in the index."""


class ConnectorError(LabloopError):
    """An online connector failed (network, upstream service)."""

    def __init__(self, message: str, source: str = ""):
        super().__init__(message)
        self.source = source


class ParameterError(LabloopError):
    """A caller-supplied parameter is invalid (unknown route, bad GO id, ...)."""


class SelectionError(LabloopError):
    """The LLM named a script that is not in the whitelist registry."""


class RegistryError(LabloopError):
    """The script registry is empty or malformed."""


class SynthesisError(LabloopError):
    """The LLM response contained no usable code block."""


class RepairExhaustedError(LabloopError):
    """The synthesize/validate loop ran out of attempts."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report or []


class ExecutionTimeoutError(LabloopError):
    """A child process exceeded its wall-clock timeout and was killed."""


class PlanningError(LabloopError):
    """No structurally valid plan could be obtained from the LLM."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class PlanEditError(LabloopError):
    """A plan edit would produce an invalid plan; the plan is unchanged."""


class ApprovalError(LabloopError):
    """A plan failed validation at approval time."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report or []


class TemplateError(LabloopError):
    """Unknown report template; message lists the available ones."""


class UndefinedMetricError(LabloopError):
    """A metric was requested on inputs for which it is meaningless."""
