"""
Exception hierarchy shared by the library and the CLI.
"""


class NeuralMVSError(Exception):
    """Base class for all library errors."""


class RejectedInputError(NeuralMVSError, ValueError):
    """An input violates a documented precondition."""


class RejectedConfigurationError(RejectedInputError):
    """A configuration or march schedule is invalid."""


class SceneLoadError(RejectedInputError):
    """A dataset directory could not be parsed or loaded."""


class CheckpointVersionError(RejectedInputError):
    """A checkpoint was written by an incompatible format version."""


class TrainingAbortedError(NeuralMVSError, RuntimeError):
    """Training stopped because the loss became non-finite."""

    def __init__(self, message: str, step: int, dump_path: str | None = None):
        super().__init__(message)
        self.step = step
        self.dump_path = dump_path
