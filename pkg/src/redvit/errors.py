from typing import Any, Sequence


class RedVitError(Exception):
    """
    Base class for every error raised by redvit.
    The CLI maps any RedVitError to exit code 2 and prints its message.
    """


class DimensionError(RedVitError):
    """
    Raised when tensor or image shapes do not line up.
    Carries the offending shapes.
    """

    def __init__(self, message: str, *shapes: Sequence[int]):
        self.shapes = tuple(tuple(s) for s in shapes)
        detail = " vs ".join(str(list(s)) for s in self.shapes)
        super().__init__(f"{message}: {detail}" if detail else message)


class ContractError(RedVitError):
    pass


class StateError(RedVitError):
    pass


class TapeStateError(StateError):
    pass


class ConfigError(RedVitError):
    pass


class InputError(RedVitError):
    pass


class NumericError(RedVitError):
    pass


class TrainingError(RedVitError):
    """
    Raised when training diverges. Carries the training configuration echo so the
    failing run can be reproduced.
    """

    def __init__(self, message: str, config: dict[str, Any]):
        self.config = config
        super().__init__(f"{message} (config: {config})")


class UndefinedRateError(RedVitError):
    pass


class ZooAdmissionError(ConfigError):
    def __init__(self, name: str, accuracy: float, required: float):
        self.name = name
        self.accuracy = accuracy
        self.required = required
        super().__init__(
            f"Model '{name}' has clean accuracy {accuracy:.4f}, below the admission gate {required:.4f}"
        )


class CheckpointFormatError(RedVitError):
    pass


class CheckpointVersionError(RedVitError):
    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(
            f"Checkpoint format version {found} is newer than this reader (version {supported})"
        )


class CheckpointCorruptionError(RedVitError):
    def __init__(self, tensor: str, message: str):
        self.tensor = tensor
        super().__init__(f"Corrupt checkpoint at tensor '{tensor}': {message}")


class ReportIOError(RedVitError):
    def __init__(self, path: str, cause: Exception):
        self.path = path
        super().__init__(f"Cannot write '{path}': {cause}")
