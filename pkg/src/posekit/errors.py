"""Exception types shared across the package.

The CLI maps these onto process exit codes, so keep the taxonomy flat:
parse problems, shape problems, placement problems, and benchmark gate
failures are distinct conditions.
"""


class DimensionMismatchError(ValueError):
    """Inputs have inconsistent shapes, channel counts, or geometry."""


class TensorFormatError(ValueError):
    """A tensor file failed to parse.

    ``field`` names the header field (or "payload") that failed validation.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SchemaError(ValueError):
    """A JSON document does not match the expected schema."""


class PlacementInfeasibleError(RuntimeError):
    """A synthetic scene cannot hold the requested persons at the required separation."""


class InvalidArchitectureError(ValueError):
    """An architecture description is inconsistent.

    ``layer`` names the offending layer.
    """

    def __init__(self, layer: str, message: str):
        super().__init__(f"layer '{layer}': {message}")
        self.layer = layer


class GateFailureError(RuntimeError):
    """The benchmark correctness gate failed; ``diff`` describes the mismatch."""

    def __init__(self, diff: str):
        super().__init__("naive and optimized pipelines disagree:\n" + diff)
        self.diff = diff
