"""Exception taxonomy, grouped by the CLI exit code each family maps to."""


class VqsumError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class UsageError(VqsumError):
    """Bad invocation: unknown verb, missing flag, invalid combination."""

    exit_code = 1


class DataError(VqsumError):
    """Malformed or insufficient input data."""

    exit_code = 2


class NumericError(VqsumError):
    """Numerical failure inside the compute engine."""

    exit_code = 3


class MalformedRecord(DataError):
    """A JSONL line failed to parse or is missing a required field."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyFile(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class EmptyClip(DataError):
    pass


class EmptyText(DataError):
    pass


class NoGoldLabels(DataError):
    pass


class NoJudgments(DataError):
    pass


class InsufficientAnnotators(DataError):
    pass


class MissingEmbedding(DataError):
    """File-backed embedder has no row for the requested utterance id."""


class LengthOverflow(DataError):
    """Token sequence exceeds the generator's maximum length."""


class ShapeMismatch(NumericError):
    pass


class NonFiniteValue(NumericError):
    pass


class NonFiniteLoss(NumericError):
    """Training loss became NaN/Inf; model restored to last good state."""


class NonConvergence(NumericError):
    """Power iteration failed to reach tolerance within max iterations."""
