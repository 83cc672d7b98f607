class QuadratureError(RuntimeError):
    """An integral did not reach the requested tolerance."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class NormingError(RuntimeError):
    """The norming equation could not be bracketed for the given law."""


class ModulusBoundError(ValueError):
    """A test function violates its declared bound |g(x)| <= c|x|^(beta+gamma) near 0."""


class ReportSchemaError(ValueError):
    """A stored report does not match the schema version this package writes."""
