"""Exception hierarchy. Everything raised on purpose derives from FgbgError."""


class FgbgError(Exception):
    """Base class for domain failures (CLI exit code 1)."""


class DomainError(FgbgError):
    """An argument is outside its documented domain."""


class ManifestError(FgbgError):
    """Asset corpus or manifest violates the data contract."""


class PlanError(FgbgError):
    """A sample plan cannot be produced for the given configuration."""


class RenderError(FgbgError):
    """A plan cannot be rendered to pixels."""


class VariantError(FgbgError):
    """Variant scoring/selection failure."""


class MetricError(FgbgError):
    """Bias metric cannot be computed from the given records."""


class RecordError(FgbgError):
    """A line-delimited record file is malformed."""
