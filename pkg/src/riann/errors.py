"""Exception types shared across the package."""


class RiannError(Exception):
    """Base class for package-specific errors."""


class DimensionError(RiannError):
    """Shapes or sizes of inputs are inconsistent (frame vs patch, query vs model)."""


class FormatError(RiannError):
    """A serialized model or field file is malformed (bad magic, version, truncation)."""


class ModelCapacityError(RiannError):
    """Requested reference-set size exceeds the configured memory cap."""
