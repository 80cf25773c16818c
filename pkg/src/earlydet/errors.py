"""Error types shared across the package."""


class ConfigurationError(ValueError):
    """A setting, layout, or shape does not satisfy its declared constraints."""


class InputError(ValueError):
    """Runtime data handed to an operation violates its precondition."""


class ContractViolation(RuntimeError):
    """Caller broke an ordering or state contract (e.g. out-of-order frames)."""


class MissingArtifactError(FileNotFoundError):
    """A required input file (manifest, checkpoint, thresholds) is absent."""
