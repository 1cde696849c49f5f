"""Exception types shared across the package."""


class ParseError(ValueError):
    """Malformed input file; message names the offending line."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class SchemaError(ValueError):
    """A relation name or id that the relation schema does not know."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; message names the key."""


class ContractViolation(RuntimeError):
    """An internal precondition was broken (stale cache, non-deterministic
    loss function, out-of-range index after ingestion)."""
