"""Exception types shared across the package."""


class EncodingOverflowError(ValueError):
    """An integer column does not fit in M bits."""


class CapacityError(ValueError):
    """Exact enumeration would exceed the configured codeword-length cap."""


class NumericalError(RuntimeError):
    """A quadrature or root-finding step failed to meet its tolerance."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"


class ConfigError(ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
