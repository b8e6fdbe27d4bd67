"""Exception hierarchy shared by the library and the CLI."""


class MbvocError(Exception):
    """Base class for every error raised on purpose by this package."""


class ValidationError(MbvocError, ValueError):
    """Bad arguments: wrong shapes, out-of-range values, violated preconditions."""


class DesignError(MbvocError):
    """Prototype filter design did not converge."""

    def __init__(self, message: str, best_residual: float, best_cutoff: float):
        super().__init__(f"{message} (best residual {best_residual:.3g} at cutoff {best_cutoff:.6f})")
        self.best_residual = best_residual
        self.best_cutoff = best_cutoff


class ParseError(ValidationError):
    """Malformed symbol sequence; ``position`` is the offending token index."""

    def __init__(self, message: str, position: int):
        super().__init__(f"token {position}: {message}")
        self.position = position


class WavFormatError(MbvocError):
    """Malformed or unsupported WAV data; ``offset`` is the byte where parsing stopped."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"byte {offset}: {message}")
        self.offset = offset


class ParamsFormatError(MbvocError):
    """Malformed parameter container."""


class BenchContractError(MbvocError):
    """Benchmark request that would break the single-core timing contract."""
