"""Exception types shared across the package."""


class SirInverseError(Exception):
    """Base class for package-specific failures."""


class ConfigError(SirInverseError):
    """Invalid or inconsistent run configuration."""


class NumericalError(SirInverseError):
    """A numerical procedure failed to meet its contract."""


class KappaError(NumericalError):
    """Snapshot data too close to zero for the coefficient transform."""

    def __init__(self, message: str, kappa: float, node: tuple[int, int]):
        super().__init__(message)
        self.kappa = kappa
        self.node = node


class LineSearchError(NumericalError):
    """Backtracking line search exhausted its halving budget."""
