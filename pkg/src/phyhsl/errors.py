"""Exception types shared across the package."""


class PhyHSLError(Exception):
    """Base class for all package errors."""


class ConfigError(PhyHSLError, ValueError):
    """Invalid configuration or argument value."""


class ShapeError(PhyHSLError, ValueError):
    """Incompatible tensor shapes."""


class NonFiniteError(PhyHSLError, FloatingPointError):
    """A NaN or Inf appeared where finite values are required."""


class DivergenceError(NonFiniteError):
    """Training loss became non-finite.

    Carries the epoch at which it happened and the last finite loss seen.
    """

    def __init__(self, epoch, last_finite_loss, detail: str = ""):
        self.epoch = epoch
        self.last_finite_loss = last_finite_loss
        msg = f"loss diverged at epoch {epoch} (last finite loss {last_finite_loss!r})"
        super().__init__(f"{msg}: {detail}" if detail else msg)
