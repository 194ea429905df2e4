"""
Errors
Exception types raised by the reconstruction core.
"""

from typing import Optional


class TomodualError(Exception):
    """Base class for all errors raised by the core package."""


class ShapeError(TomodualError, ValueError):
    """Grid shapes, vector lengths or component counts do not match."""


class UnsupportedDimensionError(ShapeError):
    """A grid has an axis count the operators do not handle."""


class ParameterError(TomodualError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ConfigError(TomodualError, ValueError):
    """An experiment configuration is invalid or cannot be read."""


class DivergenceError(TomodualError, RuntimeError):
    """
    An iteration produced non-finite values.

    Args:
        quantity: Name of the offending quantity (e.g. "u", "w", "residual")
        iteration: Iteration index at which it happened, if known
    """

    def __init__(self, quantity: str, iteration: Optional[int] = None):
        self.quantity = quantity
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"Non-finite values in {quantity}{where}")

    def at_iteration(self, iteration: int) -> "DivergenceError":
        """Return a copy tagged with the iteration index."""
        return DivergenceError(self.quantity, iteration)
