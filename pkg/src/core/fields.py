"""
Fields
Grid descriptors, pre-image fields and stacked gradient fields.

All values are stored flat in row-major axis order; the geometry lives in
the GridSpec, never in the storage.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from core.errors import ShapeError, UnsupportedDimensionError


SUPPORTED_NDIMS = (1, 2, 3)


@dataclass(frozen=True)
class GridSpec:
    """Regular grid: per-axis voxel counts and physical step lengths."""

    shape: Tuple[int, ...]
    spacing: Tuple[float, ...] = ()

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) not in SUPPORTED_NDIMS:
            raise UnsupportedDimensionError(
                f"Grids must have 1, 2 or 3 axes, got {len(shape)}"
            )
        if any(n < 1 for n in shape):
            raise ShapeError(f"Axis lengths must be positive, got {shape}")

        spacing = tuple(float(s) for s in self.spacing) or (1.0,) * len(shape)
        if len(spacing) != len(shape):
            raise ShapeError(
                f"Spacing {spacing} does not match {len(shape)} axes"
            )
        if any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ShapeError(f"Spacing must be positive and finite, got {spacing}")

        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def extent(self) -> Tuple[float, ...]:
        """Physical length of the grid box along each axis."""
        return tuple(n * s for n, s in zip(self.shape, self.spacing))

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "spacing": list(self.spacing)}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(tuple(data["shape"]), tuple(data.get("spacing", ())))


@dataclass(frozen=True)
class GridField:
    """Discretized pre-image data on a regular grid."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size != self.grid.size:
            raise ShapeError(
                f"Expected {self.grid.size} values for shape {self.grid.shape}, "
                f"got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ShapeError("Field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(
        cls,
        array: np.ndarray,
        spacing: Optional[Sequence[float]] = None
    ) -> "GridField":
        """Build a field from an N-d array, taking the shape from the array."""
        array = np.asarray(array, dtype=np.float64)
        return cls(GridSpec(array.shape, tuple(spacing or ())), array.reshape(-1))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "GridField":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def full(cls, grid: GridSpec, value: float) -> "GridField":
        return cls(grid, np.full(grid.size, float(value)))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.grid.shape

    @property
    def spacing(self) -> Tuple[float, ...]:
        return self.grid.spacing

    @property
    def ndim(self) -> int:
        return self.grid.ndim

    def as_array(self) -> np.ndarray:
        """N-d view of the values."""
        return self.values.reshape(self.grid.shape)

    def with_values(self, values: np.ndarray) -> "GridField":
        """New field on the same grid."""
        return GridField(self.grid, values)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def dot(self, other: "GridField") -> float:
        require_same_grid(self, other)
        return float(np.dot(self.values, other.values))


@dataclass(frozen=True)
class StackedGradientField:
    """One flat component array per axis; lives in the range of D."""

    grid: GridSpec
    components: Tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        components = tuple(
            np.asarray(c, dtype=np.float64).reshape(-1) for c in self.components
        )
        if len(components) != self.grid.ndim:
            raise ShapeError(
                f"Expected {self.grid.ndim} components, got {len(components)}"
            )
        for c in components:
            if c.size != self.grid.size:
                raise ShapeError(
                    f"Component length {c.size} does not match grid size {self.grid.size}"
                )
        object.__setattr__(self, "components", components)

    @classmethod
    def from_stack(cls, grid: GridSpec, stack: np.ndarray) -> "StackedGradientField":
        """Build from an array of shape (ndim, size) or (ndim, *shape)."""
        stack = np.asarray(stack, dtype=np.float64).reshape(grid.ndim, -1)
        return cls(grid, tuple(stack))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "StackedGradientField":
        return cls.from_stack(grid, np.zeros((grid.ndim, grid.size)))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.grid.shape

    def as_stack(self) -> np.ndarray:
        """Components stacked into an array of shape (ndim, size)."""
        return np.stack(self.components)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_stack()))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.as_stack()))) if self.grid.size else 0.0

    def dot(self, other: "StackedGradientField") -> float:
        require_same_grid(self, other)
        return float(np.sum(self.as_stack() * other.as_stack()))

    def __sub__(self, other: "StackedGradientField") -> "StackedGradientField":
        require_same_grid(self, other)
        return StackedGradientField.from_stack(self.grid, self.as_stack() - other.as_stack())


def require_same_grid(a, b) -> None:
    """Raise ShapeError unless both objects live on grids of the same shape."""
    if a.grid.shape != b.grid.shape:
        raise ShapeError(f"Shape mismatch: {a.grid.shape} vs {b.grid.shape}")
