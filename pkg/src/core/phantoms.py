"""
Phantoms
Deterministic test objects on 1-, 2- and 3-axis grids.
"""

from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from core.errors import ParameterError
from core.fields import GridField, GridSpec


def _coordinates(shape: Tuple[int, ...]) -> List[np.ndarray]:
    """Voxel-centre coordinates scaled to [-1, 1] along every axis."""
    axes = [(np.arange(n) - (n - 1) / 2) / (n / 2) for n in shape]
    return np.meshgrid(*axes, indexing="ij")


def _disc(coords: List[np.ndarray]) -> np.ndarray:
    radius2 = sum(c ** 2 for c in coords)
    return (radius2 <= 0.5 ** 2).astype(np.float64)


def _inside_box(coords: List[np.ndarray], lo: Sequence[float], hi: Sequence[float]) -> np.ndarray:
    mask = np.ones(coords[0].shape, dtype=bool)
    for c, a, b in zip(coords, lo, hi):
        mask &= (c >= a) & (c <= b)
    return mask


def _blocks(coords: List[np.ndarray]) -> np.ndarray:
    out = np.zeros(coords[0].shape)
    out[_inside_box(coords, (-0.7, -0.5, -0.6), (-0.05, 0.3, 0.2))] = 1.0
    out[_inside_box(coords, (0.15, -0.2, -0.1), (0.7, 0.6, 0.6))] = 0.5
    return out


# (centre, semi-axes, value); later entries overwrite earlier ones
_ELLIPSOIDS = [
    ((0.0, 0.0, 0.0), (0.85, 0.7, 0.8), 1.0),
    ((0.0, 0.0, 0.0), (0.75, 0.6, 0.7), 0.2),
    ((-0.25, 0.2, 0.1), (0.2, 0.15, 0.25), 0.6),
    ((0.3, -0.15, -0.1), (0.15, 0.25, 0.2), 0.8),
    ((0.05, -0.35, 0.2), (0.08, 0.08, 0.1), 0.4),
]


def _shepp_like(coords: List[np.ndarray]) -> np.ndarray:
    out = np.zeros(coords[0].shape)
    for centre, axes, value in _ELLIPSOIDS:
        r2 = sum(((c - m) / a) ** 2 for c, m, a in zip(coords, centre, axes))
        out[r2 <= 1.0] = value
    return out


def _humidity(coords: List[np.ndarray]) -> np.ndarray:
    # the last axis is height; the field thins out upwards and never reaches zero
    height = (coords[-1] + 1.0) / 2.0
    plume = np.exp(-sum((c - m) ** 2 for c, m in zip(coords, (0.3, -0.2, -0.3))) / 0.2)
    return 0.8 * np.exp(-2.0 * height) + 0.2 * plume


PHANTOMS: Dict[str, Callable[[List[np.ndarray]], np.ndarray]] = {
    "disc": _disc,
    "blocks": _blocks,
    "shepp_like": _shepp_like,
    "humidity": _humidity,
}


def make_phantom(phantom_id: str, shape: Sequence[int], spacing: Sequence[float] = ()) -> GridField:
    """
    Build a phantom with values in [0, 1].

    disc is a centred disc (ball in 3-D) of radius half the half-width;
    blocks holds two boxes at levels 1 and 0.5; shepp_like nests ellipses;
    humidity decays with height along the last axis around a moist plume and
    is positive everywhere.

    Args:
        phantom_id: One of disc, blocks, shepp_like, humidity
        shape: Grid shape with 1 to 3 axes
        spacing: Optional per-axis spacing

    Returns:
        GridField holding the phantom
    """
    if phantom_id not in PHANTOMS:
        raise ParameterError(f"Unknown phantom '{phantom_id}', expected one of {sorted(PHANTOMS)}")
    grid = GridSpec(tuple(shape), tuple(spacing))
    values = PHANTOMS[phantom_id](_coordinates(grid.shape))
    return GridField(grid, values.reshape(-1))
