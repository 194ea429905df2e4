"""
Preview
Grayscale snapshots of reconstructed fields for the workbench.
"""

from typing import Optional, Tuple

import numpy as np
from PIL import Image

from core.fields import GridField


def field_slice(u: GridField, index: Optional[int] = None) -> np.ndarray:
    """
    2-D view of a field.

    3-axis fields give the horizontal layer at index along the vertical axis
    (the middle layer by default); 1-axis fields become a single row.
    """
    arr = u.as_array()
    if arr.ndim == 1:
        return arr[None, :]
    if arr.ndim == 3:
        layer = arr.shape[2] // 2 if index is None else index
        return arr[:, :, layer]
    return arr


def render_slice(
    u: GridField,
    size: Tuple[int, int] = (256, 256),
    index: Optional[int] = None
) -> Image.Image:
    """
    Render a field slice as an 8-bit grayscale image scaled to its own range.

    Args:
        u: Field to render
        size: Output (width, height)
        index: Layer for 3-axis fields

    Returns:
        PIL image in mode "L"
    """
    data = field_slice(u, index)
    lo, hi = float(data.min()), float(data.max())
    scaled = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    image = Image.fromarray(np.round(scaled * 255).astype(np.uint8))
    return image.resize(size, Image.NEAREST)
