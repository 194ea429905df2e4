"""
Metrics
Per-iteration records and error measures for reconstruction runs.
"""

from dataclasses import asdict, dataclass, fields
from typing import Iterable, List, Optional, Set

import numpy as np

from core.fields import GridField, require_same_grid


@dataclass(frozen=True)
class MetricsRow:
    iter: int
    residual_image_space: float
    rel_error_preimage: Optional[float]
    objective: float
    alpha_i: float
    mu_i: float
    nu_i: float
    wall_ms: int

    def as_dict(self) -> dict:
        return asdict(self)


METRICS_HEADER = [f.name for f in fields(MetricsRow)]


def relative_error(u: GridField, truth: GridField) -> float:
    """||u - truth|| / ||truth||, or ||u|| when the truth is zero."""
    require_same_grid(u, truth)
    diff = float(np.linalg.norm(u.values - truth.values))
    scale = truth.norm()
    return diff / scale if scale > 0 else diff


def support(u: GridField, threshold: float = 0.1) -> Set[int]:
    """
    Flat indices of voxels holding a noticeable share of the peak.

    Args:
        u: Reconstructed field
        threshold: Fraction of max |u| a voxel must reach

    Returns:
        Set of flat voxel indices
    """
    peak = float(np.max(np.abs(u.values))) if u.values.size else 0.0
    if peak == 0.0:
        return set()
    return set(np.flatnonzero(np.abs(u.values) >= threshold * peak).tolist())


def jaccard(a: Iterable[int], b: Iterable[int]) -> float:
    """Jaccard index of two index sets; two empty sets count as identical."""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def is_non_decreasing(values: List[float], slack: float = 0.0) -> bool:
    return all(later >= earlier - slack for earlier, later in zip(values, values[1:]))
