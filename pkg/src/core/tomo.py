"""
Tomography
Parallel-beam sinogram and straight-ray GPS forward operators, scene
construction, noise and measurement I/O.

Both projectors assemble a sparse weight matrix once per geometry; forward is
W @ x and the adjoint is W.T @ y, so the pair is algebraically exact.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Set, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from core.errors import ConfigError, ParameterError, ShapeError, UnsupportedDimensionError
from core.fields import GridField, GridSpec
from core.operators import LinearOperatorHandle, matrix_operator

logger = logging.getLogger(__name__)


Point = Tuple[float, float, float]


# ============ 2-D sinogram ============

@dataclass(frozen=True)
class SinogramGeometry:
    """Parallel beams at num_angles angles k*pi/num_angles, centred detector row."""

    grid: GridSpec
    num_angles: int
    num_detectors: int
    detector_spacing: float = 1.0

    def __post_init__(self):
        if self.grid.ndim != 2:
            raise UnsupportedDimensionError("Sinogram geometry needs a 2-axis grid")
        if self.num_angles < 1 or self.num_detectors < 1:
            raise ParameterError("num_angles and num_detectors must be at least 1")
        if not self.detector_spacing > 0:
            raise ParameterError("detector_spacing must be positive")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.num_angles) * np.pi / self.num_angles

    @property
    def offsets(self) -> np.ndarray:
        return (np.arange(self.num_detectors) - (self.num_detectors - 1) / 2) * self.detector_spacing

    @property
    def size(self) -> int:
        return self.num_angles * self.num_detectors


def default_sinogram(grid: GridSpec, num_angles: int = 60) -> SinogramGeometry:
    """Detector row wide enough to cover the grid diagonal."""
    diagonal = float(np.hypot(*grid.extent))
    spacing = min(grid.spacing)
    return SinogramGeometry(grid, num_angles, int(np.ceil(diagonal / spacing)) + 1, spacing)


def _interpolation_weights(coord: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Linear interpolation at fractional indices; neighbours outside [0, n) get no weight."""
    lower = np.floor(coord).astype(np.int64)
    frac = coord - lower
    index = np.stack([lower, lower + 1])
    weight = np.stack([1.0 - frac, frac])
    weight[(index < 0) | (index >= n)] = 0.0
    return index, weight


@lru_cache(maxsize=16)
def _radon_matrix(g: SinogramGeometry) -> csr_matrix:
    ny, nx = g.grid.shape
    sy, sx = g.grid.spacing
    offsets = g.offsets
    rows, cols, vals = [], [], []

    for a, theta in enumerate(g.angles):
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        bins = a * g.num_detectors + np.arange(g.num_detectors)

        if abs(cos_t) >= abs(sin_t):
            # one sample per pixel row, interpolated across columns
            y = (np.arange(ny) - (ny - 1) / 2) * sy
            t = (y[None, :] - offsets[:, None] * sin_t) / cos_t
            x = offsets[:, None] * cos_t - t * sin_t
            index, weight = _interpolation_weights(x / sx + (nx - 1) / 2, nx)
            flat = np.arange(ny)[None, None, :] * nx + index
            step = sy / abs(cos_t)
        else:
            x = (np.arange(nx) - (nx - 1) / 2) * sx
            t = (offsets[:, None] * cos_t - x[None, :]) / sin_t
            y = offsets[:, None] * sin_t + t * cos_t
            index, weight = _interpolation_weights(y / sy + (ny - 1) / 2, ny)
            flat = index * nx + np.arange(nx)[None, None, :]
            step = sx / abs(sin_t)

        keep = weight > 0
        rows.append(np.broadcast_to(bins[None, :, None], weight.shape)[keep])
        cols.append(flat[keep])
        vals.append(weight[keep] * step)

    matrix = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.size, g.grid.size),
    ).tocsr()
    logger.debug("Assembled sinogram matrix %s with %d nonzeros", matrix.shape, matrix.nnz)
    return matrix


def radon2d_operator(g: SinogramGeometry) -> LinearOperatorHandle:
    return matrix_operator(_radon_matrix(g), g.grid, "radon2d")


def radon2d_apply(u: GridField, g: SinogramGeometry) -> np.ndarray:
    """Line integrals of the interpolated image, ordered angle-major."""
    if u.shape != g.grid.shape:
        raise ShapeError(f"Image shape {u.shape} does not match geometry {g.grid.shape}")
    return _radon_matrix(g) @ u.values


def radon2d_adjoint(v: np.ndarray, g: SinogramGeometry) -> GridField:
    """Unfiltered backprojection: transpose of the interpolation weights."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != g.size:
        raise ShapeError(f"Expected {g.size} sinogram bins, got {v.size}")
    return GridField(g.grid, _radon_matrix(g).T @ v)


# ============ 3-D ray transform ============

@dataclass(frozen=True)
class RayGeometry3D:
    """
    Straight segments from transmitters to receivers through a voxel box.

    The box spans [0, n_a * s_a] along each axis; axis 2 is vertical and the
    receivers sit on its floor.
    """

    grid: GridSpec
    transmitters: Tuple[Point, ...]
    receivers: Tuple[Point, ...]
    rays: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        if self.grid.ndim != 3:
            raise UnsupportedDimensionError("Ray geometry needs a 3-axis grid")
        object.__setattr__(self, "transmitters", tuple(tuple(map(float, p)) for p in self.transmitters))
        object.__setattr__(self, "receivers", tuple(tuple(map(float, p)) for p in self.receivers))
        object.__setattr__(self, "rays", tuple((int(t), int(r)) for t, r in self.rays))

        if not self.rays:
            raise ParameterError("A ray geometry needs at least one ray")
        if any(len(p) != 3 for p in self.transmitters + self.receivers):
            raise ShapeError("Transmitters and receivers must be 3-D points")
        for t, r in self.rays:
            if not (0 <= t < len(self.transmitters) and 0 <= r < len(self.receivers)):
                raise ParameterError(f"Ray ({t}, {r}) refers to a missing endpoint")
        for k in range(len(self.rays)):
            if _clip_to_box(*self.endpoints(k), self.grid) is None:
                raise ParameterError(f"Ray {k} does not cross the grid box")

    @property
    def size(self) -> int:
        return len(self.rays)

    def endpoints(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        t, r = self.rays[k]
        return np.array(self.transmitters[t]), np.array(self.receivers[r])


def _clip_to_box(p0: np.ndarray, p1: np.ndarray, grid: GridSpec) -> Optional[Tuple[float, float]]:
    """Parametric interval [a_min, a_max] of p0 + a (p1 - p0) inside the box, a in [0, 1]."""
    d = p1 - p0
    lo, hi = 0.0, 1.0
    for axis, length in enumerate(grid.extent):
        if d[axis] == 0.0:
            if not 0.0 <= p0[axis] <= length:
                return None
            continue
        a0 = (0.0 - p0[axis]) / d[axis]
        a1 = (length - p0[axis]) / d[axis]
        lo = max(lo, min(a0, a1))
        hi = min(hi, max(a0, a1))
    if hi <= lo:
        return None
    return lo, hi


def siddon_trace(p0: np.ndarray, p1: np.ndarray, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Voxels crossed by the segment p0 -> p1 and the length inside each.

    Args:
        p0: Segment start
        p1: Segment end
        grid: 3-axis grid

    Returns:
        Tuple (flat voxel indices, intersection lengths), in order of travel
    """
    interval = _clip_to_box(p0, p1, grid)
    if interval is None:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    a_min, a_max = interval
    d = p1 - p0

    crossings = [np.array([a_min, a_max])]
    for axis, (n, s) in enumerate(zip(grid.shape, grid.spacing)):
        if d[axis] != 0.0:
            planes = (np.arange(n + 1) * s - p0[axis]) / d[axis]
            crossings.append(planes[(planes > a_min) & (planes < a_max)])
    alphas = np.unique(np.concatenate(crossings))

    mid = (alphas[:-1] + alphas[1:]) / 2
    points = p0[None, :] + mid[:, None] * d[None, :]
    voxel = np.floor(points / np.array(grid.spacing)).astype(np.int64)
    voxel = np.clip(voxel, 0, np.array(grid.shape) - 1)
    flat = np.ravel_multi_index(tuple(voxel.T), grid.shape)
    lengths = np.diff(alphas) * float(np.linalg.norm(d))

    keep = lengths > 0
    return flat[keep], lengths[keep]


@lru_cache(maxsize=16)
def _ray_matrix(g: RayGeometry3D) -> csr_matrix:
    rows, cols, vals = [], [], []
    for k in range(g.size):
        flat, lengths = siddon_trace(*g.endpoints(k), g.grid)
        rows.append(np.full(flat.size, k))
        cols.append(flat)
        vals.append(lengths)
    # duplicates (none expected) are summed by tocsr
    matrix = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.size, g.grid.size),
    ).tocsr()
    logger.debug("Assembled ray matrix %s with %d nonzeros", matrix.shape, matrix.nnz)
    return matrix


def ray3d_operator(g: RayGeometry3D) -> LinearOperatorHandle:
    return matrix_operator(_ray_matrix(g), g.grid, "ray3d")


def ray3d_apply(u: GridField, g: RayGeometry3D) -> np.ndarray:
    """Per ray, sum of voxel value times intersection length."""
    if u.shape != g.grid.shape:
        raise ShapeError(f"Volume shape {u.shape} does not match geometry {g.grid.shape}")
    return _ray_matrix(g) @ u.values


def ray3d_adjoint(v: np.ndarray, g: RayGeometry3D) -> GridField:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != g.size:
        raise ShapeError(f"Expected {g.size} ray values, got {v.size}")
    return GridField(g.grid, _ray_matrix(g).T @ v)


def ray_lengths(g: RayGeometry3D) -> Tuple[np.ndarray, np.ndarray]:
    """Per ray: summed voxel intersection lengths and the segment length clipped to the box."""
    summed = np.asarray(_ray_matrix(g).sum(axis=1)).reshape(-1)
    clipped = np.zeros(g.size)
    for k in range(g.size):
        p0, p1 = g.endpoints(k)
        a_min, a_max = _clip_to_box(p0, p1, g.grid)
        clipped[k] = (a_max - a_min) * float(np.linalg.norm(p1 - p0))
    return summed, clipped


def traversed_voxels(g: RayGeometry3D, ray_index: int) -> Set[int]:
    flat, _ = siddon_trace(*g.endpoints(ray_index), g.grid)
    return set(flat.tolist())


def make_gps_scene(
    grid: GridSpec,
    num_satellites: int,
    num_stations: int,
    rays_per_station: int,
    seed: int
) -> RayGeometry3D:
    """
    Seeded satellites-and-stations scene above a voxel box.

    Stations are spread over the interior of the floor; satellites sit on a
    hemisphere of radius three box sizes at elevations between 30 and 85
    degrees. Every station links to rays_per_station distinct satellites.

    Args:
        grid: 3-axis grid descriptor
        num_satellites: Number of transmitters
        num_stations: Number of receivers
        rays_per_station: Satellites seen by each station
        seed: RNG seed

    Returns:
        RayGeometry3D with num_stations * rays_per_station rays
    """
    if grid.ndim != 3:
        raise UnsupportedDimensionError("GPS scenes need a 3-axis grid")
    if min(num_satellites, num_stations, rays_per_station) < 1:
        raise ParameterError("Satellite, station and ray counts must be at least 1")
    if rays_per_station > num_satellites:
        raise ParameterError(
            f"rays_per_station ({rays_per_station}) exceeds num_satellites ({num_satellites})"
        )

    rng = np.random.default_rng(seed)
    lx, ly, lz = grid.extent

    stations = np.column_stack([
        rng.uniform(0.05 * lx, 0.95 * lx, num_stations),
        rng.uniform(0.05 * ly, 0.95 * ly, num_stations),
        np.zeros(num_stations),
    ])

    radius = 3.0 * max(lx, ly, lz)
    azimuth = rng.uniform(0.0, 2.0 * np.pi, num_satellites)
    elevation = np.radians(rng.uniform(30.0, 85.0, num_satellites))
    satellites = np.column_stack([
        lx / 2 + radius * np.cos(elevation) * np.cos(azimuth),
        ly / 2 + radius * np.cos(elevation) * np.sin(azimuth),
        radius * np.sin(elevation),
    ])

    rays: List[Tuple[int, int]] = []
    for station in range(num_stations):
        chosen = rng.choice(num_satellites, size=rays_per_station, replace=False)
        rays.extend((int(sat), station) for sat in sorted(chosen))

    logger.info("GPS scene: %d satellites, %d stations, %d rays (seed %d)",
                num_satellites, num_stations, len(rays), seed)
    return RayGeometry3D(
        grid,
        tuple(map(tuple, satellites)),
        tuple(map(tuple, stations)),
        tuple(rays),
    )


# ============ Measurements ============

@dataclass(frozen=True)
class MeasurementSet:
    values: np.ndarray = field(repr=False)
    delta: float
    geometry_tag: str = ""
    seed: Optional[int] = None
    clean: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ShapeError("Measurement values must be finite")
        if not self.delta >= 0:
            raise ParameterError(f"delta must be nonnegative, got {self.delta}")
        object.__setattr__(self, "values", values)


def add_noise(
    v_clean: np.ndarray,
    noise_fraction: float,
    seed: int,
    geometry_tag: str = ""
) -> MeasurementSet:
    """
    Add seeded Gaussian noise scaled to an exact relative norm.

    The noise vector is rescaled so that ||v_delta - v_clean|| equals
    noise_fraction * ||v_clean||; delta stores that norm.
    """
    if noise_fraction < 0:
        raise ParameterError(f"noise_fraction must be nonnegative, got {noise_fraction}")
    v_clean = np.asarray(v_clean, dtype=np.float64).reshape(-1)
    target = noise_fraction * float(np.linalg.norm(v_clean))

    if target == 0.0:
        return MeasurementSet(v_clean.copy(), 0.0, geometry_tag, seed, v_clean.copy())

    xi = np.random.default_rng(seed).standard_normal(v_clean.size)
    noisy = v_clean + xi * (target / float(np.linalg.norm(xi)))
    delta = float(np.linalg.norm(noisy - v_clean))
    return MeasurementSet(noisy, delta, geometry_tag, seed, v_clean.copy())


# ============ Files ============

def geometry_to_dict(g: Union[SinogramGeometry, RayGeometry3D]) -> dict:
    if isinstance(g, SinogramGeometry):
        return {
            "kind": "radon2d",
            "grid": g.grid.to_dict(),
            "num_angles": g.num_angles,
            "num_detectors": g.num_detectors,
            "detector_spacing": g.detector_spacing,
        }
    return {
        "kind": "ray3d",
        "grid": g.grid.to_dict(),
        "transmitters": [list(p) for p in g.transmitters],
        "receivers": [list(p) for p in g.receivers],
        "rays": [list(r) for r in g.rays],
    }


def geometry_from_dict(data: dict) -> Union[SinogramGeometry, RayGeometry3D]:
    try:
        grid = GridSpec.from_dict(data["grid"])
        if data["kind"] == "radon2d":
            return SinogramGeometry(grid, int(data["num_angles"]), int(data["num_detectors"]),
                                    float(data.get("detector_spacing", 1.0)))
        if data["kind"] == "ray3d":
            return RayGeometry3D(grid, tuple(map(tuple, data["transmitters"])),
                                 tuple(map(tuple, data["receivers"])), tuple(map(tuple, data["rays"])))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"Malformed geometry: missing or invalid {e}") from e
    raise ConfigError(f"Unknown geometry kind: {data.get('kind')!r}")


def save_geometry(g: Union[SinogramGeometry, RayGeometry3D], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(geometry_to_dict(g), indent=2))
    return path


def load_geometry(path: Union[str, Path]) -> Union[SinogramGeometry, RayGeometry3D]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"Geometry file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return geometry_from_dict(data)


def save_measurements(m: MeasurementSet, path: Union[str, Path]) -> Path:
    """Write index,value CSV plus a JSON sidecar with delta, seed and geometry_tag."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "value"])
        for i, value in enumerate(m.values):
            writer.writerow([i, repr(float(value))])
    sidecar = {"delta": m.delta, "seed": m.seed, "geometry_tag": m.geometry_tag}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return path


def load_measurements(path: Union[str, Path]) -> MeasurementSet:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.is_file() or not sidecar_path.is_file():
        raise ConfigError(f"Measurement file or sidecar missing: {path}")

    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["index", "value"]:
            raise ConfigError(f"{path}: expected header 'index,value'")
        rows = sorted((int(r["index"]), float(r["value"])) for r in reader)
    sidecar = json.loads(sidecar_path.read_text())
    return MeasurementSet(
        np.array([value for _, value in rows]),
        float(sidecar.get("delta", 0.0)),
        sidecar.get("geometry_tag", ""),
        sidecar.get("seed"),
    )
