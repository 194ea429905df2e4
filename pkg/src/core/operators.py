"""
Operators
Forward operators with exact adjoints, the finite-difference pair D / D^T
and power-iteration norm estimates.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.sparse import issparse
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from core.errors import ConfigError, ParameterError, ShapeError
from core.fields import GridField, GridSpec, StackedGradientField

logger = logging.getLogger(__name__)


BACKENDS = ("dense-matrix", "radon2d", "ray3d", "identity", "finite-difference")


def gradient(u: GridField) -> StackedGradientField:
    """
    Forward differences along every axis.

    The last slice along each axis is 0 (replicate boundary).

    Args:
        u: Field to differentiate

    Returns:
        One component per axis, component a differencing along axis a
    """
    arr = u.as_array()
    components = []
    for axis in range(arr.ndim):
        diff = np.zeros_like(arr)
        lead = [slice(None)] * arr.ndim
        lead[axis] = slice(0, -1)
        diff[tuple(lead)] = np.diff(arr, axis=axis)
        components.append(diff.reshape(-1))
    return StackedGradientField(u.grid, tuple(components))


def gradient_adjoint(w: StackedGradientField) -> GridField:
    """
    Exact transpose of gradient (a negative divergence).

    Args:
        w: Stacked field with one component per axis

    Returns:
        Field on the same grid as w
    """
    grid = w.grid
    out = np.zeros(grid.shape)
    for axis, component in enumerate(w.components):
        p = component.reshape(grid.shape).copy()
        last = [slice(None)] * grid.ndim
        last[axis] = -1
        # D never writes the last slice, so D^T ignores it
        p[tuple(last)] = 0.0

        head = [slice(None)] * grid.ndim
        tail = [slice(None)] * grid.ndim
        head[axis] = slice(1, None)
        tail[axis] = slice(0, -1)

        out -= p
        out[tuple(head)] += p[tuple(tail)]
    return GridField(grid, out.reshape(-1))


@dataclass(frozen=True)
class LinearOperatorHandle:
    """
    Forward map T on a grid with a matching adjoint.

    The wrapped scipy LinearOperator works on flat vectors; the handle adds
    the grid descriptor and shape checks.
    """

    grid: GridSpec
    backend: str
    op: LinearOperator

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ParameterError(f"Unknown operator backend: {self.backend}")
        if self.op.shape[1] != self.grid.size:
            raise ShapeError(
                f"Operator has {self.op.shape[1]} columns but the grid has "
                f"{self.grid.size} voxels"
            )

    @property
    def domain_shape(self):
        return self.grid.shape

    @property
    def range_size(self) -> int:
        return int(self.op.shape[0])


def apply(T: LinearOperatorHandle, u: GridField) -> np.ndarray:
    """Evaluate T u as a flat measurement vector."""
    if u.shape != T.domain_shape:
        raise ShapeError(f"Field shape {u.shape} does not match operator domain {T.domain_shape}")
    return np.asarray(T.op.matvec(u.values), dtype=np.float64).reshape(-1)


def adjoint(T: LinearOperatorHandle, v: np.ndarray) -> GridField:
    """Evaluate T^T v as a field on the operator's grid."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != T.range_size:
        raise ShapeError(f"Expected {T.range_size} measurements, got {v.size}")
    return GridField(T.grid, np.asarray(T.op.rmatvec(v)).reshape(-1))


def matrix_operator(matrix, grid: GridSpec, backend: str = "dense-matrix") -> LinearOperatorHandle:
    """
    Wrap an explicit dense or sparse matrix.

    Args:
        matrix: Array or scipy sparse matrix of shape (M, N)
        grid: Domain grid with N voxels
        backend: Backend tag recorded on the handle

    Returns:
        Handle whose adjoint is the matrix transpose
    """
    if not issparse(matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.ndim != 2:
        raise ShapeError("Operator matrix must be two-dimensional")
    return LinearOperatorHandle(grid, backend, aslinearoperator(matrix))


def dense_operator(matrix: np.ndarray, grid: Optional[GridSpec] = None) -> LinearOperatorHandle:
    """Dense-matrix backend. Without a grid the domain is a 1-axis grid of N voxels."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if grid is None:
        grid = GridSpec((matrix.shape[1],))
    return matrix_operator(matrix, grid, "dense-matrix")


def identity_operator(grid: GridSpec) -> LinearOperatorHandle:
    n = grid.size
    op = LinearOperator(
        (n, n),
        matvec=lambda x: np.asarray(x, dtype=np.float64).reshape(-1).copy(),
        rmatvec=lambda y: np.asarray(y, dtype=np.float64).reshape(-1).copy(),
        dtype=np.float64,
    )
    return LinearOperatorHandle(grid, "identity", op)


def gradient_operator(grid: GridSpec) -> LinearOperatorHandle:
    """D as a flat operator from N voxels to ndim*N stacked differences."""
    n = grid.size

    def forward(x):
        field = GridField(grid, np.asarray(x).reshape(-1))
        return gradient(field).as_stack().reshape(-1)

    def transpose(y):
        stacked = StackedGradientField.from_stack(grid, np.asarray(y).reshape(grid.ndim, n))
        return gradient_adjoint(stacked).values

    op = LinearOperator((grid.ndim * n, n), matvec=forward, rmatvec=transpose, dtype=np.float64)
    return LinearOperatorHandle(grid, "finite-difference", op)


def load_dense_operator(
    path: Union[str, Path],
    grid: Optional[GridSpec] = None
) -> LinearOperatorHandle:
    """
    Load a dense matrix from a plain-text file.

    The first line holds "M N", followed by M rows of N whitespace-separated
    reals.

    Args:
        path: File to read
        grid: Domain grid; defaults to a 1-axis grid of N voxels

    Returns:
        Dense-matrix operator handle
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Operator file not found: {path}")

    lines = [line.split() for line in path.read_text().splitlines() if line.strip()]
    if not lines or len(lines[0]) != 2:
        raise ConfigError(f"{path}: first line must be 'M N'")
    try:
        m, n = int(lines[0][0]), int(lines[0][1])
        rows = [[float(x) for x in line] for line in lines[1:]]
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e

    if len(rows) != m or any(len(row) != n for row in rows):
        raise ConfigError(f"{path}: expected {m} rows of {n} values")

    matrix = np.array(rows, dtype=np.float64).reshape(m, n)
    if grid is not None and grid.size != n:
        raise ShapeError(f"{path}: {n} columns do not match grid size {grid.size}")
    return dense_operator(matrix, grid)


def assemble_dense(T: LinearOperatorHandle) -> np.ndarray:
    """Explicit (M, N) matrix of T, built column by column from basis vectors."""
    return np.asarray(T.op.matmat(np.eye(T.grid.size)), dtype=np.float64)


@dataclass(frozen=True)
class OperatorNormEstimate:
    value: float
    iterations_used: int
    converged: bool


def estimate_operator_norm(
    T: LinearOperatorHandle,
    max_iters: int = 200,
    tol: float = 1e-8
) -> OperatorNormEstimate:
    """
    Power iteration on T^T T.

    Starts from the normalized all-ones vector. If T annihilates it, the
    iteration restarts once from a seeded Gaussian vector before reporting a
    zero operator.

    Args:
        T: Operator handle
        max_iters: Iteration cap
        tol: Relative change in the Rayleigh quotient that counts as converged

    Returns:
        OperatorNormEstimate with sqrt of the dominant eigenvalue estimate
    """
    if max_iters < 1:
        raise ParameterError("max_iters must be at least 1")
    if tol <= 0:
        raise ParameterError("tol must be positive")

    n = T.grid.size
    x = np.ones(n) / np.sqrt(n)
    restarted = False
    rayleigh_old = None
    rayleigh = 0.0

    for iteration in range(1, max_iters + 1):
        z = T.op.rmatvec(T.op.matvec(x))
        rayleigh = float(np.dot(x, z))
        z_norm = float(np.linalg.norm(z))

        if z_norm == 0.0:
            if not restarted:
                restarted = True
                x = np.random.default_rng(0).standard_normal(n)
                x /= np.linalg.norm(x)
                continue
            logger.info("Operator %s annihilates the start vectors; norm is 0", T.backend)
            return OperatorNormEstimate(0.0, iteration, True)

        if rayleigh_old is not None and abs(rayleigh - rayleigh_old) < tol * abs(rayleigh):
            value = float(np.sqrt(max(rayleigh, 0.0)))
            logger.info("Operator norm of %s converged to %.6g after %d iterations",
                        T.backend, value, iteration)
            return OperatorNormEstimate(value, iteration, True)

        rayleigh_old = rayleigh
        x = z / z_norm

    value = float(np.sqrt(max(rayleigh, 0.0)))
    logger.warning("Operator norm of %s did not converge in %d iterations (%.6g)",
                   T.backend, max_iters, value)
    return OperatorNormEstimate(value, max_iters, False)
