"""
Proximal
Projections, the dual l1 prox, TV and the Bregman distance of TV.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from core.errors import ParameterError
from core.fields import GridField, StackedGradientField, require_same_grid
from core.operators import LinearOperatorHandle, apply, gradient


ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class Constraint:
    """
    Admissible set: nonnegative orthant, a box, or everything.

    An optional boolean mask pins every voxel outside it to zero, which keeps
    the set closed and convex as long as zero is admissible there.
    """

    kind: str = "none"
    lo: Optional[ArrayLike] = None
    hi: Optional[ArrayLike] = None
    mask: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("none", "nonnegative", "box"):
            raise ParameterError(f"Unknown constraint kind: {self.kind}")
        if self.kind == "box":
            if self.lo is None or self.hi is None:
                raise ParameterError("box constraint needs lo and hi")
            if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
                raise ParameterError("box constraint requires lo <= hi")
        if self.mask is not None:
            object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool).reshape(-1))
            if self.kind == "box" and np.any((np.asarray(self.lo) > 0) | (np.asarray(self.hi) < 0)):
                raise ParameterError("a masked box constraint needs 0 inside [lo, hi]")

    @classmethod
    def none(cls) -> "Constraint":
        return cls("none")

    @classmethod
    def nonnegative(cls) -> "Constraint":
        return cls("nonnegative")

    @classmethod
    def box(cls, lo: ArrayLike, hi: ArrayLike) -> "Constraint":
        return cls("box", lo, hi)

    def restricted_to(self, mask: np.ndarray) -> "Constraint":
        """Same constraint with every voxel outside mask held at zero."""
        return replace(self, mask=mask)

    def project(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.kind == "nonnegative":
            out = np.maximum(values, 0.0)
        elif self.kind == "box":
            out = np.clip(values, self.lo, self.hi)
        else:
            out = values.copy()
        if self.mask is not None:
            out[~self.mask] = 0.0
        return out

    def is_feasible(self, values: np.ndarray) -> bool:
        values = np.asarray(values)
        if self.mask is not None and np.any(values[~self.mask] != 0.0):
            return False
        if self.kind == "nonnegative":
            return bool(np.all(values >= 0.0))
        if self.kind == "box":
            return bool(np.all((values >= self.lo) & (values <= self.hi)))
        return True

    def to_dict(self) -> dict:
        """Config form; masks belong to a problem, not to a config, and are left out."""
        data = {"kind": self.kind}
        if self.kind == "box":
            data.update(lo=np.asarray(self.lo).tolist(), hi=np.asarray(self.hi).tolist())
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Constraint":
        kind = data.get("kind", "none")
        if kind == "box":
            lo, hi = data["lo"], data["hi"]
            return cls.box(np.asarray(lo) if isinstance(lo, list) else lo,
                           np.asarray(hi) if isinstance(hi, list) else hi)
        return cls(kind)


def prox_indicator(u: GridField, c: Constraint) -> GridField:
    """Prox of the indicator of the admissible set: the projection."""
    return u.with_values(c.project(u.values))


def prox_dual_l1(
    w: StackedGradientField,
    nu: float,
    arg: Optional[StackedGradientField] = None,
    du: Optional[StackedGradientField] = None
) -> StackedGradientField:
    """
    Prox of nu times the conjugate of the l1 norm.

    The conjugate is the indicator of the unit max-norm ball, so the result is
    the componentwise clamp of arg to [-1, 1] for every nu > 0.

    Args:
        w: Current dual iterate
        nu: Dual step size
        arg: Precomputed prox argument w + nu * Du
        du: Gradient field used to form the argument when arg is not given

    Returns:
        Clamped stacked field
    """
    if not nu > 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    if arg is None:
        if du is None:
            arg = w
        else:
            require_same_grid(w, du)
            arg = StackedGradientField.from_stack(w.grid, w.as_stack() + nu * du.as_stack())
    return StackedGradientField.from_stack(arg.grid, np.clip(arg.as_stack(), -1.0, 1.0))


def l1_subgradient(d: StackedGradientField) -> StackedGradientField:
    """Componentwise sign, 0 where the component is exactly 0."""
    return StackedGradientField.from_stack(d.grid, np.sign(d.as_stack()))


def tv_value(u: GridField) -> float:
    """Anisotropic total variation: l1 norm of all gradient components."""
    return float(np.sum(np.abs(gradient(u).as_stack())))


@dataclass(frozen=True)
class BregmanEvaluation:
    value: float
    j_u: float
    j_ref: float
    pairing: float


def bregman_distance(
    u: GridField,
    u_ref: GridField,
    q_ref: StackedGradientField
) -> BregmanEvaluation:
    """
    Bregman distance of TV between u and u_ref.

    The subgradient pairing is taken in gradient space, <q_ref, D(u - u_ref)>.
    """
    require_same_grid(u, u_ref)
    require_same_grid(u, q_ref)

    j_u = tv_value(u)
    j_ref = tv_value(u_ref)
    pairing = q_ref.dot(gradient(u.with_values(u.values - u_ref.values)))
    return BregmanEvaluation(j_u - j_ref - pairing, j_u, j_ref, pairing)


def objective_value(
    T: LinearOperatorHandle,
    u: GridField,
    v_delta: np.ndarray,
    alpha: float,
    u0: GridField,
    w0: StackedGradientField,
    c: Constraint
) -> float:
    """
    Penalized objective: half squared misfit plus alpha times the Bregman distance.

    Returns math.inf when u is outside the admissible set.
    """
    if not c.is_feasible(u.values):
        return math.inf
    misfit = apply(T, u) - np.asarray(v_delta, dtype=np.float64).reshape(-1)
    value = 0.5 * float(np.dot(misfit, misfit))
    if alpha != 0:
        value += alpha * bregman_distance(u, u0, w0).value
    return value
