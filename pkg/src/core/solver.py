"""
Solver
Primal-dual iterations for TV-Bregman regularization with discrepancy stopping.

Three modes share one loop: the projected primal-dual step, the variant with
relaxed extrapolation of the primal iterate, and an outer Bregman iteration
whose penalty is re-centred on the previous outer iterate.
"""

import logging
import time
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np

from core.errors import ConfigError, DivergenceError, ParameterError, ShapeError
from core.fields import GridField, StackedGradientField
from core.metrics import MetricsRow, relative_error
from core.operators import (
    LinearOperatorHandle,
    adjoint,
    apply,
    estimate_operator_norm,
    gradient,
    gradient_adjoint,
)
from core.proximal import (
    Constraint,
    l1_subgradient,
    objective_value,
    prox_dual_l1,
    prox_indicator,
)

logger = logging.getLogger(__name__)


MODES = ("alg1", "alg2", "bregman_iterated")
SCHEDULES = ("dynamic", "fixed_theorem")
MODE_ALIASES = {"bregman": "bregman_iterated"}


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "alg2"
    tau_lower: float = 1.1
    tau_upper: float = 1.5
    alpha0: float = 1.0
    lam: float = 1.5
    epsilon: Optional[float] = None
    max_iter: int = 5000
    schedule: str = "dynamic"
    mu_safety: float = 0.6
    i_star_cap: Optional[int] = None
    inner_iters: int = 10
    nu_max: float = 1e12

    def __post_init__(self):
        object.__setattr__(self, "mode", MODE_ALIASES.get(self.mode, self.mode))

    @property
    def effective_i_star_cap(self) -> int:
        return self.i_star_cap if self.i_star_cap is not None else self.max_iter

    def validate(self) -> "SolverConfig":
        """Raise ConfigError on the first invalid field; returns self."""
        if self.mode not in MODES:
            raise ConfigError(f"solver.mode must be one of {MODES}, got {self.mode!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"solver.schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if not self.tau_lower > 1:
            raise ConfigError(f"solver.tau_lower must exceed 1, got {self.tau_lower}")
        if self.tau_upper < self.tau_lower:
            raise ConfigError("solver.tau_upper must be at least tau_lower")
        if not self.alpha0 > 0:
            raise ConfigError(f"solver.alpha0 must be positive, got {self.alpha0}")
        if self.mode == "alg2" and self.schedule == "dynamic" and not 1 < self.lam < 2:
            raise ConfigError(f"solver.lambda must lie in (1, 2), got {self.lam}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("solver.epsilon must be positive when given")
        if self.max_iter < 1:
            raise ConfigError("solver.max_iter must be at least 1")
        if not 0 < self.mu_safety <= 1:
            raise ConfigError(f"solver.mu_safety must lie in (0, 1], got {self.mu_safety}")
        if self.effective_i_star_cap < 1:
            raise ConfigError("solver.i_star_cap must be at least 1")
        if self.mode == "alg2" and self.schedule == "fixed_theorem" and self.effective_i_star_cap < 2:
            raise ConfigError("solver.i_star_cap must be at least 2 for alg2 with fixed_theorem")
        if self.inner_iters < 1:
            raise ConfigError("solver.inner_iters must be at least 1")
        if not self.nu_max > 0:
            raise ConfigError("solver.nu_max must be positive")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown solver keys: {', '.join(unknown)}")
        return cls(**data).validate()

    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["lambda"] = data.pop("lam")
        return data


def schedule_parameters(
    i: int,
    delta: float,
    op_norm: float,
    cfg: SolverConfig,
    i_star_cap: Optional[int] = None
) -> Tuple[float, float, float]:
    """
    Step sizes and regularization weight for iteration i (1-indexed).

    Args:
        i: Iteration index, starting at 1
        delta: Noise level (kept for schedules that depend on it)
        op_norm: Estimate of ||T||
        cfg: Solver configuration
        i_star_cap: Expected stopping index for the fixed_theorem schedule

    Returns:
        Tuple (mu_i, nu_i, alpha_i)
    """
    if i < 1:
        raise ParameterError(f"Schedules are 1-indexed, got i={i}")
    if not op_norm > 0:
        raise ParameterError(f"op_norm must be positive, got {op_norm}")

    alpha = cfg.alpha0 / i
    if cfg.schedule == "fixed_theorem":
        cap = i_star_cap if i_star_cap is not None else cfg.effective_i_star_cap
        mu = 1.0 / (2.0 * cap * op_norm ** 2)
    else:
        mu = cfg.mu_safety * 2.0 / op_norm ** 2

    nu = min(1.0 / (mu * alpha) ** 2, cfg.nu_max)
    return mu, nu, alpha


def relaxation_parameter(cfg: SolverConfig, i_star_cap: Optional[int] = None) -> float:
    """Extrapolation weight used by alg2: cfg.lam, or 2/i* under fixed_theorem."""
    if cfg.schedule == "fixed_theorem":
        cap = i_star_cap if i_star_cap is not None else cfg.effective_i_star_cap
        return 2.0 / cap
    return cfg.lam


def check_parameter_conditions(
    mu: float,
    nu: float,
    alpha: float,
    op_norm: float,
    lam: Optional[float] = None,
    mode: str = "alg1",
    schedule: str = "dynamic"
) -> List[str]:
    """
    Step-size conditions under which the iterates approach the minimizer.

    Returns:
        Human-readable descriptions of every violated condition
    """
    violations = []
    if op_norm > 0 and mu > 2.0 / op_norm ** 2 * (1 + 1e-12):
        violations.append(f"mu={mu:.6g} exceeds 2/||T||^2={2.0 / op_norm ** 2:.6g}")
    if nu * (mu * alpha) ** 2 > 1 + 1e-9:
        violations.append(f"nu={nu:.6g} exceeds 1/(mu*alpha)^2")
    if mode == "alg2" and lam is not None:
        if schedule == "dynamic" and not 1 < lam < 2:
            violations.append(f"lambda={lam:.6g} is outside (1, 2)")
        if op_norm > 0 and lam * mu > 2.0 / op_norm ** 2 * (1 + 1e-12):
            violations.append(f"lambda*mu={lam * mu:.6g} exceeds 2/||T||^2")
    return violations


@dataclass(frozen=True)
class SolverState:
    u: GridField
    w: StackedGradientField
    w0: StackedGradientField
    u_ref: GridField
    misfit: np.ndarray = field(repr=False)
    iter: int = 0
    mu: float = 0.0
    nu: float = 0.0
    alpha: float = 0.0
    u_hat: Optional[GridField] = None

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.misfit))


def initial_state(
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    u0: GridField,
    c: Constraint
) -> SolverState:
    """Project u0 if needed and take w0 from the sign of D u0; w1 = w0."""
    if not c.is_feasible(u0.values):
        logger.info("Initial guess is infeasible for %s; projecting", c.kind)
        u0 = prox_indicator(u0, c)
    w0 = l1_subgradient(gradient(u0))
    misfit = apply(T, u0) - np.asarray(v_delta, dtype=np.float64).reshape(-1)
    return SolverState(u=u0, w=w0, w0=w0, u_ref=u0, misfit=misfit)


def _finite(values: np.ndarray, quantity: str, iteration: int) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise DivergenceError(quantity, iteration)
    return values


def _primal_candidate(state: SolverState, T: LinearOperatorHandle, c: Constraint) -> np.ndarray:
    dual_gap = state.w - state.w0
    direction = adjoint(T, state.misfit).values + state.alpha * gradient_adjoint(dual_gap).values
    step = _finite(state.u.values - state.mu * direction, "u", state.iter + 1)
    return c.project(step)


def _dual_update(state: SolverState, u_next: GridField) -> StackedGradientField:
    du = gradient(u_next)
    arg = state.w.as_stack() + state.nu * du.as_stack()
    _finite(arg, "w", state.iter + 1)
    return prox_dual_l1(state.w, state.nu, arg=StackedGradientField.from_stack(state.w.grid, arg))


def _misfit(T: LinearOperatorHandle, u: GridField, v_delta: np.ndarray, iteration: int) -> np.ndarray:
    misfit = apply(T, u) - np.asarray(v_delta, dtype=np.float64).reshape(-1)
    return _finite(misfit, "residual", iteration)


def step_alg1(
    state: SolverState,
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    c: Constraint
) -> SolverState:
    """
    Projected gradient step on the primal, then the dual prox at the new primal.

    Uses the step sizes already stored on the state.
    """
    u_next = state.u.with_values(_primal_candidate(state, T, c))
    w_next = _dual_update(state, u_next)
    return replace(
        state,
        u=u_next,
        w=w_next,
        u_hat=None,
        iter=state.iter + 1,
        misfit=_misfit(T, u_next, v_delta, state.iter + 1),
    )


def extrapolate(u: np.ndarray, u_hat: np.ndarray, lam: float) -> np.ndarray:
    """(1 - lam) u + lam u_hat, before any projection."""
    return (1.0 - lam) * np.asarray(u, dtype=np.float64) + lam * np.asarray(u_hat, dtype=np.float64)


def step_alg2(
    state: SolverState,
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    c: Constraint,
    lam: float
) -> SolverState:
    """
    Same primal and dual updates as step_alg1, followed by a projected
    extrapolation between the previous iterate and the primal candidate.
    """
    if not 0 < lam < 2:
        raise ParameterError(f"lambda must lie in (0, 2), got {lam}")

    u_hat = state.u.with_values(_primal_candidate(state, T, c))
    w_next = _dual_update(state, u_hat)
    moved = _finite(extrapolate(state.u.values, u_hat.values, lam), "u", state.iter + 1)
    u_next = state.u.with_values(c.project(moved))
    return replace(
        state,
        u=u_next,
        w=w_next,
        u_hat=u_hat,
        iter=state.iter + 1,
        misfit=_misfit(T, u_next, v_delta, state.iter + 1),
    )


def step_bregman_iterated(
    state: SolverState,
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    c: Constraint,
    inner_iters: int
) -> SolverState:
    """
    One outer Bregman step.

    The penalty is re-centred on the current iterate u_k with subgradient
    sign(D u_k); inner_iters primal-dual steps with the state's step sizes
    then approximate the minimizer.
    """
    if inner_iters < 1:
        raise ParameterError(f"inner_iters must be at least 1, got {inner_iters}")

    w_prior = l1_subgradient(gradient(state.u))
    inner = replace(state, w=w_prior, w0=w_prior, u_ref=state.u)
    for _ in range(inner_iters):
        inner = replace(step_alg1(inner, T, v_delta, c), iter=state.iter)
    return replace(inner, iter=state.iter + 1)


def advance(
    state: SolverState,
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    c: Constraint,
    cfg: SolverConfig,
    lam: Optional[float] = None
) -> SolverState:
    """Apply the configured step with the parameters already on the state."""
    if cfg.mode == "alg1":
        return step_alg1(state, T, v_delta, c)
    if cfg.mode == "alg2":
        return step_alg2(state, T, v_delta, c, lam if lam is not None else relaxation_parameter(cfg))
    return step_bregman_iterated(state, T, v_delta, c, cfg.inner_iters)


def iterate(
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    delta: float,
    u0: GridField,
    c: Constraint,
    cfg: SolverConfig,
    op_norm: float,
    num_iters: int
) -> Iterator[SolverState]:
    """Yield the initial state and the next num_iters states, with no stopping rule."""
    cap = cfg.effective_i_star_cap
    lam = relaxation_parameter(cfg, cap)
    state = initial_state(T, np.asarray(v_delta, dtype=np.float64).reshape(-1), u0, c)
    yield state
    for i in range(1, num_iters + 1):
        mu, nu, alpha = schedule_parameters(i, delta, op_norm, cfg, cap)
        state = advance(replace(state, mu=mu, nu=nu, alpha=alpha), T, v_delta, c, cfg, lam)
        yield state


class MdpDecision(Enum):
    CONTINUE = "continue"
    STOP_IN_BAND = "stop_in_band"


def mdp_decide(residual: float, delta: float, cfg: SolverConfig) -> MdpDecision:
    """Stop once the residual reaches tau_upper * delta; delta = 0 never stops."""
    if delta <= 0:
        return MdpDecision.CONTINUE
    if residual <= cfg.tau_upper * delta:
        return MdpDecision.STOP_IN_BAND
    return MdpDecision.CONTINUE


@dataclass(frozen=True)
class StopReport:
    reason: str
    i_star: int
    final_residual: float
    tau_delta_bounds: Tuple[float, float]
    overshoot: bool = False


@dataclass(frozen=True)
class RunResult:
    u: GridField
    w: StackedGradientField
    report: StopReport
    history: List[MetricsRow]
    state: SolverState
    op_norm: float

    def __iter__(self) -> Iterator:
        return iter((self.u, self.report, self.history))


def _record(
    state: SolverState,
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    c: Constraint,
    truth: Optional[GridField],
    started: float
) -> MetricsRow:
    return MetricsRow(
        iter=state.iter,
        residual_image_space=state.residual,
        rel_error_preimage=relative_error(state.u, truth) if truth is not None else None,
        objective=objective_value(T, state.u, v_delta, state.alpha, state.u_ref, state.w0, c),
        alpha_i=state.alpha,
        mu_i=state.mu,
        nu_i=state.nu,
        wall_ms=int((time.perf_counter() - started) * 1000),
    )


def run(
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    delta: float,
    u0: GridField,
    c: Constraint,
    cfg: SolverConfig,
    truth: Optional[GridField] = None,
    op_norm: Optional[float] = None,
    progress_callback: Optional[Callable[[int, int], None]] = None
) -> RunResult:
    """
    Iterate the configured mode until a stopping rule fires.

    Stopping order per iteration: discrepancy band, then the relative-error
    floor (needs truth and cfg.epsilon), then max_iter.

    Args:
        T: Forward operator
        v_delta: Measured data
        delta: Noise level ||v - v_delta||; 0 disables the discrepancy rule
        u0: Initial guess (projected if infeasible)
        c: Admissible set
        cfg: Solver configuration
        truth: Ground truth for error tracking and the oracle stop
        op_norm: Known ||T||; estimated by power iteration when omitted
        progress_callback: Optional callback(current, total)

    Returns:
        RunResult with the final iterate, stop report and one MetricsRow per
        iteration including iteration 0
    """
    cfg.validate()
    if delta < 0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")
    v_delta = np.asarray(v_delta, dtype=np.float64).reshape(-1)

    if op_norm is None:
        op_norm = estimate_operator_norm(T).value
    if not op_norm > 0:
        raise ParameterError("Forward operator has zero norm")

    started = time.perf_counter()
    bounds = (cfg.tau_lower * delta, cfg.tau_upper * delta)
    cap = cfg.effective_i_star_cap
    lam = relaxation_parameter(cfg, cap)

    state = initial_state(T, v_delta, u0, c)
    history = [_record(state, T, v_delta, c, truth, started)]
    warned = set()

    def finish(reason: str) -> RunResult:
        report = StopReport(
            reason=reason,
            i_star=state.iter,
            final_residual=state.residual,
            tau_delta_bounds=bounds,
            overshoot=delta > 0 and state.residual < bounds[0],
        )
        logger.info("Stopped (%s) at i*=%d, residual=%.6g, band=[%.6g, %.6g]%s",
                    reason, report.i_star, report.final_residual, bounds[0], bounds[1],
                    " (overshoot)" if report.overshoot else "")
        if progress_callback:
            progress_callback(cfg.max_iter, cfg.max_iter)
        return RunResult(state.u, state.w, report, history, state, op_norm)

    def stop_reason(row: MetricsRow) -> Optional[str]:
        if mdp_decide(state.residual, delta, cfg) is MdpDecision.STOP_IN_BAND:
            return "mdp_band"
        if cfg.epsilon is not None and row.rel_error_preimage is not None \
                and row.rel_error_preimage <= cfg.epsilon:
            return "oracle_floor"
        return None

    if state.residual == 0.0:
        return finish("exact_fit")
    reason = stop_reason(history[0])
    if reason:
        return finish(reason)

    report_every = max(1, cfg.max_iter // 100)
    for i in range(1, cfg.max_iter + 1):
        mu, nu, alpha = schedule_parameters(i, delta, op_norm, cfg, cap)
        for violation in check_parameter_conditions(mu, nu, alpha, op_norm, lam, cfg.mode, cfg.schedule):
            if violation.split("=")[0] not in warned:
                warned.add(violation.split("=")[0])
                logger.warning("Parameter condition violated at i=%d: %s", i, violation)

        state = advance(replace(state, mu=mu, nu=nu, alpha=alpha), T, v_delta, c, cfg, lam)

        row = _record(state, T, v_delta, c, truth, started)
        history.append(row)
        logger.debug("i=%d residual=%.6g objective=%.6g", i, row.residual_image_space, row.objective)

        if progress_callback and i % report_every == 0:
            progress_callback(i, cfg.max_iter)

        reason = stop_reason(row)
        if reason:
            return finish(reason)

    return finish("max_iter")


def fixed_point_residual(
    u: GridField,
    w: StackedGradientField,
    T: LinearOperatorHandle,
    v_delta: np.ndarray,
    alpha: float,
    mu: float,
    nu: float,
    u0: GridField,
    w0: StackedGradientField,
    c: Constraint
) -> float:
    """
    Distance of (u, w) from being a fixed point of the primal and dual prox maps.

    Both parts are normalized by 1 + the norm of the iterate; the larger is
    returned.
    """
    if not (mu > 0 and nu > 0):
        raise ParameterError("mu and nu must be positive")
    if u0.shape != u.shape:
        raise ShapeError(f"Shape mismatch: {u.shape} vs {u0.shape}")

    misfit = apply(T, u) - np.asarray(v_delta, dtype=np.float64).reshape(-1)
    direction = adjoint(T, misfit).values + alpha * gradient_adjoint(w - w0).values
    primal = c.project(u.values - mu * direction)
    primal_gap = float(np.linalg.norm(u.values - primal)) / (1.0 + u.norm())

    dual = prox_dual_l1(w, nu, du=gradient(u))
    dual_gap = float(np.linalg.norm(w.as_stack() - dual.as_stack())) / (1.0 + w.norm())
    return max(primal_gap, dual_gap)
