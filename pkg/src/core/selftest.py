"""
Self-test
Numerical invariant checks run by the `selftest` command.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from core.experiments import write_rows
from core.fields import GridField, GridSpec, StackedGradientField
from core.operators import (
    LinearOperatorHandle,
    adjoint,
    apply,
    dense_operator,
    estimate_operator_norm,
    gradient,
    gradient_adjoint,
    gradient_operator,
    identity_operator,
)
from core.phantoms import make_phantom
from core.proximal import Constraint
from core.solver import (
    SolverConfig,
    fixed_point_residual,
    iterate,
    run,
)
from core.tomo import (
    SinogramGeometry,
    add_noise,
    make_gps_scene,
    radon2d_operator,
    ray3d_operator,
    ray_lengths,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    check: str
    passed: bool
    detail: str


def adjoint_mismatch(T: LinearOperatorHandle, pairs: int = 100, seed: int = 0) -> float:
    """Largest relative dot-product mismatch <Tx, y> vs <x, T^T y> over random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        x = GridField(T.grid, rng.standard_normal(T.grid.size))
        y = rng.standard_normal(T.range_size)
        tx, ty = apply(T, x), adjoint(T, y)
        scale = x.norm() * ty.norm() + np.linalg.norm(tx) * np.linalg.norm(y)
        if scale > 0:
            worst = max(worst, abs(np.dot(tx, y) - x.dot(ty)) / scale)
    return worst


def _check_adjoints() -> Tuple[bool, str]:
    rng = np.random.default_rng(1)
    backends = {
        "dense": dense_operator(rng.standard_normal((8, 8))),
        "radon2d": radon2d_operator(SinogramGeometry(GridSpec((8, 8)), 4, 11)),
        "ray3d": ray3d_operator(make_gps_scene(GridSpec((4, 4, 4)), 10, 10, 1, seed=2)),
        "finite-difference": gradient_operator(GridSpec((5, 5))),
    }
    errors = {name: adjoint_mismatch(T) for name, T in backends.items()}
    detail = ", ".join(f"{name}={err:.2e}" for name, err in errors.items())
    return all(err <= 1e-10 for err in errors.values()), detail


def _check_identities() -> Tuple[bool, str]:
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 5))
    norm = np.linalg.norm(A, 2)
    worst_identity, worst_lipschitz = 0.0, -np.inf
    for _ in range(100):
        u1, u2 = rng.standard_normal(5), rng.standard_normal(5)
        lam = rng.uniform()
        lhs = np.dot(lam * u1 + (1 - lam) * u2, lam * u1 + (1 - lam) * u2)
        rhs = lam * u1 @ u1 + (1 - lam) * u2 @ u2 - lam * (1 - lam) * (u1 - u2) @ (u1 - u2)
        worst_identity = max(worst_identity, abs(lhs - rhs) / max(abs(lhs), 1e-300))

        d = u1 - u2
        ata_d = A.T @ (A @ d)
        worst_lipschitz = max(worst_lipschitz, -d @ ata_d + ata_d @ ata_d / norm ** 2)
    passed = worst_identity <= 1e-10 and worst_lipschitz <= 1e-12
    return passed, f"convexity identity {worst_identity:.2e}, misfit bound slack {worst_lipschitz:.2e}"


def _check_norms() -> Tuple[bool, str]:
    diag = estimate_operator_norm(dense_operator(np.diag([3.0, 1.0]))).value
    ident = estimate_operator_norm(identity_operator(GridSpec((16,)))).value
    grad = estimate_operator_norm(gradient_operator(GridSpec((16, 16)))).value
    passed = abs(diag - 3.0) <= 0.03 and abs(ident - 1.0) <= 1e-6 and grad <= np.sqrt(8.0) + 1e-9
    return passed, f"diag(3,1)={diag:.6f}, identity={ident:.6f}, D(16x16)={grad:.6f}"


def _check_gradient_examples() -> Tuple[bool, str]:
    d = gradient(GridField.from_array(np.array([0.0, 1.0, 3.0])))
    w = StackedGradientField.from_stack(GridSpec((3,)), np.array([[1.0, 0.0, 0.0]]))
    dt = gradient_adjoint(w)
    passed = np.allclose(d.components[0], [1, 2, 0]) and np.allclose(dt.values, [-1, 1, 0])
    return passed, f"D[0,1,3]={d.components[0].tolist()}, D^T[1,0,0]={dt.values.tolist()}"


def _check_siddon_lengths() -> Tuple[bool, str]:
    scene = make_gps_scene(GridSpec((6, 5, 4), (1.0, 1.5, 0.5)), 8, 6, 3, seed=4)
    summed, clipped = ray_lengths(scene)
    worst = float(np.max(np.abs(summed - clipped) / clipped))
    return worst <= 1e-9, f"worst relative length gap {worst:.2e} over {scene.size} rays"


def _toy_ramp(shape=(8, 8), slope=(0.1, 0.2)) -> GridField:
    i, j = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    return GridField.from_array(1.0 + slope[0] * i + slope[1] * j)


def _check_fixed_point() -> Tuple[bool, str]:
    clean = _toy_ramp(slope=(0.5, 0.3))
    noisy = add_noise(clean.values, 0.02, seed=5)
    T = identity_operator(clean.grid)
    cfg = SolverConfig(mode="alg1", alpha0=0.1, max_iter=10000)
    result = run(T, noisy.values, 0.0, GridField.zeros(clean.grid), Constraint.nonnegative(), cfg, op_norm=1.0)
    s = result.state
    residual = fixed_point_residual(s.u, s.w, T, noisy.values, s.alpha, s.mu, s.nu, s.u_ref, s.w0,
                                    Constraint.nonnegative())
    return residual < 1e-6, f"fixed-point residual {residual:.2e} after {s.iter} iterations"


def _reference_steps(v: np.ndarray, u0: np.ndarray, mu: float, alpha0: float,
                     steps: int, lam: Optional[float]) -> List[np.ndarray]:
    """Plain transcription of the updates for a 1-D identity problem."""
    n = v.size
    D = np.diag(-np.ones(n)) + np.diag(np.ones(n - 1), 1)
    D[-1, :] = 0.0
    u = u0.copy()
    w0 = np.sign(D @ u0)
    w = w0.copy()
    out = []
    for i in range(1, steps + 1):
        alpha = alpha0 / i
        nu = min(1.0 / (mu * alpha) ** 2, 1e12)
        u_hat = np.maximum(u - mu * ((u - v) + alpha * D.T @ (w - w0)), 0.0)
        w = np.clip(w + nu * D @ u_hat, -1.0, 1.0)
        u = u_hat if lam is None else np.maximum((1 - lam) * u + lam * u_hat, 0.0)
        out.append(u.copy())
    return out


def _check_oracle() -> Tuple[bool, str]:
    v = np.array([0.5, 2.0, 1.0, 3.0])
    u0 = np.array([1.0, 0.0, 2.0, 0.5])
    T = identity_operator(GridSpec((4,)))
    worst = 0.0
    for mode, lam in (("alg1", None), ("alg2", 1.5)):
        cfg = SolverConfig(mode=mode, alpha0=0.3, mu_safety=0.4, lam=1.5)
        states = list(iterate(T, v, 0.0, GridField.from_array(u0), Constraint.nonnegative(), cfg, 1.0, 10))
        reference = _reference_steps(v, u0, 2.0 * cfg.mu_safety, 0.3, 10, lam)
        for state, expected in zip(states[1:], reference):
            worst = max(worst, float(np.max(np.abs(state.u.values - expected))))
    return worst <= 1e-12, f"max deviation from reference transcription {worst:.2e}"


def _check_mdp() -> Tuple[bool, str]:
    truth = make_phantom("disc", (16, 16))
    T = radon2d_operator(SinogramGeometry(truth.grid, 12, 23))
    clean = apply(T, truth)
    noisy = add_noise(clean, 0.05, seed=6)
    cfg = SolverConfig(mode="alg2", max_iter=3000)
    result = run(T, noisy.values, noisy.delta, GridField.zeros(truth.grid), Constraint.nonnegative(), cfg,
                 truth=truth)
    if result.report.reason != "mdp_band":
        return False, f"run stopped by {result.report.reason} instead of the discrepancy band"
    bound = (cfg.tau_upper + 1) * noisy.delta + 1e-9
    image_error = float(np.linalg.norm(apply(T, result.u) - clean))
    residuals = [row.residual_image_space for row in result.history]
    first = next(i for i, r in enumerate(residuals) if r <= cfg.tau_upper * noisy.delta)
    passed = image_error <= bound and first == result.report.i_star
    return passed, f"i*={result.report.i_star}, ||Tu-Tu_true||={image_error:.4g} <= {bound:.4g}"


def _check_monotone() -> Tuple[bool, str]:
    v = _toy_ramp()
    T = identity_operator(v.grid)
    u0 = GridField.zeros(v.grid)
    details = []
    passed = True
    # same effective primal step for both modes: alg2 moves lam times mu
    for mode, mu_safety in (("alg1", 0.25), ("alg2", 0.25 / 1.5)):
        cfg = SolverConfig(mode=mode, alpha0=1e-3, mu_safety=mu_safety, lam=1.5)
        states = iterate(T, v.values, 0.0, u0, Constraint.nonnegative(), cfg, 1.0, 10000)
        kept = [state.u.values for state in states]
        reference = kept[-1]
        distances = [float(np.linalg.norm(u - reference)) for u in kept]
        ok = all(b <= a + 1e-9 for a, b in zip(distances, distances[1:]))
        passed &= ok
        details.append(f"{mode}={'ok' if ok else 'increase'}")
    return passed, ", ".join(details)


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ("gradient_examples", _check_gradient_examples),
    ("adjoint_consistency", _check_adjoints),
    ("algebraic_identities", _check_identities),
    ("operator_norms", _check_norms),
    ("siddon_length_conservation", _check_siddon_lengths),
    ("oracle_equivalence", _check_oracle),
    ("fixed_point_certificate", _check_fixed_point),
    ("discrepancy_stop", _check_mdp),
    ("monotone_approach", _check_monotone),
]


def run_selftest(
    out_dir: Optional[Path] = None,
    progress_callback: Optional[Callable[[int, int], None]] = None
) -> List[CheckResult]:
    """
    Run every check; failures and unexpected exceptions become failed results.

    Args:
        out_dir: When given, selftest.csv is written there
        progress_callback: Optional callback(current, total)

    Returns:
        One CheckResult per check
    """
    results = []
    for index, (name, check) in enumerate(CHECKS, start=1):
        try:
            passed, detail = check()
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, "%s: %s (%s)", name, "pass" if passed else "FAIL", detail)
        results.append(CheckResult(name, bool(passed), detail))
        if progress_callback:
            progress_callback(index, len(CHECKS))

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_rows(out_dir / "selftest.csv", ["check", "passed", "detail"],
                   [{"check": r.check, "passed": r.passed, "detail": r.detail} for r in results])
    return results
