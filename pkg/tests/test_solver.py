from dataclasses import replace

import numpy as np
import pytest

from core.errors import ConfigError, DivergenceError, ParameterError
from core.fields import GridField, GridSpec
from core.operators import apply, dense_operator, identity_operator
from core.proximal import Constraint
from core.solver import (
    MdpDecision,
    SolverConfig,
    check_parameter_conditions,
    extrapolate,
    fixed_point_residual,
    initial_state,
    iterate,
    mdp_decide,
    relaxation_parameter,
    run,
    schedule_parameters,
    step_alg1,
    step_alg2,
    step_bregman_iterated,
)
from core.tomo import add_noise


def _identity_problem(values):
    v = np.asarray(values, dtype=np.float64)
    grid = GridSpec((v.size,))
    return identity_operator(grid), v, GridField.zeros(grid)


class TestSolverConfig:
    def test_defaults_validate(self):
        cfg = SolverConfig().validate()
        assert cfg.mode == "alg2"
        assert cfg.tau_lower == 1.1
        assert cfg.tau_upper == 1.5

    def test_bregman_alias(self):
        assert SolverConfig(mode="bregman").mode == "bregman_iterated"

    @pytest.mark.parametrize("changes", [
        {"mode": "alg3"},
        {"schedule": "adaptive"},
        {"tau_lower": 1.0},
        {"tau_lower": 1.6, "tau_upper": 1.5},
        {"alpha0": 0.0},
        {"lam": 2.0},
        {"lam": 1.0},
        {"max_iter": 0},
        {"mu_safety": 1.5},
        {"inner_iters": 0},
        {"epsilon": -1.0},
        {"schedule": "fixed_theorem", "i_star_cap": 1},
    ])
    def test_invalid_fields(self, changes):
        with pytest.raises(ConfigError):
            SolverConfig(**changes).validate()

    def test_lambda_only_matters_for_alg2(self):
        SolverConfig(mode="alg1", lam=3.0).validate()

    def test_from_dict_reads_lambda(self):
        cfg = SolverConfig.from_dict({"mode": "alg2", "lambda": 1.8})
        assert cfg.lam == 1.8
        assert cfg.to_dict()["lambda"] == 1.8

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            SolverConfig.from_dict({"step": 0.1})


class TestSchedules:
    def test_dynamic_alg1(self):
        cfg = SolverConfig(mode="alg1", mu_safety=1.0)
        mu, nu, alpha = schedule_parameters(1, 0.1, 2.0, cfg)
        assert (mu, nu, alpha) == pytest.approx((0.5, 4.0, 1.0))

    def test_alpha_decays_harmonically(self):
        cfg = SolverConfig(mode="alg1", mu_safety=1.0, alpha0=2.0)
        mu, nu, alpha = schedule_parameters(4, 0.1, 2.0, cfg)
        assert alpha == pytest.approx(0.5)
        assert nu == pytest.approx(1.0 / (0.5 * 0.5) ** 2)

    def test_dynamic_step_is_the_same_for_both_modes(self):
        for mode in ("alg1", "alg2"):
            mu, _, _ = schedule_parameters(1, 0.1, 2.0, SolverConfig(mode=mode, mu_safety=0.6))
            assert mu == pytest.approx(0.3)

    def test_default_alg2_extrapolation_stays_below_bound(self):
        cfg = SolverConfig()
        mu, _, _ = schedule_parameters(1, 0.1, 1.0, cfg)
        assert mu == pytest.approx(1.2)
        assert mu * cfg.lam <= 2.0

    def test_fixed_theorem(self):
        cfg = SolverConfig(mode="alg1", schedule="fixed_theorem", i_star_cap=10)
        mu, nu, alpha = schedule_parameters(1, 0.1, 2.0, cfg)
        assert mu == pytest.approx(1.0 / 80.0)
        assert relaxation_parameter(cfg) == pytest.approx(0.2)

    def test_nu_is_capped(self):
        cfg = SolverConfig(mode="alg1", alpha0=1e-9, nu_max=1e6)
        _, nu, _ = schedule_parameters(1, 0.1, 1.0, cfg)
        assert nu == 1e6

    def test_invalid_index_and_norm(self):
        cfg = SolverConfig()
        with pytest.raises(ParameterError):
            schedule_parameters(0, 0.1, 1.0, cfg)
        with pytest.raises(ParameterError):
            schedule_parameters(1, 0.1, 0.0, cfg)

    def test_scheduled_parameters_satisfy_conditions(self):
        for mode in ("alg1", "alg2"):
            cfg = SolverConfig(mode=mode)
            for i in (1, 10, 1000):
                mu, nu, alpha = schedule_parameters(i, 0.1, 3.0, cfg)
                assert check_parameter_conditions(mu, nu, alpha, 3.0, cfg.lam, mode) == []

    def test_violations_reported(self):
        violations = check_parameter_conditions(3.0, 10.0, 1.0, 1.0, lam=2.5, mode="alg2")
        assert len(violations) == 4


class TestSteps:
    def test_initial_state_projects_and_signs(self):
        T, v, _ = _identity_problem([0.0, 0.0, 0.0])
        u0 = GridField.from_array(np.array([-1.0, 2.0, 1.0]))
        state = initial_state(T, v, u0, Constraint.nonnegative())
        np.testing.assert_array_equal(state.u.values, [0.0, 2.0, 1.0])
        np.testing.assert_array_equal(state.w0.components[0], [1.0, -1.0, 0.0])
        assert state.w is state.w0
        assert state.residual == pytest.approx(np.sqrt(5.0))

    def test_first_alg1_step_with_unit_step_hits_data(self):
        T, v, u0 = _identity_problem([1.0, -2.0, 4.0])
        state = initial_state(T, v, u0, Constraint.nonnegative())
        state = step_alg1(replace(state, mu=1.0, nu=1.0, alpha=1.0), T, v, Constraint.nonnegative())
        np.testing.assert_array_equal(state.u.values, [1.0, 0.0, 4.0])
        assert state.iter == 1

    def test_alg2_with_unit_lambda_matches_alg1(self, rng):
        T = dense_operator(rng.standard_normal((5, 4)) * 0.3)
        v = rng.standard_normal(5)
        u0 = GridField.zeros(T.grid)
        c = Constraint.none()
        cfg = SolverConfig(mode="alg1")
        start = next(iterate(T, v, 0.0, u0, c, cfg, 1.0, 0))
        primed = replace(start, mu=0.5, nu=4.0, alpha=1.0)
        a = step_alg1(primed, T, v, c)
        b = step_alg2(primed, T, v, c, 1.0)
        np.testing.assert_allclose(a.u.values, b.u.values, atol=1e-14)
        np.testing.assert_allclose(a.w.as_stack(), b.w.as_stack(), atol=1e-14)
        np.testing.assert_allclose(b.u_hat.values, b.u.values, atol=1e-14)

    @pytest.mark.parametrize("lam", [0.0, 2.0, -0.5])
    def test_alg2_rejects_lambda(self, lam):
        T, v, u0 = _identity_problem([1.0, 2.0])
        state = initial_state(T, v, u0, Constraint.none())
        with pytest.raises(ParameterError):
            step_alg2(state, T, v, Constraint.none(), lam)

    def test_extrapolate(self):
        np.testing.assert_allclose(extrapolate(np.array([1.0, 2.0]), np.array([3.0, 0.0]), 1.5),
                                   [4.0, -1.0])

    def test_bregman_step_requires_inner_iterations(self):
        T, v, u0 = _identity_problem([1.0, 2.0])
        state = initial_state(T, v, u0, Constraint.none())
        with pytest.raises(ParameterError):
            step_bregman_iterated(state, T, v, Constraint.none(), 0)

    @pytest.mark.parametrize("mode", ["alg1", "alg2", "bregman"])
    def test_every_iterate_is_feasible_with_bounded_dual(self, mode, rng):
        T = dense_operator(rng.standard_normal((12, 9)) * 0.2, GridSpec((3, 3)))
        v = rng.standard_normal(12) * 3
        u0 = GridField(T.grid, rng.standard_normal(9))
        c = Constraint.box(0.0, 0.8)
        cfg = SolverConfig(mode=mode, alpha0=0.5, inner_iters=3)
        for state in iterate(T, v, 0.0, u0, c, cfg, 2.0, 40):
            assert c.is_feasible(state.u.values)
            assert state.w.max_abs() <= 1.0

    def test_bregman_first_outer_step_from_constant_start_matches_alg1(self, rng):
        T = dense_operator(rng.standard_normal((6, 5)) * 0.4)
        v = rng.standard_normal(6)
        c = Constraint.nonnegative()
        start = replace(initial_state(T, v, GridField.full(T.grid, 0.3), c), mu=0.3, nu=4.0, alpha=0.2)
        expected = start
        for _ in range(4):
            expected = step_alg1(expected, T, v, c)
        outer = step_bregman_iterated(start, T, v, c, 4)
        np.testing.assert_allclose(outer.u.values, expected.u.values, atol=1e-14)
        np.testing.assert_allclose(outer.w.as_stack(), expected.w.as_stack(), atol=1e-14)
        assert outer.iter == 1

    def test_bregman_step_keeps_an_optimal_iterate(self, rng):
        A = rng.standard_normal((8, 5)) * 0.4
        T = dense_operator(A)
        u_k = GridField(T.grid, np.array([0.5, 0.5, 1.0, 2.0, 2.0]))
        v = A @ u_k.values
        c = Constraint.nonnegative()
        state = replace(initial_state(T, v, u_k, c), mu=0.3, nu=4.0, alpha=0.3)
        outer = step_bregman_iterated(state, T, v, c, 10)
        np.testing.assert_allclose(outer.u.values, u_k.values, atol=1e-12)
        np.testing.assert_allclose(outer.w.as_stack(), state.w.as_stack(), atol=1e-12)

    def test_iterate_yields_initial_state_first(self):
        T, v, u0 = _identity_problem([1.0, 2.0, 3.0])
        states = list(iterate(T, v, 0.0, u0, Constraint.none(), SolverConfig(mode="alg1"), 1.0, 3))
        assert [s.iter for s in states] == [0, 1, 2, 3]


class TestMdp:
    def test_zero_delta_never_stops(self):
        assert mdp_decide(0.0, 0.0, SolverConfig()) is MdpDecision.CONTINUE

    def test_band_edge_stops(self):
        cfg = SolverConfig()
        assert mdp_decide(1.5, 1.0, cfg) is MdpDecision.STOP_IN_BAND
        assert mdp_decide(1.5000001, 1.0, cfg) is MdpDecision.CONTINUE

    @pytest.mark.parametrize("mode", ["alg1", "alg2"])
    def test_stops_at_first_index_inside_band(self, mode, rng):
        T = dense_operator(rng.standard_normal((30, 16)) * 0.3)
        truth = GridField(T.grid, 1.0 + rng.random(16))
        noisy = add_noise(apply(T, truth), 0.05, seed=2)
        result = run(T, noisy.values, noisy.delta, GridField.zeros(T.grid), Constraint.nonnegative(),
                     SolverConfig(mode=mode), truth=truth)
        report = result.report
        residuals = [row.residual_image_space for row in result.history]
        assert report.reason == "mdp_band"
        assert report.i_star == len(residuals) - 1
        assert residuals[-1] <= 1.5 * noisy.delta
        assert all(r > 1.5 * noisy.delta for r in residuals[:-1])
        assert report.overshoot == (residuals[-1] < 1.1 * noisy.delta)
        # the stopped iterate explains the clean data up to (tau_upper + 1) delta
        assert np.linalg.norm(apply(T, result.u) - noisy.clean) <= 2.5 * noisy.delta + 1e-9
        assert result.history[-1].rel_error_preimage < 1.0


class TestRun:
    def test_stops_in_band_on_denoising(self, ramp_8x8):
        noisy = add_noise(ramp_8x8.values, 0.05, seed=3)
        T = identity_operator(ramp_8x8.grid)
        cfg = SolverConfig(mode="alg1", mu_safety=0.5)
        result = run(T, noisy.values, noisy.delta, GridField.zeros(ramp_8x8.grid), Constraint.nonnegative(),
                     cfg, truth=ramp_8x8, op_norm=1.0)
        report = result.report
        assert report.reason == "mdp_band"
        assert report.i_star == 1
        assert report.final_residual <= 1.5 * noisy.delta
        assert report.tau_delta_bounds == pytest.approx((1.1 * noisy.delta, 1.5 * noisy.delta))
        assert report.overshoot == (report.final_residual < 1.1 * noisy.delta)
        assert len(result.history) == 2
        assert result.history[0].rel_error_preimage == pytest.approx(1.0)

    def test_result_unpacks(self, ramp_8x8):
        T = identity_operator(ramp_8x8.grid)
        u, report, history = run(T, ramp_8x8.values, 0.0, GridField.zeros(ramp_8x8.grid),
                                 Constraint.none(), SolverConfig(mode="alg1", max_iter=3), op_norm=1.0)
        assert report.reason == "max_iter"
        assert report.i_star == 3
        assert len(history) == 4
        assert u.shape == ramp_8x8.shape

    def test_exact_fit_at_start(self):
        T, v, _ = _identity_problem([1.0, 2.0])
        result = run(T, v, 0.1, GridField.from_array(v), Constraint.none(), SolverConfig(), op_norm=1.0)
        assert result.report.reason == "exact_fit"
        assert result.report.i_star == 0

    def test_oracle_floor(self, ramp_8x8):
        T = identity_operator(ramp_8x8.grid)
        cfg = SolverConfig(mode="alg1", epsilon=0.5, mu_safety=0.25)
        result = run(T, ramp_8x8.values, 0.0, GridField.zeros(ramp_8x8.grid), Constraint.none(), cfg,
                     truth=ramp_8x8, op_norm=1.0)
        assert result.report.reason == "oracle_floor"
        assert result.history[-1].rel_error_preimage <= 0.5
        assert all(row.rel_error_preimage > 0.5 for row in result.history[:-1])

    def test_estimates_norm_when_missing(self):
        T = dense_operator(np.diag([2.0, 1.0]))
        result = run(T, np.array([2.0, 1.0]), 0.0, GridField.zeros(T.grid), Constraint.none(),
                     SolverConfig(mode="alg1", max_iter=2))
        assert result.op_norm == pytest.approx(2.0, rel=1e-6)

    def test_divergence_is_raised(self):
        T, v, u0 = _identity_problem([1e308, 1e308])
        with pytest.raises(DivergenceError) as info, np.errstate(over="ignore", invalid="ignore"):
            run(T, v, 0.0, u0, Constraint.none(), SolverConfig(mode="alg1", max_iter=5), op_norm=1.0)
        assert info.value.iteration == 1

    def test_negative_delta(self):
        T, v, u0 = _identity_problem([1.0])
        with pytest.raises(ParameterError):
            run(T, v, -1.0, u0, Constraint.none(), SolverConfig(), op_norm=1.0)

    def test_bregman_outer_steps(self):
        T, v, u0 = _identity_problem([1.0, 2.0, 4.0, 7.0])
        cfg = SolverConfig(mode="bregman", alpha0=0.1, mu_safety=0.5, max_iter=3)
        result = run(T, v, 0.0, u0, Constraint.nonnegative(), cfg, op_norm=1.0)
        residuals = [row.residual_image_space for row in result.history]
        assert residuals[0] == pytest.approx(np.linalg.norm(v))
        assert residuals[1] == pytest.approx(np.sqrt(0.02), abs=1e-9)
        assert residuals[2] == pytest.approx(0.0, abs=1e-9)
        assert residuals[3] == pytest.approx(0.0, abs=1e-9)

    def test_progress_callback_reaches_total(self, ramp_8x8):
        calls = []
        T = identity_operator(ramp_8x8.grid)
        run(T, ramp_8x8.values, 0.0, GridField.zeros(ramp_8x8.grid), Constraint.none(),
            SolverConfig(mode="alg1", max_iter=10), op_norm=1.0, progress_callback=lambda c, t: calls.append((c, t)))
        assert calls[-1] == (10, 10)


def test_fixed_point_residual_small_at_convergence(ramp_8x8):
    T = identity_operator(ramp_8x8.grid)
    c = Constraint.nonnegative()
    cfg = SolverConfig(mode="alg1", alpha0=0.1, max_iter=3000)
    result = run(T, ramp_8x8.values, 0.0, GridField.zeros(ramp_8x8.grid), c, cfg, op_norm=1.0)
    s = result.state
    residual = fixed_point_residual(s.u, s.w, T, ramp_8x8.values, s.alpha, s.mu, s.nu, s.u_ref, s.w0, c)
    assert residual < 1e-6


def test_fixed_point_residual_large_at_start(ramp_8x8):
    T = identity_operator(ramp_8x8.grid)
    c = Constraint.nonnegative()
    state = initial_state(T, ramp_8x8.values, GridField.zeros(ramp_8x8.grid), c)
    residual = fixed_point_residual(state.u, state.w, T, ramp_8x8.values, 1.0, 1.0, 1.0,
                                    state.u_ref, state.w0, c)
    assert residual > 0.1


def test_alg2_near_unit_lambda_tracks_alg1():
    T, v, zero = _identity_problem([0.5, 2.0, 1.0, 3.0])
    u0 = zero.with_values(np.array([1.0, 0.0, 2.0, 0.5]))
    c = Constraint.nonnegative()
    plain = list(iterate(T, v, 0.0, u0, c, SolverConfig(mode="alg1", mu_safety=0.4), 1.0, 20))
    relaxed = list(iterate(T, v, 0.0, u0, c, SolverConfig(mode="alg2", mu_safety=0.4, lam=1 + 1e-9), 1.0, 20))
    for a, b in zip(plain, relaxed):
        np.testing.assert_allclose(a.u.values, b.u.values, atol=1e-6)
