import numpy as np
import pytest

from core.errors import ConfigError, ParameterError, ShapeError
from core.fields import GridField, GridSpec, StackedGradientField
from core.operators import (
    adjoint,
    apply,
    assemble_dense,
    dense_operator,
    estimate_operator_norm,
    gradient,
    gradient_adjoint,
    gradient_operator,
    identity_operator,
    load_dense_operator,
)


class TestGradient:
    def test_one_axis_example(self):
        d = gradient(GridField.from_array(np.array([1.0, 3.0, 6.0])))
        np.testing.assert_array_equal(d.components[0], [2.0, 3.0, 0.0])

    def test_two_axis_example(self):
        d = gradient(GridField.from_array(np.array([[1.0, 2.0], [3.0, 5.0]])))
        np.testing.assert_array_equal(d.components[0].reshape(2, 2), [[2.0, 3.0], [0.0, 0.0]])
        np.testing.assert_array_equal(d.components[1].reshape(2, 2), [[1.0, 0.0], [2.0, 0.0]])

    def test_component_follows_axis(self):
        d = gradient(GridField.from_array(np.array([[0.0, 1.0], [0.0, 1.0]])))
        np.testing.assert_array_equal(d.components[0].reshape(2, 2), [[0.0, 0.0], [0.0, 0.0]])
        np.testing.assert_array_equal(d.components[1].reshape(2, 2), [[1.0, 0.0], [1.0, 0.0]])

    def test_constant_field_has_zero_gradient(self, grid_3d):
        d = gradient(GridField.full(grid_3d, 2.5))
        assert d.max_abs() == 0.0

    def test_adjoint_example(self):
        w = StackedGradientField.from_stack(GridSpec((3,)), np.array([[1.0, 0.0, 0.0]]))
        np.testing.assert_array_equal(gradient_adjoint(w).values, [-1.0, 1.0, 0.0])

    @pytest.mark.parametrize("shape", [(7,), (5, 6), (4, 3, 5)])
    def test_adjoint_pairing(self, shape, rng):
        grid = GridSpec(shape)
        for _ in range(20):
            u = GridField(grid, rng.standard_normal(grid.size))
            w = StackedGradientField.from_stack(grid, rng.standard_normal((grid.ndim, grid.size)))
            lhs = gradient(u).dot(w)
            rhs = u.dot(gradient_adjoint(w))
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("shape", [(7,), (5, 6), (4, 3, 5)])
    def test_normal_operator_is_positive_semidefinite(self, shape, rng):
        grid = GridSpec(shape)
        for _ in range(20):
            u = GridField(grid, rng.standard_normal(grid.size))
            du = gradient(u)
            quadratic = u.dot(gradient_adjoint(du))
            assert quadratic >= -1e-12
            assert quadratic == pytest.approx(du.dot(du), rel=1e-12, abs=1e-12)

    def test_adjoint_ignores_last_slice(self):
        grid = GridSpec((3,))
        w = StackedGradientField.from_stack(grid, np.array([[0.0, 0.0, 5.0]]))
        np.testing.assert_array_equal(gradient_adjoint(w).values, [0.0, 0.0, 0.0])


class TestHandles:
    def test_dense_adjoint_is_transpose(self, rng):
        A = rng.standard_normal((4, 3))
        T = dense_operator(A)
        y = rng.standard_normal(4)
        np.testing.assert_allclose(adjoint(T, y).values, A.T @ y)
        assert T.range_size == 4
        assert T.domain_shape == (3,)

    def test_apply_checks_shape(self):
        T = identity_operator(GridSpec((2, 2)))
        with pytest.raises(ShapeError):
            apply(T, GridField.zeros(GridSpec((4,))))

    def test_adjoint_checks_length(self):
        T = identity_operator(GridSpec((2, 2)))
        with pytest.raises(ShapeError):
            adjoint(T, np.zeros(3))

    def test_grid_must_match_columns(self):
        with pytest.raises(ShapeError):
            dense_operator(np.eye(3), GridSpec((2, 2)))

    def test_assemble_dense_of_gradient(self):
        D = assemble_dense(gradient_operator(GridSpec((3,))))
        np.testing.assert_array_equal(D, [[-1, 1, 0], [0, -1, 1], [0, 0, 0]])


class TestLoadDenseOperator:
    def test_reads_matrix(self, tmp_path):
        path = tmp_path / "op.txt"
        path.write_text("2 3\n1 0 0\n0 2 0\n")
        T = load_dense_operator(path)
        np.testing.assert_array_equal(apply(T, GridField.from_array(np.array([1.0, 1.0, 1.0]))), [1.0, 2.0])

    @pytest.mark.parametrize("text", ["2\n1 0\n", "2 2\n1 0\n", "1 2\n1 x\n", ""])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "op.txt"
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_dense_operator(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_dense_operator(tmp_path / "nope.txt")


class TestNormEstimate:
    def test_diagonal(self):
        estimate = estimate_operator_norm(dense_operator(np.diag([3.0, 1.0, 0.5])))
        assert estimate.converged
        assert estimate.value == pytest.approx(3.0, rel=1e-6)

    def test_identity(self):
        assert estimate_operator_norm(identity_operator(GridSpec((10,)))).value == pytest.approx(1.0)

    def test_zero_operator(self):
        estimate = estimate_operator_norm(dense_operator(np.zeros((2, 3))))
        assert estimate.value == 0.0
        assert estimate.converged

    def test_restarts_when_start_vector_is_annihilated(self):
        estimate = estimate_operator_norm(dense_operator(np.array([[1.0, -1.0]])))
        assert estimate.value == pytest.approx(np.sqrt(2.0), rel=1e-9)

    def test_gradient_norm_bound(self):
        value = estimate_operator_norm(gradient_operator(GridSpec((12, 12)))).value
        assert value <= np.sqrt(8.0) + 1e-9

    def test_invalid_arguments(self):
        T = identity_operator(GridSpec((2,)))
        with pytest.raises(ParameterError):
            estimate_operator_norm(T, max_iters=0)
        with pytest.raises(ParameterError):
            estimate_operator_norm(T, tol=0.0)
