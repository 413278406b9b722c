import numpy as np
import pytest

from zipanel.errors import ConfigError, NumericalError, UsageError
from zipanel.splines import (
    DesignBlock,
    SmoothSpec,
    apply_centering_constraint,
    bspline_basis,
    difference_penalty,
    quantile_knots,
    tensor_basis,
    univariate_block,
)


def naive_cox_de_boor(x, knots, degree, i):
    """Textbook recursive B-spline evaluation, the independent oracle."""
    if degree == 0:
        last = knots[i + 1] == knots[-1]
        if knots[i] <= x < knots[i + 1] or (last and x == knots[i + 1] and knots[i] < knots[i + 1]):
            return 1.0
        return 0.0
    left_den = knots[i + degree] - knots[i]
    right_den = knots[i + degree + 1] - knots[i + 1]
    left = 0.0 if left_den == 0 else (x - knots[i]) / left_den * naive_cox_de_boor(x, knots, degree - 1, i)
    right = 0.0 if right_den == 0 else (knots[i + degree + 1] - x) / right_den * naive_cox_de_boor(
        x, knots, degree - 1, i + 1
    )
    return left + right


class TestBsplineBasis:
    def test_degree_zero_indicator(self):
        basis = bspline_basis([0.5], [0.0, 1.0, 2.0], degree=0)
        assert basis.shape == (1, 2)
        np.testing.assert_array_equal(basis[0], [1.0, 0.0])

    def test_partition_of_unity(self, rng):
        knots = quantile_knots(rng.uniform(0, 10, 300), basis_dim=10, degree=3)
        x = rng.uniform(0, 10, 100)
        basis = bspline_basis(x, knots, degree=3)
        np.testing.assert_allclose(basis.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_naive_recursion_at_knots(self, rng):
        x_fit = rng.uniform(0, 1, 200)
        knots = quantile_knots(x_fit, basis_dim=8, degree=3)
        interior = np.unique(knots[4:-4])
        basis = bspline_basis(interior, knots, degree=3)
        for row, xv in enumerate(interior):
            expected = [naive_cox_de_boor(xv, knots, 3, i) for i in range(basis.shape[1])]
            np.testing.assert_allclose(basis[row], expected, atol=1e-12)

    def test_matches_naive_recursion_random_points(self, rng):
        x_fit = rng.uniform(-2, 3, 150)
        knots = quantile_knots(x_fit, basis_dim=9, degree=2)
        xs = rng.uniform(-2, 3, 40)
        basis = bspline_basis(xs, knots, degree=2)
        for row, xv in enumerate(xs):
            expected = [naive_cox_de_boor(xv, knots, 2, i) for i in range(basis.shape[1])]
            np.testing.assert_allclose(basis[row], expected, atol=1e-12)

    def test_out_of_range_clamped_and_flagged(self):
        knots = quantile_knots(np.linspace(0, 1, 50), basis_dim=6, degree=3)
        basis, clamped = bspline_basis([-1.0, 0.5, 2.0], knots, 3, return_clamped=True)
        np.testing.assert_array_equal(clamped, [True, False, True])
        boundary, _ = bspline_basis([0.0, 0.5, 1.0], knots, 3, return_clamped=True)
        np.testing.assert_allclose(basis[0], boundary[0])
        np.testing.assert_allclose(basis[2], boundary[2])

    def test_too_few_knots_rejected(self):
        with pytest.raises(ConfigError):
            bspline_basis([0.5], [0.0, 0.0, 1.0, 1.0], degree=3)

    def test_decreasing_knots_rejected(self):
        with pytest.raises(ConfigError):
            bspline_basis([0.5], [0.0, 1.0, 0.5, 2.0], degree=0)


class TestDifferencePenalty:
    def test_hand_expansion_order_one(self):
        S = difference_penalty(3, order=1)
        np.testing.assert_array_equal(S, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])

    def test_constants_unpenalized(self):
        for q in (4, 7, 12):
            for order in (1, 2, 3):
                if order >= q:
                    continue
                S = difference_penalty(q, order)
                np.testing.assert_allclose(S @ np.ones(q), 0.0, atol=1e-12)

    def test_rank_via_svd(self):
        for q in (5, 9, 14):
            S = difference_penalty(q, order=2)
            rank = np.sum(np.linalg.svd(S, compute_uv=False) > 1e-10)
            assert rank == q - 2

    def test_psd(self, rng):
        S = difference_penalty(11, order=2)
        np.testing.assert_allclose(S, S.T)
        assert np.linalg.eigvalsh(S).min() > -1e-10

    def test_order_too_large_rejected(self):
        with pytest.raises(ConfigError):
            difference_penalty(3, order=3)


class TestTensorBasis:
    @staticmethod
    def _unit_block(column):
        return DesignBlock(
            basis=np.asarray(column, dtype=float).reshape(-1, 1),
            penalties=(np.zeros((1, 1)),),
            knots=(np.array([0.0, 1.0]),),
            degrees=(0,),
        )

    def test_constant_marginals_give_product_column(self):
        bx = self._unit_block([1.0, 2.0, 3.0])
        by = self._unit_block([4.0, 5.0, 6.0])
        tensor = tensor_basis(bx, by)
        np.testing.assert_allclose(tensor.basis[:, 0], [4.0, 10.0, 18.0])

    def test_two_penalties_per_block(self, rng):
        x = rng.uniform(0, 1, 80)
        y = rng.uniform(0, 1, 80)
        spec = SmoothSpec("x", basis_dim=5)
        tensor = tensor_basis(univariate_block(x, spec), univariate_block(y, spec))
        assert len(tensor.penalties) == 2
        assert tensor.basis.shape == (80, 25)

    def test_separable_function_exactly_representable(self, rng):
        x = rng.uniform(0, 1, 400)
        y = rng.uniform(0, 1, 400)
        spec = SmoothSpec("x", basis_dim=6)
        tensor = tensor_basis(univariate_block(x, spec), univariate_block(y, spec))
        target = (2.0 * x + 1.0) * (y**2 - y)  # polynomial in the cubic span
        coef, *_ = np.linalg.lstsq(tensor.basis, target, rcond=None)
        np.testing.assert_allclose(tensor.basis @ coef, target, atol=1e-10)

    def test_mismatched_sizes_rejected(self, rng):
        spec = SmoothSpec("x", basis_dim=5)
        bx = univariate_block(rng.uniform(0, 1, 30), spec)
        by = univariate_block(rng.uniform(0, 1, 31), spec)
        with pytest.raises(UsageError):
            tensor_basis(bx, by)

    def test_infinite_smoothing_collapses_to_penalty_null_space(self, rng):
        """With both lambdas huge the coefficients fall into the joint
        null space of the two marginal penalties, which is bilinear in
        the coefficient indices (a plane in the penalty geometry)."""
        x = rng.uniform(0, 1, 500)
        y = rng.uniform(0, 1, 500)
        spec = SmoothSpec("x", basis_dim=5)
        tensor = tensor_basis(univariate_block(x, spec), univariate_block(y, spec))
        target = np.sin(3 * x) * np.cos(2 * y)
        lam = 1e9
        total = tensor.penalties[0] + tensor.penalties[1]
        A = tensor.basis.T @ tensor.basis + lam * total
        coef = np.linalg.solve(A, tensor.basis.T @ target)

        vals, vecs = np.linalg.eigh(total)
        null_basis = vecs[:, vals < vals.max() * 1e-10]
        assert null_basis.shape[1] == 4  # products of (1, index) x (1, index)
        projected = null_basis @ (null_basis.T @ coef)
        np.testing.assert_allclose(coef, projected, atol=1e-6)

        # equivalently, the fitted surface is bilinear in the marginal
        # index-linear warps of x and y
        qx = qy = 5
        u = tensor.basis.reshape(-1, qx, qy).sum(axis=2) @ np.arange(qx)
        v = tensor.basis.reshape(-1, qx, qy).sum(axis=1) @ np.arange(qy)
        plane = np.column_stack([np.ones_like(u), u, v, u * v])
        fitted = tensor.basis @ coef
        resid = fitted - plane @ np.linalg.lstsq(plane, fitted, rcond=None)[0]
        assert np.abs(resid).max() < 1e-6


class TestCenteringConstraint:
    def test_columns_sum_to_zero_over_mask(self, rng):
        x = rng.uniform(0, 1, 120)
        block = univariate_block(x, SmoothSpec("x", basis_dim=8))
        mask = x > 0.4
        constrained = apply_centering_constraint(block, mask)
        np.testing.assert_allclose(constrained.basis[mask].sum(axis=0), 0.0, atol=1e-10)
        assert constrained.size == block.size - 1
        assert constrained.constraint_applied

    def test_fitted_smooth_mean_zero(self, rng):
        x = rng.uniform(0, 1, 100)
        block = apply_centering_constraint(univariate_block(x, SmoothSpec("x", basis_dim=7)))
        gamma = rng.normal(size=block.size)
        assert abs(np.mean(block.basis @ gamma)) < 1e-10

    def test_double_application_rejected(self, rng):
        block = univariate_block(rng.uniform(0, 1, 50), SmoothSpec("x", basis_dim=6))
        constrained = apply_centering_constraint(block)
        with pytest.raises(UsageError):
            apply_centering_constraint(constrained)

    def test_refit_equivalence_with_intercept(self, rng):
        x = rng.uniform(0, 1, 200)
        y = 2.0 + np.sin(2 * np.pi * x) + rng.normal(0, 0.1, 200)
        block = univariate_block(x, SmoothSpec("x", basis_dim=9))
        # unconstrained basis spans constants, so no intercept needed
        fit_raw = block.basis @ np.linalg.lstsq(block.basis, y, rcond=None)[0]
        constrained = apply_centering_constraint(block)
        design = np.column_stack([np.ones_like(x), constrained.basis])
        fit_con = design @ np.linalg.lstsq(design, y, rcond=None)[0]
        np.testing.assert_allclose(fit_raw, fit_con, atol=1e-8)

    def test_prediction_space_preserved(self, rng):
        """Penalized fits agree between parameterizations on the sample."""
        x = rng.uniform(0, 1, 150)
        y = np.cos(3 * x) + rng.normal(0, 0.2, 150)
        block = univariate_block(x, SmoothSpec("x", basis_dim=8))
        lam = 0.7
        S = block.penalties[0]
        A = block.basis.T @ block.basis + lam * S
        fit_raw = block.basis @ np.linalg.solve(A, block.basis.T @ y)

        con = apply_centering_constraint(block)
        design = np.column_stack([np.ones_like(x), con.basis])
        S_full = np.zeros((design.shape[1], design.shape[1]))
        S_full[1:, 1:] = con.penalties[0]
        A2 = design.T @ design + lam * S_full
        fit_con = design @ np.linalg.solve(A2, design.T @ y)
        np.testing.assert_allclose(fit_raw, fit_con, atol=1e-8)


class TestSmoothSpec:
    def test_json_round_trip(self):
        spec = SmoothSpec(("a", "b"), basis_dim=(5, 6), kind="tensor")
        assert SmoothSpec.from_dict(spec.to_dict()) == spec
        uni = SmoothSpec("a", basis_dim=12, degree=2, penalty_order=1)
        assert SmoothSpec.from_dict(uni.to_dict()) == uni

    def test_basis_dim_bound(self):
        with pytest.raises(ConfigError):
            SmoothSpec("a", basis_dim=4, degree=3)

    def test_tensor_minimum_dims(self):
        with pytest.raises(ConfigError):
            SmoothSpec(("a", "b"), basis_dim=(3, 5), kind="tensor")

    def test_constant_covariate_knots_rejected(self):
        with pytest.raises(ConfigError):
            quantile_knots(np.full(20, 3.0), basis_dim=6)
