import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krigamg.covariance import ParametricCovariance, ParametricModel, EmpiricalCovariance
from krigamg.errors import NumericalError
from krigamg.kriging import (
    LocalCovariance,
    assemble_local_cov,
    ls_multi_interpolation,
    ls_pairwise_strength,
    ordinary_kriging,
    prior_stencil,
    simple_kriging,
)
from krigamg.metric import GraphDistanceOracle
from krigamg.problems import generate_fd_square

from conftest import random_spd


def local_from_dense(mat):
    import scipy.linalg

    return LocalCovariance(
        matrix=np.asarray(mat, dtype=float),
        source="parametric",
        cho=scipy.linalg.cho_factor(np.asarray(mat)[:-1, :-1], lower=True),
    )


def dense_ok_oracle(c_cc, c_ci, c_ii):
    """Constrained least-squares weights by explicit Lagrangian inverse."""
    q = c_cc.shape[0]
    kkt = np.zeros((q + 1, q + 1))
    kkt[:q, :q] = c_cc
    kkt[:q, q] = 1.0
    kkt[q, :q] = 1.0
    rhs = np.concatenate([c_ci, [1.0]])
    sol = np.linalg.inv(kkt) @ rhs
    w = sol[:q]
    variance = c_ii - 2 * w @ c_ci + w @ c_cc @ w
    return w, variance


class TestAssemble:
    def test_spherical_compact_support_gives_identity(self):
        class TwoFarApart:
            kind = "graph"

            def pairwise(self, nodes):
                d = np.full((len(nodes), len(nodes)), 2.0)
                np.fill_diagonal(d, 0.0)
                return d

        model = ParametricModel("spherical", 1.0, 1.0)
        src = ParametricCovariance(model, TwoFarApart())
        local = assemble_local_cov(5, [1, 2], src)
        np.testing.assert_allclose(local.matrix, np.eye(3))

    def test_empirical_k1_triggers_regularization(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((6, 1))
        src = EmpiricalCovariance(v, mean_mode="zero")
        local = assemble_local_cov(3, [0, 1], src)
        assert local.regularized
        assert local.positive_definite

    def test_parametric_collinear_matches_direct_evaluation(self, laplace_5x5):
        oracle = GraphDistanceOracle(laplace_5x5.matrix, 4.0)
        model = ParametricModel("exponential", 1.3, 1.7)
        src = ParametricCovariance(model, oracle)
        local = assemble_local_cov(2, [0, 1], src)  # nodes 0,1,2 collinear
        d = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
        expected = model.cov(d)[np.ix_([0, 1, 2], [0, 1, 2])]
        # member order [0,1], fine var last
        np.testing.assert_allclose(local.matrix, expected, atol=1e-15)

    def test_self_inclusion_rejected(self):
        model = ParametricModel("exponential", 1.0, 1.0)

        class Dummy:
            def pairwise(self, nodes):
                return np.zeros((len(nodes), len(nodes)))

        with pytest.raises(ValueError):
            assemble_local_cov(1, [1, 2], ParametricCovariance(model, Dummy()))


class TestSimpleKriging:
    def test_scalar_schur(self):
        rho = 0.6
        local = local_from_dense([[1.0, rho], [rho, 1.0]])
        st_ = simple_kriging(7, [3], local)
        np.testing.assert_allclose(st_.weights, [rho])
        assert st_.variance == pytest.approx(1 - rho**2)

    def test_zero_cross_covariance(self):
        local = local_from_dense([[2.0, 0.0], [0.0, 3.0]])
        st_ = simple_kriging(1, [0], local)
        np.testing.assert_allclose(st_.weights, [0.0])
        assert st_.variance == pytest.approx(3.0)


class TestOrdinaryKriging:
    def test_single_point_forced_weight_one(self):
        local = local_from_dense([[2.0, 0.3], [0.3, 1.5]])
        st_ = ordinary_kriging(9, [4], local)
        np.testing.assert_allclose(st_.weights, [1.0], atol=1e-12)
        assert st_.variance == pytest.approx(1.5 - 2 * 0.3 + 2.0)

    def test_symmetric_pair_half_half(self):
        c = np.array([[1.0, 0.2, 0.5], [0.2, 1.0, 0.5], [0.5, 0.5, 1.0]])
        st_ = ordinary_kriging(2, [0, 1], local_from_dense(c))
        np.testing.assert_allclose(st_.weights, [0.5, 0.5], atol=1e-12)

    def test_matches_dense_lagrangian_and_appendix_identity(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            full = random_spd(rng, 5)
            local = local_from_dense(full)
            st_ = ordinary_kriging(0, [10, 11, 12, 13], local)
            w_oracle, var_oracle = dense_ok_oracle(full[:4, :4], full[:4, 4], full[4, 4])
            np.testing.assert_allclose(st_.weights, w_oracle, atol=1e-12)
            assert st_.variance == pytest.approx(var_oracle, abs=1e-10)
            # closed form: least-squares weights plus constant-sum correction
            inv = np.linalg.inv(full[:4, :4])
            p_sharp = inv @ full[:4, 4]
            ones = np.ones(4)
            corr = (1 - p_sharp @ ones) / (ones @ inv @ ones) * (inv @ ones)
            np.testing.assert_allclose(st_.weights, p_sharp + corr, atol=1e-10)

    def test_variance_decomposition_nonnegative(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            full = random_spd(rng, 4)
            local = local_from_dense(full)
            ok = ordinary_kriging(0, [1, 2, 3], local)
            simple = simple_kriging(0, [1, 2, 3], local)
            inv = np.linalg.inv(full[:3, :3])
            ones = np.ones(3)
            expected = (1 - full[:3, 3] @ inv @ ones) ** 2 / (ones @ inv @ ones)
            assert ok.variance - simple.variance == pytest.approx(expected, abs=1e-10)
            assert ok.variance - simple.variance >= -1e-10

    def test_degenerate_identical_points(self):
        c = np.array([[1.0, 1.0, 0.5], [1.0, 1.0, 0.5], [0.5, 0.5, 1.0]])
        local = LocalCovariance(matrix=c, source="parametric", cho=None)
        with pytest.raises(NumericalError):
            ordinary_kriging(0, [1, 2], local)

    def test_empty_set_prior(self):
        st_ = prior_stencil(3, 1.7)
        assert st_.members == [] and st_.variance == 1.7
        assert st_.selection_variance == 1.7


class TestLeastSquares:
    def test_identical_columns(self):
        v = np.vstack([np.ones(5), np.ones(5)])
        p, s2 = ls_pairwise_strength(v, 0, 1)
        assert p == pytest.approx(1.0) and s2 == pytest.approx(0.0)

    def test_orthogonal_columns(self):
        v = np.array([[1.0, 0.0], [0.0, 1.0]])
        p, s2 = ls_pairwise_strength(v, 0, 1)
        assert p == 0.0 and s2 == pytest.approx(1.0)

    def test_zero_norm_rejected(self):
        v = np.array([[1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ValueError):
            ls_pairwise_strength(v, 0, 1)

    def test_matches_scalar_scan_oracle(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal((2, 8))
        p, _ = ls_pairwise_strength(v, 0, 1)

        def objective(c):
            return np.sum((v[0] - c * v[1]) ** 2)

        # golden-section refinement of a coarse scan
        grid = np.linspace(-3, 3, 601)
        best = grid[np.argmin([objective(c) for c in grid])]
        lo, hi = best - 0.02, best + 0.02
        phi = (np.sqrt(5) - 1) / 2
        for _ in range(60):
            m1 = hi - phi * (hi - lo)
            m2 = lo + phi * (hi - lo)
            if objective(m1) < objective(m2):
                hi = m2
            else:
                lo = m1
        assert p == pytest.approx((lo + hi) / 2, abs=1e-8)

    def test_multi_exact_representation(self):
        rng = np.random.default_rng(6)
        basis = rng.standard_normal((3, 8))
        coeffs = np.array([0.5, -1.0, 2.0])
        target = coeffs @ basis
        v = np.vstack([target, basis])
        weights, residual = ls_multi_interpolation(v, 0, [1, 2, 3])
        np.testing.assert_allclose(weights, coeffs, atol=1e-10)
        assert abs(residual) < 1e-10

    def test_singleton_consistent_with_pairwise(self):
        rng = np.random.default_rng(7)
        v = rng.standard_normal((2, 8))
        w, _ = ls_multi_interpolation(v, 0, [1])
        p, _ = ls_pairwise_strength(v, 0, 1)
        assert w[0] == pytest.approx(p, rel=1e-12)

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(8)
        v = rng.standard_normal((4, 8))
        weights, residual = ls_multi_interpolation(v, 0, [1, 2, 3])
        basis = v[[1, 2, 3]]
        oracle = np.linalg.solve(basis @ basis.T, basis @ v[0])
        np.testing.assert_allclose(weights, oracle, atol=1e-10)
        k = v.shape[1]
        assert residual == pytest.approx(
            np.sum((v[0] - oracle @ basis) ** 2) / k, abs=1e-10
        )

    def test_singular_gram_rejected(self):
        v = np.array([[1.0, 2.0], [1.0, 1.0], [2.0, 2.0]])  # rows 1,2 dependent
        with pytest.raises(NumericalError):
            ls_multi_interpolation(v, 0, [1, 2])


class TestGaussianConditioningOracle:
    def test_local_kriging_equals_dense_blup_conditioning(self):
        rng = np.random.default_rng(30)
        for n in (5, 8, 12):
            full = random_spd(rng, n)
            i = n - 1
            members = list(range(n - 1))
            local = local_from_dense(full)
            st_ = ordinary_kriging(i, members, local)
            c_cc = full[:-1, :-1]
            c_ci = full[:-1, -1]
            inv = np.linalg.inv(c_cc)
            ones = np.ones(n - 1)
            x_c = rng.standard_normal((n - 1, 6))
            mu = (ones @ inv @ x_c) / (ones @ inv @ ones)
            conditional = mu + c_ci @ inv @ (x_c - np.outer(ones, mu))
            np.testing.assert_allclose(st_.weights @ x_c, conditional, atol=1e-10)

    def test_constant_reproduction(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            full = random_spd(rng, 5)
            st_ = ordinary_kriging(0, [1, 2, 3, 4], local_from_dense(full))
            assert st_.weights.sum() == pytest.approx(1.0, abs=1e-10)
            assert st_.weights @ np.ones(4) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_monotone_information(seed):
    # enlarging the interpolatory set never increases the simple-Kriging variance
    rng = np.random.default_rng(seed)
    full = random_spd(rng, 6)
    local_small = local_from_dense(full[np.ix_([0, 1, 5], [0, 1, 5])])
    local_big = local_from_dense(full[np.ix_([0, 1, 2, 3, 5], [0, 1, 2, 3, 5])])
    var_small = simple_kriging(5, [0, 1], local_small).variance
    var_big = simple_kriging(5, [0, 1, 2, 3], local_big).variance
    assert var_big <= var_small + 1e-10
