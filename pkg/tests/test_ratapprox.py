import numpy as np
import pytest

from drkf.errors import Infeasible, ModelError, OrderCapExceeded, RootNearCircle
from drkf.ratapprox import (
    LaurentPolynomial,
    RationalPSD,
    best_precision,
    feasibility_lp,
    least_order,
    poly_spectral_factor,
    rational_factor,
)
from drkf.sslib import FrequencyGrid


@pytest.fixture(scope="module")
def grid():
    return FrequencyGrid(256)


@pytest.fixture(scope="module")
def first_order(grid):
    return 1.25 + np.cos(grid.omega)


def smooth_density(grid, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(6) / (1 + np.arange(6)) ** 2
    return np.exp(0.5 * np.cos(np.outer(grid.omega, np.arange(1, 7))) @ c)


class TestLP:
    def test_constant(self, grid):
        r = feasibility_lp(np.full(grid.N, 3.0), 0, 1e-12)
        assert r.P.coeffs[0] == pytest.approx(3.0) and r.Q.coeffs == (1.0,)

    def test_first_order_exact(self, first_order):
        r = feasibility_lp(first_order, 1, 1e-9)
        assert np.allclose(r.P.coeffs, [1.25, 0.5], atol=1e-7)
        assert np.allclose(r.Q.coeffs, [1.0, 0.0], atol=1e-7)

    def test_interval_analysis(self, first_order):
        with pytest.raises(Infeasible):
            feasibility_lp(first_order, 0, 0.4)
        r = feasibility_lp(first_order, 0, 1.0)
        assert r.eps <= 1.0 + 1e-9

    def test_grid_error_bound(self, grid):
        M = smooth_density(grid, 3)
        r = feasibility_lp(M, 2, 0.05)
        assert np.max(np.abs(r(grid.omega) - M)) <= r.eps + 1e-15
        assert r.eps <= 0.05 * (1 + 1e-6)
        assert np.min(r.P(grid.omega)) > 0 and np.min(r.Q(grid.omega)) > 0

    def test_too_coarse(self):
        with pytest.raises(ModelError):
            feasibility_lp(np.ones(4), 2, 0.1)


class TestModes:
    def test_best_precision_exact(self, first_order):
        assert best_precision(first_order, 1).eps <= 1e-6

    def test_best_precision_nested(self, grid):
        M = smooth_density(grid, 7)
        e = [best_precision(M, m).eps for m in (1, 2, 3)]
        assert e[2] <= e[1] * (1 + 1e-6) and e[1] <= e[0] * (1 + 1e-6)

    def test_least_order(self, grid, first_order):
        assert least_order(np.full(grid.N, 2.0), 0.1).m == 0
        assert least_order(first_order, 1e-6).m == 1

    def test_least_order_monotone(self, grid):
        M = smooth_density(grid, 11)
        orders = [least_order(M, e).m for e in (1e-1, 1e-2, 1e-3)]
        assert orders == sorted(orders)

    def test_order_cap(self, grid):
        with pytest.raises(OrderCapExceeded):
            least_order(smooth_density(grid, 5), 1e-9, m_max=1)


class TestFactor:
    def test_constant(self):
        assert np.allclose(poly_spectral_factor(LaurentPolynomial([4.0])).coeffs, [2.0])

    def test_quadratic(self):
        S = poly_spectral_factor(LaurentPolynomial([1.25, 0.5]))
        assert np.allclose(S.coeffs, [1.0, 0.5], atol=1e-12)

    def test_round_trip(self, grid):
        # |1 + 0.5 z^-1 + 0.2 z^-2|^2
        P = LaurentPolynomial([1.29, 0.6, 0.2])
        S = poly_spectral_factor(P)
        assert np.allclose(S.coeffs, [1.0, 0.5, 0.2], atol=1e-10)
        assert np.max(np.abs(np.abs(S(grid.nodes)) ** 2 - P(grid.omega))) <= 1e-8
        assert S.coeffs[0] > 0 and np.all(np.abs(S.roots) < 1)

    def test_root_on_circle(self):
        with pytest.raises(RootNearCircle):
            poly_spectral_factor(LaurentPolynomial([2.0, 1.0]))

    def test_rational_factor_by_hand(self):
        r = RationalPSD(LaurentPolynomial([1.25, 0.5]), LaurentPolynomial([1.0, 0.0]), 0.0)
        f = rational_factor(r)
        assert np.allclose(f.A, [[0.0]]) and np.allclose(f.B, [[1.0]]) and np.allclose(f.C, [[0.5]])
        assert f.d == pytest.approx(1.0)

    def test_rational_factor_constant(self):
        f = rational_factor(RationalPSD(LaurentPolynomial([9.0]), LaurentPolynomial([1.0]), 0.0))
        assert f.m == 0 and f.d == pytest.approx(3.0)

    def test_rational_factor_frequency_match(self, grid):
        r = RationalPSD(LaurentPolynomial([3.0, 1.0, -0.4]), LaurentPolynomial([1.0, 0.3, 0.1]), 0.0)
        f = rational_factor(r)
        SP, SQ = poly_spectral_factor(r.P), poly_spectral_factor(r.Q)
        z = grid.nodes
        assert np.max(np.abs(f(z) - SP(z) / SQ(z))) <= 1e-9
        assert np.max(np.abs(np.abs(f(z)) ** 2 - r(grid.omega))) <= 1e-8
        assert np.max(np.abs(np.linalg.eigvals(f.A))) < 1
        assert np.max(np.abs(np.linalg.eigvals(f.A - f.B @ f.C))) < 1

    def test_json(self):
        r = RationalPSD(LaurentPolynomial([3.0, 1.0]), LaurentPolynomial([1.0, 0.2]), 0.01)
        assert RationalPSD.from_dict(r.to_dict()) == r
