import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from drkf import duality
from drkf.finite import bisection_gamma_matrix, causal_mask, causal_project, worst_case_mse_finite
from drkf.freq import SpectralDensity, spectral_factor_dft
from drkf.ratapprox import Infeasible, best_precision, feasibility_lp
from drkf.sslib import FrequencyGrid, StateSpaceModel, build_block_toeplitz

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite_floats = st.floats(-0.95, 0.95)
spectra = st.lists(st.floats(0.0, 5.0), min_size=1, max_size=6)


def spd_from(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return A @ A.T + 0.1 * np.eye(n)


@SETTINGS
@given(eigs=spectra, rho=st.floats(0.05, 5.0))
def test_bisection_hits_radius(eigs, rho):
    w = np.array(eigs)[None, :]
    if not np.any(w > 0):
        return
    gamma = duality.solve_gamma(w, rho)
    assert gamma > w.max()
    assert abs(duality.radius_trace(w, gamma) - rho**2) <= 1e-8 * max(rho**2, 1)


@SETTINGS
@given(seed=st.integers(0, 10_000), rho=st.floats(0.05, 3.0))
def test_matrix_bisection_trace_identity(seed, rho):
    G = spd_from(seed, 4)
    gamma, Mt = bisection_gamma_matrix(G, rho)
    I = np.eye(4)
    # tr((M^{1/2} - I)^2) = rho^2 with M^{1/2} = (I - G/gamma)^{-1}
    root = np.linalg.inv(I - G / gamma)
    assert np.allclose(root @ root, Mt, rtol=1e-10, atol=1e-10)
    assert abs(np.trace((root - I) @ (root - I)) - rho**2) <= 1e-8 * max(rho**2, 1)


@SETTINGS
@given(a=finite_floats, c=st.floats(0.2, 2.0), T=st.integers(1, 5), seed=st.integers(0, 1000))
def test_projection_is_causal(a, c, T, seed):
    model = StateSpaceModel([[a]], [[1.0]], [[c]], [[1.0]])
    pair = build_block_toeplitz(model, T)
    K, val = causal_project(spd_from(seed, T), pair)
    assert np.all(K[~causal_mask(pair)] == 0)
    assert val >= 0


@SETTINGS
@given(seed=st.integers(0, 10_000), r1=st.floats(0.0, 3.0), r2=st.floats(0.0, 3.0))
def test_worst_case_monotone_in_radius(seed, r1, r2):
    T_K = np.random.default_rng(seed).standard_normal((3, 5))
    lo, hi = sorted((r1, r2))
    v_lo = worst_case_mse_finite(T_K, lo)[0]
    v_hi = worst_case_mse_finite(T_K, hi)[0]
    assert v_lo <= v_hi * (1 + 1e-10) + 1e-12
    assert v_lo >= np.sum(T_K**2) * (1 - 1e-12)


@SETTINGS
@given(c=st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=5))
def test_spectral_factor_round_trip(c):
    grid = FrequencyGrid(256)
    k = np.arange(1, len(c) + 1)
    M = np.exp(np.cos(np.outer(grid.omega, k)) @ (np.array(c) / k))
    U = spectral_factor_dft(SpectralDensity(grid, M[:, None, None].astype(complex)))
    assert np.max(np.abs(np.abs(U.samples[:, 0, 0]) ** 2 - M)) <= 1e-8 * M.max()
    assert U.tail <= 1e-8


@settings(max_examples=15, deadline=None)
@given(c=st.lists(st.floats(-0.4, 0.4), min_size=2, max_size=4))
def test_lp_error_nonincreasing_in_order(c):
    grid = FrequencyGrid(128)
    k = np.arange(1, len(c) + 1)
    M = np.exp(np.cos(np.outer(grid.omega, k)) @ np.array(c))
    eps = [best_precision(M, m).eps for m in range(3)]
    tol = 1e-6 * M.max()
    assert eps[1] <= eps[0] + tol and eps[2] <= eps[1] + tol
    # an order-m fit stays feasible at order m + 1 with the same error
    try:
        feasibility_lp(M, 2, eps[1] + tol)
    except Infeasible:
        raise AssertionError("order 2 infeasible where order 1 was feasible")
