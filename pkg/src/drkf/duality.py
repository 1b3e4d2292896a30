"""Scalar root-finding for the Wasserstein dual multiplier.

Both horizons reduce to the same problem once the error Gram matrix is
diagonalized: find ``gamma > max(g)`` with

    mean_nodes sum_i (g_i / (gamma - g_i))**2 == rho**2

which is ``tr[((I - G/gamma)^{-1} - I)^2]`` node-averaged. The left side is
strictly decreasing on ``(max g, inf)``, so bisection always succeeds.
"""
from __future__ import annotations

import math

import numpy as np

LOWER_REL = 1e-9


def radius_trace(eigs: np.ndarray, gamma: float) -> float:
    """Node-averaged ``tr[((I - G/gamma)^{-1} - I)^2]`` from eigenvalues of shape ``(N, d)``."""
    if math.isinf(gamma):
        return 0.0
    r = eigs / (gamma - eigs)
    return float(np.sum(r * r) / eigs.shape[0])


def solve_gamma(eigs: np.ndarray, rho: float, rtol: float = 1e-14, max_iter: int = 400) -> float:
    """Bisection for the multiplier; returns ``inf`` when every eigenvalue is zero."""
    eigs = np.clip(np.asarray(eigs, dtype=float), 0.0, None)
    if eigs.ndim == 1:
        eigs = eigs[None, :]
    g_max = float(eigs.max()) if eigs.size else 0.0
    if g_max <= 0.0:
        return math.inf
    if rho <= 0:
        raise ValueError("rho must be positive")
    target = rho * rho
    lo = g_max * (1.0 + LOWER_REL)
    if radius_trace(eigs, lo) <= target:
        # radius so large that the multiplier sits on the lower bracket
        return lo
    mean_tr = float(np.sum(eigs) / eigs.shape[0])
    hi = g_max + mean_tr / rho
    while radius_trace(eigs, hi) > target:
        lo = hi
        hi *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if radius_trace(eigs, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def dual_value(eigs: np.ndarray, rho: float, gamma: float) -> float:
    """``gamma rho^2 + gamma * mean tr[(I - G/gamma)^{-1} - I]``."""
    eigs = np.clip(np.asarray(eigs, dtype=float), 0.0, None)
    if eigs.ndim == 1:
        eigs = eigs[None, :]
    if math.isinf(gamma):
        return float(np.sum(eigs) / eigs.shape[0])
    return float(gamma * rho * rho + gamma * np.sum(eigs / (gamma - eigs)) / eigs.shape[0])


def worst_case_value(eigs: np.ndarray, rho: float) -> tuple[float, float]:
    """Worst-case second moment over the ball and the attaining multiplier."""
    eigs = np.asarray(eigs, dtype=float)
    if rho == 0:
        eigs2 = eigs if eigs.ndim == 2 else eigs[None, :]
        return float(np.sum(np.clip(eigs2, 0, None)) / eigs2.shape[0]), math.inf
    gamma = solve_gamma(eigs, rho)
    return dual_value(eigs, rho, gamma), gamma
