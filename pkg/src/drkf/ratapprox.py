"""Rational approximation of a sampled positive spectrum in the sup norm on the grid.

For a fixed error level ``eps`` the conditions ``|P/Q - M| <= eps`` with
``P, Q > 0`` are linear in the coefficients of the symmetric Laurent
polynomials ``P`` and ``Q``. So a fixed order is checked by one LP, and the
best error is found by bisection on ``eps``. The result is turned into a
minimum-phase factor ``U = S_P / S_Q`` by polynomial root splitting.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import Infeasible, ModelError, NumericalFailure, OrderCapExceeded, RootNearCircle

DELTA = 1e-8
CIRCLE_TOL = 1e-6


@dataclass(frozen=True)
class LaurentPolynomial:
    """``p_0 + sum_k p_k (z^k + z^-k)``."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.coeffs))
        if not c or not all(math.isfinite(v) for v in c):
            raise ModelError("Laurent coefficients must be finite and nonempty")
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        k = np.arange(1, self.order + 1)
        c = np.asarray(self.coeffs)
        return c[0] + 2.0 * np.cos(omega[..., None] * k) @ c[1:]

    def at_z(self, z) -> np.ndarray:
        return self(np.angle(np.asarray(z)))


@dataclass(frozen=True)
class RationalPSD:
    P: LaurentPolynomial
    Q: LaurentPolynomial
    eps: float

    @property
    def m(self) -> int:
        return self.P.order

    def __call__(self, omega) -> np.ndarray:
        return self.P(omega) / self.Q(omega)

    def to_dict(self) -> dict:
        return {"m": self.m, "p": list(self.P.coeffs), "q": list(self.Q.coeffs), "eps": self.eps}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RationalPSD":
        return cls(LaurentPolynomial(d["p"]), LaurentPolynomial(d["q"]), float(d["eps"]))


@dataclass(frozen=True)
class MinPhasePoly:
    """``S(z) = sum_k s_k z^-k`` with every root of ``sum_k s_k z^(m-k)`` inside the disk."""

    coeffs: np.ndarray

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.polyval(self.coeffs[::-1], 1.0 / z)

    @property
    def roots(self) -> np.ndarray:
        return np.roots(self.coeffs) if self.coeffs.size > 1 else np.zeros(0)


@dataclass(frozen=True)
class RationalFactor:
    """``U(z) = d (1 + C (zI - A)^{-1} B)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    d: float

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.m == 0:
            return np.full(z.shape, self.d, dtype=complex)
        mats = z[:, None, None] * np.eye(self.m) - self.A
        x = np.linalg.solve(mats, np.broadcast_to(self.B, z.shape + self.B.shape))
        return self.d * (1.0 + (self.C @ x)[:, 0, 0])


# --------------------------------------------------------------------------
# LP


def _unique_nodes(M: np.ndarray):
    """Values on ``omega in [0, pi]``; the rest of the grid is the mirror image."""
    M = np.asarray(M, dtype=float).ravel()
    N = M.size
    if N % 2:
        raise ModelError("grid size must be even")
    idx = np.arange(N // 2 + 1)
    return 2.0 * np.pi * idx / N, M[idx], M


def feasibility_lp(M, m: int, eps: float, delta: float = DELTA) -> RationalPSD:
    """Order-``m`` pair ``(P, Q)`` with ``|P/Q - M| <= eps`` on the grid, or ``Infeasible``."""
    omega, Mu, M_full = _unique_nodes(M)
    if m < 0 or eps < 0:
        raise ModelError("order and eps must be nonnegative")
    if M_full.size <= 2 * m:
        raise ModelError("grid too coarse for the requested order (need N > 2m)")
    if np.any(M_full <= 0):
        raise ModelError("target spectrum must be positive")
    scale = float(np.mean(M_full))
    Ms, es = Mu / scale, eps / scale
    n = omega.size
    cos = 2.0 * np.cos(omega[:, None] * np.arange(1, m + 1))  # (n, m)
    # variables: p_0..p_m, q_1..q_m, t; maximize the positivity margin t >= delta
    Pp = np.hstack([np.ones((n, 1)), cos])
    Qq = cos
    zc = np.zeros((n, 1))
    rows, rhs = [], []
    for sign, bound in ((1.0, Ms + es), (-1.0, Ms - es)):
        # sign * (P - bound * Q) <= 0 with Q = 1 + Qq q
        rows.append(sign * np.hstack([Pp, -bound[:, None] * Qq, zc]))
        rhs.append(sign * bound)
    rows.append(np.hstack([-Pp, np.zeros((n, m)), np.ones((n, 1))]))
    rhs.append(np.zeros(n))
    rows.append(np.hstack([np.zeros((n, m + 1)), -Qq, np.ones((n, 1))]))
    rhs.append(np.ones(n))
    A_ub = np.vstack(rows)
    b_ub = np.concatenate(rhs)
    c = np.zeros(2 * m + 2)
    c[-1] = -1.0
    bounds = [(None, None)] * (2 * m + 1) + [(delta, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status == 2:
        raise Infeasible(f"no order-{m} rational fit within eps={eps:g}")
    if res.status != 0:
        raise NumericalFailure(f"LP solver failed: {res.message}")
    p = res.x[: m + 1] * scale
    q = np.concatenate([[1.0], res.x[m + 1:-1]])
    P, Q = LaurentPolynomial(p), LaurentPolynomial(q)
    full = 2.0 * np.pi * np.arange(M_full.size) / M_full.size
    if np.min(P(full)) <= 0 or np.min(Q(full)) <= 0:
        raise NumericalFailure("LP solution lost positivity on the grid")
    achieved = float(np.max(np.abs(P(full) / Q(full) - M_full)))
    return RationalPSD(P, Q, achieved)


def best_precision(M, m: int, tol_eps: float | None = None) -> RationalPSD:
    """Smallest grid error reachable at order ``m``, to bisection accuracy ``tol_eps``."""
    _, _, M_full = _unique_nodes(M)
    hi = float(np.max(np.abs(M_full - M_full.mean())))
    if tol_eps is None:
        tol_eps = 1e-7 * float(np.max(np.abs(M_full)))
    best = RationalPSD(LaurentPolynomial([M_full.mean()] + [0.0] * m), LaurentPolynomial([1.0] + [0.0] * m), hi)
    lo = 0.0
    try:
        best = feasibility_lp(M_full, m, 0.0)
        return best
    except (Infeasible, NumericalFailure):
        pass
    while hi - lo > tol_eps:
        mid = 0.5 * (lo + hi)
        try:
            best = feasibility_lp(M_full, m, mid)
            hi = mid
        except Infeasible:
            lo = mid
        except NumericalFailure:
            lo = mid
    return best


def least_order(M, eps: float, m_max: int = 20) -> RationalPSD:
    """Lowest order whose LP is feasible at error ``eps``."""
    if eps <= 0:
        raise ModelError("eps must be positive")
    for m in range(m_max + 1):
        try:
            return feasibility_lp(M, m, eps)
        except Infeasible:
            continue
    raise OrderCapExceeded(f"no rational fit within eps={eps:g} up to order {m_max}")


# --------------------------------------------------------------------------
# factorization


def poly_spectral_factor(P: LaurentPolynomial) -> MinPhasePoly:
    """Minimum-phase ``S`` with ``|S|^2 = P`` on the circle."""
    c = np.asarray(P.coeffs, dtype=float)
    while c.size > 1 and abs(c[-1]) <= 1e-14 * np.max(np.abs(c)):
        c = c[:-1]
    m = c.size - 1
    if m == 0:
        if c[0] <= 0:
            raise ModelError("constant Laurent polynomial must be positive")
        return MinPhasePoly(np.concatenate([[math.sqrt(c[0])], np.zeros(P.order)]))
    # z^m P(z), highest power first
    full = np.concatenate([c[::-1], c[1:]])
    roots = np.roots(full)
    mags = np.abs(roots)
    if np.any(np.abs(mags - 1.0) <= CIRCLE_TOL):
        raise RootNearCircle("Laurent polynomial has roots on the unit circle")
    inside = roots[mags < 1.0]
    if inside.size != m:
        raise NumericalFailure("roots do not split evenly across the unit circle")
    mono = np.poly(inside)
    if np.max(np.abs(mono.imag)) > 1e-8 * np.max(np.abs(mono)):
        raise NumericalFailure("factor has complex coefficients")
    mono = mono.real
    omega = np.linspace(0.0, np.pi, 64)
    zinv = np.exp(-1j * omega)
    ratio = LaurentPolynomial(c)(omega) / np.abs(np.polyval(mono[::-1], zinv)) ** 2
    gain = math.sqrt(float(np.mean(ratio)))
    s = gain * mono
    return MinPhasePoly(np.concatenate([s, np.zeros(P.order - m)]))


def rational_factor(r: RationalPSD) -> RationalFactor:
    """Controllable-canonical realization of ``S_P / S_Q``."""
    SP = poly_spectral_factor(r.P).coeffs
    SQ = poly_spectral_factor(r.Q).coeffs
    m = max(SP.size, SQ.size) - 1
    SP = np.pad(SP, (0, m + 1 - SP.size))
    SQ = np.pad(SQ, (0, m + 1 - SQ.size))
    d = SP[0] / SQ[0]
    a = SP / SP[0]
    b = SQ / SQ[0]
    if m == 0:
        return RationalFactor(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), float(d))
    A = np.zeros((m, m))
    A[0, :] = -b[1:]
    A[1:, :-1] = np.eye(m - 1)
    B = np.zeros((m, 1))
    B[0, 0] = 1.0
    C = (a[1:] - b[1:])[None, :]
    return RationalFactor(A, B, C, float(d))
