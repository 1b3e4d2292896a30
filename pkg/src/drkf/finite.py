"""Finite-horizon distributionally robust filter over stacked block-Toeplitz operators.

Stacking ``T`` steps turns every operator into a matrix: measurements are
``y = H_T w + v`` and targets are ``s = L_T w``, with
``w = [x0; w_0..w_{T-2}]``. A causal filter is block lower triangular, and its
error map is ``T_K = [K H_T - L_T, K]`` acting on ``xi = [w; v]``.

The minimax problem is solved through its dual over the error-side weight
``M`` (size ``T d_s``). Frank-Wolfe alternates between two closed-form steps:
the weighted causal projection and the bisection for the multiplier.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import duality
from .errors import GammaTooSmall, IterationCap, ModelError, NotPD
from .sslib import BlockToeplitzPair, StateSpaceModel, build_block_toeplitz


@dataclass(frozen=True)
class ErrorOperator:
    """``T_K = [K H_T - L_T, K]``."""

    T_K: np.ndarray

    @classmethod
    def from_filter(cls, K: np.ndarray, pair: BlockToeplitzPair) -> "ErrorOperator":
        return cls(np.hstack([K @ pair.H_T - pair.L_T, K]))

    @property
    def gram(self) -> np.ndarray:
        """``T_K T_K^T`` (error side)."""
        G = self.T_K @ self.T_K.T
        return 0.5 * (G + G.T)


@dataclass
class FiniteSynthesisResult:
    T: int
    rho_T: float
    K_T: np.ndarray
    gamma_star: float
    M_star: np.ndarray
    value: float
    iterations: int
    gap_history: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    pair: BlockToeplitzPair | None = None

    @property
    def error_operator(self) -> ErrorOperator:
        return ErrorOperator.from_filter(self.K_T, self.pair)

    def summary(self) -> dict:
        return {
            "T": self.T,
            "rho_T": self.rho_T,
            "gamma_star": self.gamma_star,
            "value": self.value,
            "iterations": self.iterations,
            "radius_residual": self.residuals.get("radius"),
            "kkt_residual": self.residuals.get("kkt"),
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)

    def write_csv(self, path) -> None:
        """Header ``T,d_s,d_y`` followed by ``K_T`` row by row."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "d_s", "d_y"])
            w.writerow([self.T, self.pair.d_s, self.pair.d_y])
            for row in self.K_T:
                w.writerow([repr(float(v)) for v in row])


@dataclass
class FiniteConfig:
    tol: float = 1e-6
    max_iter: int = 5000
    raise_on_cap: bool = True


# --------------------------------------------------------------------------
# structure helpers


def causal_mask(pair: BlockToeplitzPair) -> np.ndarray:
    """Boolean mask of the block-lower part including diagonal blocks."""
    rows = np.repeat(np.arange(pair.T), pair.d_s)
    cols = np.repeat(np.arange(pair.T), pair.d_y)
    return rows[:, None] >= cols[None, :]


def noncausal_filter_T(pair: BlockToeplitzPair) -> np.ndarray:
    """``K_o = L_T H_T^T (I + H_T H_T^T)^{-1}``."""
    H, L = pair.H_T, pair.L_T
    R = np.eye(H.shape[0]) + H @ H.T
    return sla.solve(R, H @ L.T, assume_a="pos").T


def noncausal_error_gram(pair: BlockToeplitzPair) -> np.ndarray:
    """``L_T (I + H_T^T H_T)^{-1} L_T^T``."""
    H, L = pair.H_T, pair.L_T
    R = np.eye(H.shape[1]) + H.T @ H
    out = L @ sla.solve(R, L.T, assume_a="pos")
    return 0.5 * (out + out.T)


def _chol_lower(M: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPD(f"{what} is not positive definite") from exc


def _upper_causal_factor(M: np.ndarray) -> np.ndarray:
    """Lower-triangular ``U`` with ``M = U^T U`` via the exchange-permuted Cholesky factor."""
    Mf = M[::-1, ::-1]
    C = _chol_lower(0.5 * (Mf + Mf.T), "M")
    return C.T[::-1, ::-1]


class _Projector:
    """Caches the pieces of the causal projection that do not depend on ``M``."""

    def __init__(self, pair: BlockToeplitzPair):
        self.pair = pair
        self.K_o = noncausal_filter_T(pair)
        self.mask = causal_mask(pair)
        R = np.eye(pair.H_T.shape[0]) + pair.H_T @ pair.H_T.T
        self.Delta = _chol_lower(R, "I + H_T H_T^T")
        self.KoDelta = self.K_o @ self.Delta

    def __call__(self, M: np.ndarray) -> np.ndarray:
        U = _upper_causal_factor(M)
        inner = np.where(self.mask, U @ self.KoDelta, 0.0)
        K = sla.solve_triangular(U, inner, lower=True)
        K = sla.solve_triangular(self.Delta, K.T, lower=True, trans="T").T
        # triangular solves keep the structure; zero round-off above the diagonal blocks
        return np.where(self.mask, K, 0.0)


def causal_project(M: np.ndarray, pair: BlockToeplitzPair):
    """Causal ``K`` minimizing ``tr(T_K T_K^T M)`` and the attained value."""
    M = np.asarray(M, dtype=float)
    n = pair.T * pair.d_s
    if M.shape != (n, n):
        raise ModelError(f"M must be {n}x{n}")
    K = _Projector(pair)(M)
    G = ErrorOperator.from_filter(K, pair).gram
    return K, float(np.sum(G * M))


# --------------------------------------------------------------------------
# dual pieces


def bisection_gamma_matrix(G: np.ndarray, rho: float, tol: float = 1e-14):
    """Multiplier ``gamma`` and maximizer ``(I - G/gamma)^{-2}`` of the linearized subproblem."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    w = np.clip(w, 0.0, None)
    gamma = duality.solve_gamma(w[None, :], rho, rtol=tol)
    if math.isinf(gamma):
        return gamma, np.eye(G.shape[0])
    Mt = (V * (1.0 - w / gamma) ** -2) @ V.T
    return gamma, 0.5 * (Mt + Mt.T)


def _as_operator(T_K) -> ErrorOperator:
    return T_K if isinstance(T_K, ErrorOperator) else ErrorOperator(np.atleast_2d(np.asarray(T_K, dtype=float)))


def worst_case_mse_finite(T_K, rho_T: float):
    """Worst-case summed squared error over the ball and the attaining multiplier."""
    if rho_T < 0:
        raise ModelError("rho_T must be nonnegative")
    w = np.linalg.eigvalsh(_as_operator(T_K).gram)
    return duality.worst_case_value(w[None, :], rho_T)


def worst_case_transform(T_K, gamma_star: float) -> np.ndarray:
    """``D = (I - T_K^T T_K / gamma)^{-1}``; worst-case disturbances are ``D xi_nominal``."""
    op = _as_operator(T_K)
    n = op.T_K.shape[1]
    if math.isinf(gamma_star):
        return np.eye(n)
    Q = op.T_K.T @ op.T_K
    Q = 0.5 * (Q + Q.T)
    lam = np.linalg.eigvalsh(Q)[-1] if n else 0.0
    if gamma_star <= lam:
        raise GammaTooSmall(f"gamma={gamma_star} does not exceed largest eigenvalue {lam}")
    D = np.linalg.inv(np.eye(n) - Q / gamma_star)
    return 0.5 * (D + D.T)


def sdp_certificate(K_T: np.ndarray, gamma: float, model_or_pair, rho_T: float):
    """Smallest eigenvalue of the 3x3 block LMI and its objective at ``(K_T, gamma)``."""
    pair = model_or_pair if isinstance(model_or_pair, BlockToeplitzPair) else build_block_toeplitz(model_or_pair, _horizon(K_T, model_or_pair))
    n = pair.T * pair.d_s
    m = pair.T * pair.d_y
    E = K_T - noncausal_filter_T(pair)
    Too = noncausal_error_gram(pair)
    G = ErrorOperator.from_filter(K_T, pair).gram
    I = np.eye(n)
    X = gamma**2 * np.linalg.inv(gamma * I - G)
    X = 0.5 * (X + X.T)
    Rinv = np.linalg.inv(np.eye(m) + pair.H_T @ pair.H_T.T)
    Z = np.zeros((n, m))
    big = np.block([
        [X, gamma * I, Z],
        [gamma * I, gamma * I - Too, E],
        [Z.T, E.T, 0.5 * (Rinv + Rinv.T)],
    ])
    min_eig = float(np.linalg.eigvalsh(0.5 * (big + big.T))[0])
    objective = float(gamma * (rho_T**2 - n) + np.trace(X))
    return min_eig, objective


def _horizon(K_T: np.ndarray, model: StateSpaceModel) -> int:
    T, rem = divmod(K_T.shape[0], model.d_s)
    if rem:
        raise ModelError("K_T row count is not a multiple of d_s")
    return T


# --------------------------------------------------------------------------
# solver


def fw_solve_finite(model: StateSpaceModel, T: int, rho_T: float, config: FiniteConfig | None = None,
                    pair: BlockToeplitzPair | None = None) -> FiniteSynthesisResult:
    """Frank-Wolfe on the dual weight ``M`` starting from ``M = I``."""
    config = config or FiniteConfig()
    if rho_T <= 0:
        raise ModelError("rho_T must be positive")
    pair = build_block_toeplitz(model, T) if pair is None else pair
    project = _Projector(pair)
    n = pair.T * pair.d_s
    M = np.eye(n)
    gaps = []
    converged = False
    k = 0
    for k in range(config.max_iter):
        K = project(M)
        G = ErrorOperator.from_filter(K, pair).gram
        _, Mt = bisection_gamma_matrix(G, rho_T)
        gaps.append(float(np.sum(G * (Mt - M))))
        eta = 2.0 / (k + 2.0)
        M_new = (1.0 - eta) * M + eta * Mt
        change = np.linalg.norm(M_new - M) / np.linalg.norm(M)
        M = M_new
        if change <= config.tol:
            converged = True
            break
    if not converged and config.raise_on_cap:
        raise IterationCap(f"Frank-Wolfe did not reach tol={config.tol} in {config.max_iter} iterations")

    K = project(M)
    op = ErrorOperator.from_filter(K, pair)
    value, gamma = worst_case_mse_finite(op, rho_T)
    res = FiniteSynthesisResult(T=pair.T, rho_T=rho_T, K_T=K, gamma_star=gamma, M_star=M, value=value,
                                iterations=k + 1, gap_history=gaps, pair=pair)
    res.residuals = finite_residuals(res)
    return res


def finite_residuals(result: FiniteSynthesisResult) -> dict:
    """KKT and active-radius residuals of a solver output."""
    G = result.error_operator.gram
    w = np.clip(np.linalg.eigvalsh(G), 0, None)
    gamma, rho = result.gamma_star, result.rho_T
    if math.isinf(gamma):
        target = np.eye(G.shape[0])
        radius = rho**2
    else:
        target = np.linalg.matrix_power(np.linalg.inv(np.eye(G.shape[0]) - G / gamma), 2)
        radius = abs(duality.radius_trace(w[None, :], gamma) - rho**2)
    kkt = np.linalg.norm(result.M_star - target) / np.linalg.norm(result.M_star)
    return {"kkt": float(kkt), "radius": float(radius / rho**2)}


def kalman_filter_T(pair: BlockToeplitzPair) -> np.ndarray:
    """Causal H2 filter over the horizon (projection with ``M = I``)."""
    return _Projector(pair)(np.eye(pair.T * pair.d_s))
