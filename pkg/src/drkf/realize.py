"""State-space realization of the filter built from a rational spectral factor."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityDetected, ModelError, SingularSystem
from .ratapprox import RationalFactor
from .sslib import RiccatiData, StateSpaceModel, resolvent

STEIN_RTOL = 1e-10


@dataclass(frozen=True)
class SteinSolution:
    U_ly: np.ndarray
    residual: float


@dataclass(frozen=True)
class StateSpaceFilter:
    """``zeta+ = F zeta + G y``, ``s_hat = H zeta + L y``."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    L: np.ndarray
    # pieces used to express the filter relative to the Kalman filter
    corr_A: np.ndarray | None = None
    corr_B: np.ndarray | None = None
    corr_C: np.ndarray | None = None

    @property
    def n_state(self) -> int:
        return self.F.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.F)))) if self.n_state else 0.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("F", "G", "H", "L")}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpaceFilter":
        F = np.asarray(d["F"], dtype=float).reshape(len(d["F"]), -1) if d["F"] else np.zeros((0, 0))
        G = np.asarray(d["G"], dtype=float).reshape(F.shape[0], -1) if d["F"] else np.zeros((0, np.asarray(d["L"]).shape[1]))
        H = np.asarray(d["H"], dtype=float).reshape(-1, F.shape[0])
        L = np.atleast_2d(np.asarray(d["L"], dtype=float))
        return cls(F, G, H, L)


def stein_solve(A_u: np.ndarray, B_u: np.ndarray, ric: RiccatiData, C_s: np.ndarray | None = None) -> SteinSolution:
    """Solve ``U = A_u U A_P^T + B_u C_bar`` with ``C_bar = C_s P A_P^T``."""
    m = A_u.shape[0]
    rhs = B_u @ ric.C_bar if C_s is None else B_u @ C_s @ ric.P @ ric.A_P.T
    dx = ric.A_P.shape[0]
    if m == 0:
        return SteinSolution(np.zeros((0, dx)), 0.0)
    # row-major vec: vec(A U B) = (A kron B^T) vec(U)
    sys = np.eye(m * dx) - np.kron(A_u, ric.A_P)
    try:
        U = np.linalg.solve(sys, rhs.ravel()).reshape(m, dx)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("Stein operator is singular") from exc
    resid = np.linalg.norm(A_u @ U @ ric.A_P.T + rhs - U) / max(np.linalg.norm(U), 1.0)
    if not np.isfinite(resid) or resid > STEIN_RTOL:
        raise SingularSystem(f"Stein residual {resid:.2e} too large")
    return SteinSolution(U, float(resid))


def assemble_filter(factor: RationalFactor, model: StateSpaceModel, ric: RiccatiData) -> StateSpaceFilter:
    """Filter ``K_H2 + X Delta^{-1}`` for ``U = factor`` as one stable state-space system."""
    C_y, C_s, P = model.C_y, model.C_s, ric.P
    Rinv = ric.R_e_inv
    U_ly = stein_solve(factor.A, factor.B, ric).U_ly
    A_t, B_t, C_t = factor.A, factor.B, factor.C
    At_P = A_t - B_t @ C_t
    m, dx = A_t.shape[0], model.d_x
    gain = C_s @ P @ C_y.T @ Rinv
    F = np.block([[At_P, U_ly @ C_y.T @ Rinv @ C_y], [np.zeros((dx, m)), ric.A_P]])
    G = np.vstack([U_ly @ C_y.T @ Rinv, -ric.F_P])
    H = np.hstack([C_t @ At_P, -C_s + gain @ C_y + C_t @ U_ly @ C_y.T @ Rinv @ C_y])
    L = C_t @ U_ly @ C_y.T @ Rinv + gain
    f = StateSpaceFilter(F, G, H, L, corr_A=At_P, corr_B=U_ly @ ric.B_bar, corr_C=C_t)
    if f.spectral_radius >= 1.0:
        raise InstabilityDetected(f"filter spectral radius {f.spectral_radius:.6f} >= 1")
    return f


def kalman_state_space(model: StateSpaceModel, ric: RiccatiData) -> StateSpaceFilter:
    """Steady-state Kalman filter; same as ``assemble_filter`` with a constant factor."""
    return assemble_filter(RationalFactor(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), 1.0), model, ric)


def correction_response(f: StateSpaceFilter, z) -> np.ndarray:
    """``X(z) = C (I + A (zI - A)^{-1}) B`` with ``K = K_H2 + X Delta^{-1}``."""
    z = np.asarray(z, dtype=complex)
    if f.corr_A is None:
        raise ModelError("filter carries no correction realization")
    if f.corr_A.shape[0] == 0:
        return np.zeros(z.shape + (f.L.shape[0], f.L.shape[1]), dtype=complex)
    x = f.corr_B + f.corr_A @ resolvent(f.corr_A, z, f.corr_B)
    return f.corr_C @ x


def filter_freq_response(f: StateSpaceFilter, z) -> np.ndarray:
    """``H (zI - F)^{-1} G + L``."""
    z = np.asarray(z, dtype=complex)
    if f.n_state == 0:
        return np.broadcast_to(f.L, z.shape + f.L.shape).astype(complex)
    return f.H @ resolvent(f.F, z, f.G) + f.L


class FilterRunner:
    """Streaming evaluation, one measurement at a time."""

    def __init__(self, f: StateSpaceFilter, batch: int | None = None):
        self.f = f
        shape = (f.n_state,) if batch is None else (batch, f.n_state)
        self.zeta = np.zeros(shape)

    def step(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = self.zeta @ self.f.H.T + y @ self.f.L.T
        self.zeta = self.zeta @ self.f.F.T + y @ self.f.G.T
        return out


def filter_run(f: StateSpaceFilter, y: np.ndarray) -> np.ndarray:
    """Estimates for ``y`` of shape ``(T, d_y)`` or ``(trials, T, d_y)``, starting from zero state."""
    y = np.asarray(y, dtype=float)
    batched = y.ndim == 3
    if y.ndim == 1:
        y = y[:, None]
    runner = FilterRunner(f, y.shape[0] if batched else None)
    steps = y.shape[1] if batched else y.shape[0]
    out = np.empty(y.shape[:-1] + (f.L.shape[0],))
    for t in range(steps):
        if batched:
            out[:, t] = runner.step(y[:, t])
        else:
            out[t] = runner.step(y[t])
    return out
