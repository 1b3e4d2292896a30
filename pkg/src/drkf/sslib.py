"""State-space core: model container, DARE, canonical factors and transfer functions.

Every frequency-domain routine here accepts ``z`` as a scalar or an array of
unit-circle points and returns arrays with the node axis first, i.e. shape
``(*z.shape, rows, cols)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelError, NonConvergence, SingularResolvent

RANK_RTOL = 1e-9
MAX_TOEPLITZ_DIM = 20000


def _as_matrix(name: str, value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a bare vector is read as a row (output maps) -- callers needing a
        # column must pass [[..], [..]]
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ModelError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _rank(mat: np.ndarray) -> int:
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


@dataclass(frozen=True)
class StateSpaceModel:
    """Plant ``x+ = A x + B w``, ``y = C_y x + v``, ``s = C_s x``."""

    A: np.ndarray
    B: np.ndarray
    C_y: np.ndarray
    C_s: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C_y", "C_s"):
            object.__setattr__(self, name, _as_matrix(name, getattr(self, name)))
        A, B, C_y, C_s = self.A, self.B, self.C_y, self.C_s
        n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ModelError(f"B has {B.shape[0]} rows, expected {n}")
        if C_y.shape[1] != n:
            raise ModelError(f"C_y has {C_y.shape[1]} columns, expected {n}")
        if C_s.shape[1] != n:
            raise ModelError(f"C_s has {C_s.shape[1]} columns, expected {n}")

    @property
    def d_x(self) -> int:
        return self.A.shape[0]

    @property
    def d_w(self) -> int:
        return self.B.shape[1]

    @property
    def d_y(self) -> int:
        return self.C_y.shape[0]

    @property
    def d_s(self) -> int:
        return self.C_s.shape[0]

    def check_assumptions(self) -> None:
        """Reject models where ``(A, C_y)`` is not detectable or ``(A, B)`` not controllable.

        Detectability uses the PBH rank test on the non-decaying modes of ``A``;
        controllability uses the rank of the Kalman matrix. Both ranks are taken
        with relative tolerance ``RANK_RTOL``.
        """
        n = self.d_x
        blocks = [self.B]
        for _ in range(n - 1):
            blocks.append(self.A @ blocks[-1])
        if _rank(np.hstack(blocks)) < n:
            raise ModelError("(A, B) is not controllable")
        for lam in np.linalg.eigvals(self.A):
            if abs(lam) < 1.0 - 1e-12:
                continue
            pbh = np.vstack([lam * np.eye(n) - self.A, self.C_y.astype(complex)])
            if _rank(pbh) < n:
                raise ModelError(f"(A, C_y) is not detectable (mode {lam:.6g})")

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("A", "B", "C_y", "C_s")}

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpaceModel":
        missing = {"A", "B", "C_y", "C_s"} - set(data)
        if missing:
            raise ModelError(f"model document lacks {sorted(missing)}")
        return cls(data["A"], data["B"], data["C_y"], data["C_s"])

    @classmethod
    def from_json(cls, path) -> "StateSpaceModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def tracking_model(dt: float = 1.0) -> StateSpaceModel:
    """Position/velocity tracking plant with acceleration disturbance; the position is estimated."""
    return StateSpaceModel(
        A=[[1.0, dt], [0.0, 1.0]],
        B=[[0.0], [dt]],
        C_y=[[1.0, 0.0]],
        C_s=[[1.0, 0.0]],
    )


def scalar_model(a=1.0, b=1.0, c_y=1.0, c_s=1.0) -> StateSpaceModel:
    return StateSpaceModel([[a]], [[b]], [[c_y]], [[c_s]])


# --------------------------------------------------------------------------
# Riccati data


def _sym_sqrt(mat: np.ndarray, inverse: bool = False) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    w = w ** (-0.5 if inverse else 0.5)
    return (v * w) @ v.T


@dataclass(frozen=True)
class RiccatiData:
    P: np.ndarray
    R_e: np.ndarray
    F_P: np.ndarray
    A_P: np.ndarray
    A_bar: np.ndarray
    B_bar: np.ndarray
    C_bar: np.ndarray
    R_e_sqrt: np.ndarray = field(repr=False)
    R_e_isqrt: np.ndarray = field(repr=False)
    residual: float = 0.0
    method: str = "fixed-point"

    @property
    def R_e_inv(self) -> np.ndarray:
        return self.R_e_isqrt @ self.R_e_isqrt


def _riccati_map(model: StateSpaceModel, P: np.ndarray) -> np.ndarray:
    A, C = model.A, model.C_y
    R = np.eye(model.d_y) + C @ P @ C.T
    APC = A @ P @ C.T
    return A @ P @ A.T + model.B @ model.B.T - APC @ np.linalg.solve(R, APC.T)


def _relative_residual(model: StateSpaceModel, P: np.ndarray) -> float:
    scale = max(np.linalg.norm(P), np.linalg.norm(model.B @ model.B.T), 1e-300)
    return float(np.linalg.norm(P - _riccati_map(model, P)) / scale)


def _doubling(model: StateSpaceModel, tol: float, max_iter: int = 100) -> np.ndarray:
    # structured doubling on the dual (control-form) equation
    n = model.d_x
    Ak = model.A.T.copy()
    Gk = model.C_y.T @ model.C_y
    Hk = model.B @ model.B.T
    eye = np.eye(n)
    for _ in range(max_iter):
        W = eye + Gk @ Hk
        WA = np.linalg.solve(W, Ak)
        WG = np.linalg.solve(W, Gk)
        H_next = Hk + Ak.T @ Hk @ WA
        Gk = Gk + Ak @ WG @ Ak.T
        Ak = Ak @ WA
        H_next = 0.5 * (H_next + H_next.T)
        done = np.linalg.norm(H_next - Hk) <= tol * max(np.linalg.norm(H_next), 1e-300)
        Hk = H_next
        if done:
            break
    return Hk


def solve_dare(
    model: StateSpaceModel,
    tol: float = 1e-10,
    max_iter: int = 5000,
    damping: float = 1.0,
    check: bool = True,
) -> RiccatiData:
    """Stabilizing solution of ``P = A P A' + B B' - F_P R_e F_P'`` and derived factors.

    Runs the Riccati recursion from ``P = 0`` and falls back to structured
    doubling when the recursion stalls. Raises :class:`NonConvergence` if the
    relative Frobenius residual stays above ``tol``.
    """
    if check:
        model.check_assumptions()
    P = np.zeros((model.d_x, model.d_x))
    method = "fixed-point"
    for _ in range(max_iter):
        P_next = _riccati_map(model, P)
        P_next = (1.0 - damping) * P + damping * 0.5 * (P_next + P_next.T)
        step = np.linalg.norm(P_next - P)
        P = P_next
        if step <= 1e-3 * tol * max(np.linalg.norm(P), 1e-300):
            break
    if not np.all(np.isfinite(P)) or _relative_residual(model, P) > tol:
        method = "doubling"
        P = _doubling(model, 1e-3 * tol)
    res = _relative_residual(model, P) if np.all(np.isfinite(P)) else np.inf
    if res > tol:
        raise NonConvergence(f"DARE residual {res:.3e} exceeds tol {tol:.1e}")
    return riccati_from_P(model, P, residual=res, method=method)


def riccati_from_P(model: StateSpaceModel, P: np.ndarray, residual=0.0, method="given") -> RiccatiData:
    C_y, C_s, A = model.C_y, model.C_s, model.A
    R_e = np.eye(model.d_y) + C_y @ P @ C_y.T
    R_e = 0.5 * (R_e + R_e.T)
    F_P = np.linalg.solve(R_e, C_y @ P @ A.T).T
    A_P = A - F_P @ C_y
    if np.max(np.abs(np.linalg.eigvals(A_P))) >= 1.0:
        raise NonConvergence("closed-loop matrix A_P is not Schur stable")
    R_isqrt = _sym_sqrt(R_e, inverse=True)
    return RiccatiData(
        P=P,
        R_e=R_e,
        F_P=F_P,
        A_P=A_P,
        A_bar=A_P.T.copy(),
        B_bar=C_y.T @ R_isqrt,
        C_bar=C_s @ P @ A_P.T,
        R_e_sqrt=_sym_sqrt(R_e),
        R_e_isqrt=R_isqrt,
        residual=residual,
        method=method,
    )


# --------------------------------------------------------------------------
# frequency-domain evaluation


def resolvent(A: np.ndarray, z, rhs: np.ndarray) -> np.ndarray:
    """``(zI - A)^{-1} rhs`` by one LU solve per node."""
    z = np.asarray(z, dtype=complex)
    n = A.shape[0]
    if n == 0:
        return np.zeros(z.shape + (0, rhs.shape[1]), dtype=complex)
    mats = z[..., None, None] * np.eye(n) - A
    cond = np.linalg.cond(mats)
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e13):
        raise SingularResolvent("zI - A is singular to working precision on the grid")
    return np.linalg.solve(mats, np.broadcast_to(rhs, z.shape + rhs.shape))


def eval_transfer(model: StateSpaceModel, z):
    """``H(z) = C_y (zI - A)^{-1} B`` and ``L(z) = C_s (zI - A)^{-1} B``."""
    X = resolvent(model.A, z, model.B)
    return model.C_y @ X, model.C_s @ X


def eval_delta(model: StateSpaceModel, ric: RiccatiData, z):
    """Causal factor ``Delta`` of ``I + H H^*`` and its inverse."""
    eye = np.eye(model.d_y)
    delta = (eye + model.C_y @ resolvent(model.A, z, ric.F_P)) @ ric.R_e_sqrt
    return delta, eval_delta_inv(model, ric, z)


def eval_delta_inv(model: StateSpaceModel, ric: RiccatiData, z):
    """``Delta^{-1}``, which only involves the stable ``A_P``."""
    eye = np.eye(model.d_y)
    return ric.R_e_isqrt @ (eye - model.C_y @ resolvent(ric.A_P, z, ric.F_P))


def eval_h2_and_S(model: StateSpaceModel, ric: RiccatiData, z):
    """Kalman filter ``K_H2(z)`` and strictly anticausal remainder ``S(z)``."""
    z = np.asarray(z, dtype=complex)
    C_s, C_y, P = model.C_s, model.C_y, ric.P
    gain = C_s @ P @ C_y.T @ ric.R_e_inv
    proj = C_s @ (np.eye(model.d_x) - P @ C_y.T @ ric.R_e_inv @ C_y)
    K_h2 = gain + proj @ resolvent(ric.A_P, z, ric.F_P)
    S = ric.C_bar @ resolvent(ric.A_bar, 1.0 / z, ric.B_bar)
    return K_h2, S


def _ct(X: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(X, -1, -2))


def eval_kalman_error_transfer(model: StateSpaceModel, ric: RiccatiData, z):
    """Error map ``[K_H2 H - L, K_H2]`` of the Kalman filter, evaluated through ``A_P`` only.

    Finite even where ``A`` has unit-circle eigenvalues.
    """
    gain = model.C_s @ ric.P @ model.C_y.T @ ric.R_e_inv
    proj = model.C_s - gain @ model.C_y
    T_w = -proj @ resolvent(ric.A_P, z, model.B)
    T_v = gain + proj @ resolvent(ric.A_P, z, ric.F_P)
    return np.concatenate([T_w, T_v], axis=-1)


def eval_noncausal_error_psd(model: StateSpaceModel, z, ric: RiccatiData | None = None) -> np.ndarray:
    """Error spectrum ``L (I + H^* H)^{-1} L^*`` of the non-causal estimator.

    Evaluated as ``T_H2 T_H2^* - S S^*`` so that poles of ``H`` and ``L`` on the
    unit circle do not enter.
    """
    if ric is None:
        ric = solve_dare(model, check=False)
    T = eval_kalman_error_transfer(model, ric, z)
    _, S = eval_h2_and_S(model, ric, z)
    out = T @ _ct(T) - S @ _ct(S)
    return 0.5 * (out + _ct(out))


def noncausal_error_psd_direct(model: StateSpaceModel, z) -> np.ndarray:
    """Same quantity straight from ``H`` and ``L``; fails on poles of ``H``."""
    H, L = eval_transfer(model, z)
    inner = np.eye(model.d_w) + _ct(H) @ H
    out = L @ np.linalg.solve(inner, _ct(L))
    return 0.5 * (out + _ct(out))


def noncausal_filter(model: StateSpaceModel, z) -> np.ndarray:
    """``K_o(z) = L H^* (I + H H^*)^{-1}``."""
    H, L = eval_transfer(model, z)
    Hh = np.conj(np.swapaxes(H, -1, -2))
    inner = np.eye(model.d_y) + H @ Hh
    return np.swapaxes(np.linalg.solve(np.swapaxes(inner, -1, -2), np.swapaxes(L @ Hh, -1, -2)), -1, -2)


# --------------------------------------------------------------------------
# finite horizon


@dataclass(frozen=True)
class BlockToeplitzPair:
    H_T: np.ndarray
    L_T: np.ndarray
    T: int
    d_y: int
    d_s: int
    d_x: int
    d_w: int

    @property
    def n_xi(self) -> int:
        """Dimension of the stacked disturbance ``[x0; w_0..w_{T-2}; v_0..v_{T-1}]``."""
        return self.H_T.shape[1] + self.T * self.d_y


def build_block_toeplitz(model: StateSpaceModel, T: int, max_dim: int = MAX_TOEPLITZ_DIM) -> BlockToeplitzPair:
    """Stacked maps ``y = H_T w + v`` and ``s = L_T w`` with ``w = [x0; w_0; ...; w_{T-2}]``."""
    if T < 1:
        raise ModelError("horizon T must be >= 1")
    dims = (model.d_x, model.d_w, model.d_y, model.d_s)
    if T * max(dims) > max_dim:
        raise ModelError(f"T*max(d)={T * max(dims)} exceeds cap {max_dim}")
    dx, dw, dy, ds = dims
    ncol = dx + (T - 1) * dw
    H = np.zeros((T * dy, ncol))
    L = np.zeros((T * ds, ncol))
    powers = [np.eye(dx)]
    for _ in range(T - 1):
        powers.append(model.A @ powers[-1])
    for i in range(T):
        H[i * dy:(i + 1) * dy, :dx] = model.C_y @ powers[i]
        L[i * ds:(i + 1) * ds, :dx] = model.C_s @ powers[i]
        for j in range(1, i + 1):
            AB = powers[i - j] @ model.B
            c0 = dx + (j - 1) * dw
            H[i * dy:(i + 1) * dy, c0:c0 + dw] = model.C_y @ AB
            L[i * ds:(i + 1) * ds, c0:c0 + dw] = model.C_s @ AB
    return BlockToeplitzPair(H, L, T, dy, ds, dx, dw)


@dataclass(frozen=True)
class FrequencyGrid:
    """``N`` uniform nodes ``exp(j 2 pi n / N)`` on the unit circle."""

    N: int
    require_pow2: bool = True

    def __post_init__(self):
        N = self.N
        if N < 2 or N % 2:
            raise ModelError(f"grid size must be even and >= 2, got {N}")
        if self.require_pow2 and N & (N - 1):
            raise ModelError(f"grid size must be a power of two, got {N}")

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.N) / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.exp(1j * self.omega)
