"""Infinite-horizon distributionally robust filter on a uniform frequency grid.

The adversary's spectral density ``M(z)`` is optimized by Frank-Wolfe. Each
iteration factorizes ``M = U^* U`` through the cepstrum, forms the gain ``Gamma``
of the strictly anticausal part of ``U S``, and solves the linearized
subproblem in closed form.

Filters are handled through their correction ``X = (K - K_H2) Delta`` relative
to the Kalman filter. The error spectrum then reads

    T_K T_K^* = (X - S)(X - S)^* + T_o T_o^*

which never touches poles of the plant, so models with marginally stable
modes (integrators) are fine on the grid.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import duality
from .errors import IterationCap, ModelError, NonPositiveSample
from .sslib import (
    FrequencyGrid,
    RiccatiData,
    StateSpaceModel,
    _ct,
    eval_delta_inv,
    eval_h2_and_S,
    eval_noncausal_error_psd,
    resolvent,
    solve_dare,
)

IMAG_TOL = 1e-9


@dataclass(frozen=True)
class SpectralDensity:
    grid: FrequencyGrid
    samples: np.ndarray  # (N, d, d) Hermitian

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 1:
            s = s[:, None, None]
        if s.shape[0] != self.grid.N or s.shape[1] != s.shape[2]:
            raise ModelError(f"samples shape {s.shape} does not match grid N={self.grid.N}")
        object.__setattr__(self, "samples", np.asarray(s, dtype=complex))

    @property
    def scalar(self) -> np.ndarray:
        return self.samples[:, 0, 0].real

    @classmethod
    def identity(cls, grid: FrequencyGrid, d: int = 1) -> "SpectralDensity":
        return cls(grid, np.broadcast_to(np.eye(d, dtype=complex), (grid.N, d, d)).copy())


@dataclass(frozen=True)
class SpectralFactor:
    grid: FrequencyGrid
    samples: np.ndarray  # (N, 1, 1)
    tail: float

    @property
    def coefficients(self) -> np.ndarray:
        """Impulse response ``u_k``; causal part first."""
        return np.fft.ifft(self.samples[:, 0, 0])


@dataclass
class InfiniteSynthesisResult:
    rho: float
    grid: FrequencyGrid
    M_star: SpectralDensity
    U_star: SpectralFactor
    Gamma: np.ndarray
    gamma_star: float
    K_samples: np.ndarray
    correction: np.ndarray
    error_psd: np.ndarray
    value: float
    fixed_point_residual: float = math.nan
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    gap_history: list = field(default_factory=list)
    change_history: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "rho": self.rho,
            "gamma_star": self.gamma_star,
            "value": self.value,
            "Gamma": self.Gamma.tolist(),
            "residuals": dict(self.residuals, fixed_point=self.fixed_point_residual),
            "N": self.grid.N,
            "iterations": self.iterations,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)

    def write_csv(self, path) -> None:
        """One row per node: omega, M, U and the filter response."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            ds, dy = self.K_samples.shape[1:]
            kcols = [f"K{part}_{i}{j}" for i in range(ds) for j in range(dy) for part in ("re", "im")]
            w.writerow(["omega", "M_re", "M_im", "U_re", "U_im", *kcols])
            for n, om in enumerate(self.grid.omega):
                m = self.M_star.samples[n, 0, 0]
                u = self.U_star.samples[n, 0, 0]
                kv = []
                for i in range(ds):
                    for j in range(dy):
                        kv += [repr(self.K_samples[n, i, j].real), repr(self.K_samples[n, i, j].imag)]
                w.writerow([repr(om), repr(m.real), repr(m.imag), repr(u.real), repr(u.imag), *kv])


# --------------------------------------------------------------------------
# building blocks


def spectral_factor_dft(M: SpectralDensity) -> SpectralFactor:
    """Minimum-phase ``U`` with ``|U|^2 = M`` from the causal part of the cepstrum."""
    if M.samples.shape[1] != 1:
        raise ModelError("cepstral factorization supports scalar densities only")
    m = M.samples[:, 0, 0].real
    if not np.all(np.isfinite(m)) or np.any(m <= 0):
        raise NonPositiveSample("spectral density must be strictly positive at every node")
    N = m.size
    lam = np.fft.ifft(np.log(m)).real
    c = np.zeros(N)
    h = N // 2
    c[0] = 0.5 * lam[0]
    c[1:h] = lam[1:h]
    c[h] = 0.5 * lam[h]
    U = np.exp(np.fft.fft(c))
    coef = np.fft.ifft(U)
    tail = float(np.max(np.abs(coef[h + 1:])) / np.linalg.norm(coef)) if N > 2 else 0.0
    return SpectralFactor(M.grid, U[:, None, None], tail)


def _anticausal_resolvent_left(ric: RiccatiData, z) -> np.ndarray:
    """``C_bar (I - z A_bar)^{-1}`` per node, shape ``(N, d_s, d_x)``."""
    # (I - z Abar)^{-1} = z^{-1} (z^{-1} I - Abar)^{-1}; transpose to reuse the column solver
    R = resolvent(ric.A_bar.T, 1.0 / z, ric.C_bar.T)
    return np.swapaxes(R, -1, -2) / z[:, None, None]


def compute_gamma_param(U: SpectralFactor, ric: RiccatiData) -> np.ndarray:
    """Trapezoid average of ``U(z) C_bar (I - z A_bar)^{-1}`` over the grid."""
    z = U.grid.nodes
    vals = U.samples @ _anticausal_resolvent_left(ric, z)
    Gamma = vals.mean(axis=0)
    scale = max(1.0, float(np.max(np.abs(Gamma))))
    if np.max(np.abs(Gamma.imag)) > IMAG_TOL * scale * 1e3:
        raise ModelError("Gamma has a non-negligible imaginary part; density lacks conjugate symmetry")
    return Gamma.real


def _anticausal_part(Gamma: np.ndarray, ric: RiccatiData, z) -> np.ndarray:
    """``{U S}_-(z) = Gamma (z^{-1} I - A_bar)^{-1} B_bar``."""
    return Gamma @ resolvent(ric.A_bar, 1.0 / z, ric.B_bar)


def filter_correction(U: SpectralFactor, Gamma: np.ndarray, ric: RiccatiData, z=None) -> np.ndarray:
    """``X = U^{-1}{U S}_+`` so that the optimal filter is ``K_H2 + X Delta^{-1}``."""
    z = U.grid.nodes if z is None else np.asarray(z)
    S = _ct_S(ric, z)
    US = U.samples @ S
    return np.linalg.solve(U.samples, US - _anticausal_part(Gamma, ric, z))


def _ct_S(ric: RiccatiData, z) -> np.ndarray:
    return ric.C_bar @ resolvent(ric.A_bar, 1.0 / z, ric.B_bar)


def error_psd_from_correction(X: np.ndarray, ric: RiccatiData, z, tko: np.ndarray) -> np.ndarray:
    """``T_K T_K^*`` for the filter ``K_H2 + X Delta^{-1}``."""
    D = X - _ct_S(ric, z)
    out = D @ _ct(D) + tko
    return 0.5 * (out + _ct(out))


def error_psd_direct(K: np.ndarray, model: StateSpaceModel, z) -> np.ndarray:
    """``T_K T_K^*`` from ``[K H - L, K]``; needs ``A`` free of grid eigenvalues."""
    X = resolvent(model.A, z, model.B)
    H, L = model.C_y @ X, model.C_s @ X
    T = np.concatenate([K @ H - L, K], axis=-1)
    out = T @ _ct(T)
    return 0.5 * (out + _ct(out))


def gradient_psd(U: SpectralFactor, Gamma, ric: RiccatiData, model: StateSpaceModel, z=None, tko=None) -> np.ndarray:
    """Gateaux gradient of the dual objective: error spectrum of the filter optimal against ``U^*U``."""
    z = U.grid.nodes if z is None else np.asarray(z)
    if tko is None:
        tko = eval_noncausal_error_psd(model, z, ric)
    # U^{-1} Gamma (I - z Abar)^{-1} Bbar differs from the anticausal part only by the unimodular z^{-1}
    V = np.linalg.solve(U.samples, _anticausal_part(np.asarray(Gamma), ric, z))
    out = V @ _ct(V) + tko
    return 0.5 * (out + _ct(out))


def _eigs(G: np.ndarray):
    w, V = np.linalg.eigh(G)
    return np.clip(w, 0.0, None), V


def bisection_gamma_freq(G: np.ndarray, rho: float, tol: float = 1e-14):
    """Multiplier and subproblem maximizer ``(I - G/gamma)^{-2}`` at every node."""
    G = np.asarray(G)
    if G.ndim == 1:
        G = G[:, None, None]
    w, V = _eigs(G)
    gamma = duality.solve_gamma(w, rho, rtol=tol)
    d = G.shape[-1]
    if math.isinf(gamma):
        return gamma, np.broadcast_to(np.eye(d, dtype=complex), G.shape).copy()
    scale = (1.0 - w / gamma) ** -2
    Mt = (V * scale[:, None, :]) @ _ct(V)
    return gamma, 0.5 * (Mt + _ct(Mt))


def worst_case_mse_freq(psd: np.ndarray, rho: float):
    """Per-step worst-case MSE over the Wasserstein ball and its multiplier."""
    psd = np.asarray(psd)
    if psd.ndim == 1:
        psd = psd[:, None, None]
    w, _ = _eigs(psd)
    return duality.worst_case_value(w, rho)


# --------------------------------------------------------------------------
# solver


@dataclass
class InfiniteConfig:
    tol: float = 1e-6
    max_iter: int = 5000
    record_gap: bool = True
    raise_on_cap: bool = True


def _kalman_context(model: StateSpaceModel, grid: FrequencyGrid, ric=None):
    if model.d_s != 1:
        raise ModelError("infinite-horizon synthesis supports scalar estimation targets (d_s = 1)")
    ric = solve_dare(model) if ric is None else ric
    z = grid.nodes
    return ric, z, eval_noncausal_error_psd(model, z, ric)


def solve_infinite(model: StateSpaceModel, rho: float, N: int = 1024, config: InfiniteConfig | None = None,
                   ric: RiccatiData | None = None) -> InfiniteSynthesisResult:
    """Frank-Wolfe over sampled spectral densities starting from ``M = I``."""
    config = config or InfiniteConfig()
    if rho <= 0:
        raise ModelError("rho must be positive")
    if N < 64:
        raise ModelError("grid size must be at least 64")
    grid = FrequencyGrid(N)
    ric, z, tko = _kalman_context(model, grid, ric)

    M = np.ones(N)
    gaps, changes = [], []
    converged = False
    k = 0
    for k in range(config.max_iter):
        U = spectral_factor_dft(SpectralDensity(grid, M))
        Gamma = compute_gamma_param(U, ric)
        G = gradient_psd(U, Gamma, ric, model, z, tko)
        _, Mt = bisection_gamma_freq(G, rho)
        Mt = Mt[:, 0, 0].real
        if config.record_gap:
            gaps.append(float(np.mean(G[:, 0, 0].real * (Mt - M))))
        eta = 2.0 / (k + 2.0)
        M_new = (1.0 - eta) * M + eta * Mt
        if np.min(M_new) < 1.0 - 1e-9:
            raise NonPositiveSample("iterate left the region M >= I")
        change = float(np.max(np.abs(M_new - M)) / np.max(np.abs(M)))
        changes.append(change)
        M = M_new
        if change <= config.tol:
            converged = True
            break
    if not converged and config.raise_on_cap:
        raise IterationCap(f"Frank-Wolfe did not reach tol={config.tol} in {config.max_iter} iterations")

    M_sd = SpectralDensity(grid, M)
    U = spectral_factor_dft(M_sd)
    Gamma = compute_gamma_param(U, ric)
    X = filter_correction(U, Gamma, ric, z)
    psd = error_psd_from_correction(X, ric, z, tko)
    value, gamma_star = worst_case_mse_freq(psd, rho)
    K_h2, _ = eval_h2_and_S(model, ric, z)
    delta_inv = eval_delta_inv(model, ric, z)
    K = K_h2 + X @ delta_inv
    res = InfiniteSynthesisResult(
        rho=rho, grid=grid, M_star=M_sd, U_star=U, Gamma=Gamma, gamma_star=gamma_star,
        K_samples=K, correction=X, error_psd=psd, value=value,
        iterations=k + 1, gap_history=gaps, change_history=changes,
    )
    res.residuals = _residuals(res, model, ric, tko)
    res.fixed_point_residual = max(res.residuals.values())
    return res


def _residuals(result: InfiniteSynthesisResult, model, ric, tko) -> dict:
    z = result.grid.nodes
    U, Gamma, rho = result.U_star, result.Gamma, result.rho
    M = result.M_star.samples
    G = gradient_psd(U, Gamma, ric, model, z, tko)
    gamma = result.gamma_star
    d = M.shape[-1]
    if math.isinf(gamma):
        target = np.broadcast_to(np.eye(d), M.shape)
    else:
        inv = np.linalg.inv(gamma * np.eye(d) - G)
        target = gamma**2 * inv @ inv
    m_res = float(np.max(np.abs(M - target)) / np.max(np.abs(M)))
    g_new = compute_gamma_param(U, ric)
    g_res = float(np.max(np.abs(Gamma - g_new)) / max(np.max(np.abs(Gamma)), 1e-300))
    w, _ = _eigs(G)
    r_res = abs(duality.radius_trace(w, gamma) - rho**2) / rho**2
    return {"kkt": m_res, "gamma_param": g_res, "radius": r_res}


def fixed_point_residual(result: InfiniteSynthesisResult, model: StateSpaceModel, ric: RiccatiData | None = None) -> float:
    """Largest normalized violation of the saddle-point equations at ``result``."""
    ric = solve_dare(model) if ric is None else ric
    tko = eval_noncausal_error_psd(model, result.grid.nodes, ric)
    return max(_residuals(result, model, ric, tko).values())


def worst_case_psd(result: InfiniteSynthesisResult) -> SpectralDensity:
    """``(I - T_K T_K^* / gamma)^{-2}`` at every node."""
    psd = result.error_psd
    d = psd.shape[-1]
    if math.isinf(result.gamma_star):
        return SpectralDensity.identity(result.grid, d)
    inv = np.linalg.inv(np.eye(d) - psd / result.gamma_star)
    return SpectralDensity(result.grid, inv @ inv)


def kalman_error_psd(model: StateSpaceModel, grid: FrequencyGrid, ric=None) -> np.ndarray:
    """Error spectrum of the steady-state Kalman filter (zero correction)."""
    ric, z, tko = _kalman_context(model, grid, ric)
    X = np.zeros((grid.N, model.d_s, model.d_y), dtype=complex)
    return error_psd_from_correction(X, ric, z, tko)


def impulse_response(K_samples: np.ndarray, taps: int) -> np.ndarray:
    """First ``taps`` real coefficients ``k_0..k_{taps-1}`` of a sampled causal filter."""
    coef = np.fft.ifft(K_samples, axis=0).real
    return coef[:taps]
