"""Experiment harness: filter bank, Monte-Carlo simulation, reports and benchmarks.

Radii are given per time step. A horizon-``T`` problem uses ``rho * sqrt(T)``,
because the ball around a ``T``-step nominal grows with the horizon.
"""
from __future__ import annotations

import csv
import io
import math
import re
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import finite, freq, ratapprox, realize
from .errors import ModelError
from .sslib import FrequencyGrid, StateSpaceModel, build_block_toeplitz, eval_transfer, solve_dare

FILTER_NAMES = ("kalman", "drkf_finite", "drkf_infinite", "large_rho_hinf_proxy")
NOISE_KINDS = ("white", "ar", "worst", "zero")
HINF_PROXY_RHO = 1e3
# Frank-Wolfe needs roughly 8k steps at this radius, above the default cap
HINF_PROXY_CONFIG = dict(tol=1e-6, max_iter=20000)
_RA = re.compile(r"^ra\((\d+)\)$")


def _check_filter_name(name: str) -> None:
    if name not in FILTER_NAMES and not _RA.match(name):
        raise ModelError(f"unknown filter {name!r}; choose from {FILTER_NAMES} or ra(m)")


@dataclass
class ExperimentConfig:
    model: StateSpaceModel
    rho: float = 1.0
    T: int = 50
    N: int = 1024
    trials: int = 1000
    seed: int = 0
    noise: str = "white"
    ar_phi: float = 0.8
    filters: tuple = ("kalman", "drkf_finite", "drkf_infinite")
    tol: float = 1e-6

    def __post_init__(self):
        if self.rho < 0 or self.T < 1 or self.N < 64 or self.trials < 1 or self.seed < 0:
            raise ModelError("rho must be >= 0 and T, N, trials positive; seed nonnegative")
        if self.noise not in NOISE_KINDS:
            raise ModelError(f"noise must be one of {NOISE_KINDS}")
        if not -1.0 < self.ar_phi < 1.0:
            raise ModelError("AR parameter must lie in (-1, 1)")
        self.filters = tuple(self.filters)
        for name in self.filters:
            _check_filter_name(name)

    @property
    def rho_T(self) -> float:
        return self.rho * math.sqrt(self.T)


@dataclass
class SimResult:
    mse: dict  # name -> per-step MSE curve, shape (T,)
    time_average: dict
    stderr: dict
    worst_case: dict  # name -> finite-horizon worst-case MSE per step
    runtimes: dict
    trials: int
    energy_per_step: float = math.nan

    def to_csv(self) -> str:
        names = list(self.mse)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *names])
        T = len(next(iter(self.mse.values())))
        for t in range(T):
            w.writerow([t + 1, *(repr(float(self.mse[n][t])) for n in names)])
        return buf.getvalue()


# --------------------------------------------------------------------------
# filters


class _Convolution:
    """Causal FIR filter with taps of shape ``(n, d_s, d_y)``."""

    def __init__(self, taps: np.ndarray):
        self.taps = taps

    def __call__(self, y: np.ndarray) -> np.ndarray:
        trials, T, _ = y.shape
        out = np.zeros((trials, T, self.taps.shape[1]))
        for j in range(min(T, self.taps.shape[0])):
            out[:, j:] += y[:, : T - j] @ self.taps[j].T
        return out


class FilterBank:
    """Lazily synthesizes every filter that an experiment asks for."""

    def __init__(self, model: StateSpaceModel, rho: float, T: int, N: int = 1024, tol: float = 1e-6):
        self.model, self.rho, self.T, self.N, self.tol = model, rho, T, N, tol
        self.runtimes: dict = {}
        self._ra: dict = {}

    @cached_property
    def ric(self):
        return solve_dare(self.model)

    @cached_property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.N)

    @cached_property
    def pair(self):
        return build_block_toeplitz(self.model, self.T)

    def _timed(self, key, fn):
        t0 = time.perf_counter()
        out = fn()
        self.runtimes[key] = time.perf_counter() - t0
        return out

    @cached_property
    def finite_result(self) -> finite.FiniteSynthesisResult:
        cfg = finite.FiniteConfig(tol=self.tol)
        rho_T = max(self.rho, 1e-12) * math.sqrt(self.T)
        return self._timed("drkf_finite", lambda: finite.fw_solve_finite(self.model, self.T, rho_T, cfg, pair=self.pair))

    @cached_property
    def infinite_result(self) -> freq.InfiniteSynthesisResult:
        cfg = freq.InfiniteConfig(tol=self.tol)
        return self._timed("drkf_infinite", lambda: freq.solve_infinite(self.model, max(self.rho, 1e-12), self.N, cfg, ric=self.ric))

    @cached_property
    def proxy_result(self) -> freq.InfiniteSynthesisResult:
        cfg = freq.InfiniteConfig(**HINF_PROXY_CONFIG)
        return self._timed("large_rho_hinf_proxy", lambda: freq.solve_infinite(self.model, HINF_PROXY_RHO, self.N, cfg, ric=self.ric))

    @cached_property
    def kalman(self) -> realize.StateSpaceFilter:
        return realize.kalman_state_space(self.model, self.ric)

    def rational(self, m: int):
        key = f"ra({m})"
        cache = self._ra
        if m not in cache:
            def build():
                fit = ratapprox.best_precision(self.infinite_result.M_star.scalar, m)
                fac = ratapprox.rational_factor(fit)
                return fit, realize.assemble_filter(fac, self.model, self.ric)
            cache[m] = self._timed(key, build)
        return cache[m]

    # ---- representations

    def correction(self, name: str) -> np.ndarray:
        """``X`` with ``K = K_H2 + X Delta^{-1}`` on the grid."""
        z = self.grid.nodes
        if name == "kalman":
            return np.zeros((self.N, self.model.d_s, self.model.d_y), dtype=complex)
        if name == "drkf_infinite":
            return self.infinite_result.correction
        if name == "large_rho_hinf_proxy":
            return self.proxy_result.correction
        m = _RA.match(name)
        if m:
            return realize.correction_response(self.rational(int(m.group(1)))[1], z)
        raise ModelError(f"filter {name!r} has no frequency-domain form")

    def error_psd(self, name: str) -> np.ndarray:
        z = self.grid.nodes
        if name == "zero":
            _, L = eval_transfer(self.model, z)
            return L @ np.conj(np.swapaxes(L, -1, -2))
        tko = freq.eval_noncausal_error_psd(self.model, z, self.ric)
        return freq.error_psd_from_correction(self.correction(name), self.ric, z, tko)

    def applier(self, name: str):
        """Callable mapping measurements ``(trials, T, d_y)`` to estimates."""
        if name == "kalman":
            return lambda y: realize.filter_run(self.kalman, y)
        if name == "drkf_finite":
            K = self.finite_result.K_T
            return lambda y: (y.reshape(y.shape[0], -1) @ K.T).reshape(y.shape[0], y.shape[1], -1)
        if name in ("drkf_infinite", "large_rho_hinf_proxy"):
            res = self.infinite_result if name == "drkf_infinite" else self.proxy_result
            taps = np.fft.ifft(res.K_samples, axis=0).real[: self.N // 2]
            return _Convolution(taps)
        m = _RA.match(name)
        if m:
            f = self.rational(int(m.group(1)))[1]
            return lambda y: realize.filter_run(f, y)
        raise ModelError(f"unknown filter {name!r}")

    def K_T(self, name: str, T: int | None = None) -> np.ndarray:
        """Block-lower matrix of the filter over ``T`` steps (impulse response stacked)."""
        T = self.T if T is None else T
        if name == "drkf_finite":
            if T != self.T:
                raise ModelError("finite-horizon filter exists only for its own horizon")
            return self.finite_result.K_T
        dy, ds = self.model.d_y, self.model.d_s
        taps = np.zeros((T, ds, dy))
        for j in range(dy):
            y = np.zeros((1, T, dy))
            y[0, 0, j] = 1.0
            taps[:, :, j] = self.applier(name)(y)[0]
        K = np.zeros((T * ds, T * dy))
        for i in range(T):
            for k in range(i + 1):
                K[i * ds:(i + 1) * ds, k * dy:(k + 1) * dy] = taps[i - k]
        return K


# --------------------------------------------------------------------------
# simulation


def _trial_rngs(seed: int, trials: int):
    # base ^ i alone maps every base below `trials` onto the same set of streams
    return [np.random.default_rng([seed ^ i, seed]) for i in range(trials)]


def nominal_disturbances(config: ExperimentConfig, n_xi: int, layout) -> np.ndarray:
    """Draws ``(trials, n_xi)`` nominal disturbances for white, AR or zero noise."""
    if config.noise == "zero":
        return np.zeros((config.trials, n_xi))
    out = np.empty((config.trials, n_xi))
    for i, rng in enumerate(_trial_rngs(config.seed, config.trials)):
        out[i] = rng.standard_normal(n_xi)
    if config.noise == "ar":
        out = _ar_filter(out, config.ar_phi, layout)
    return out


def _ar_filter(xi: np.ndarray, phi: float, layout) -> np.ndarray:
    """Turn iid innovations into unit-variance AR(1) sequences along time, channel by channel."""
    dx, dw, dy, T = layout
    x0, w, v = _split(xi, layout)
    c = math.sqrt(1.0 - phi * phi)
    for seq in (w, v):
        for t in range(1, seq.shape[1]):
            seq[:, t] = phi * seq[:, t - 1] + c * seq[:, t]
    return _join(x0, w, v)


def _split(xi, layout):
    dx, dw, dy, T = layout
    n = xi.shape[0]
    x0 = xi[:, :dx].copy()
    w = xi[:, dx:dx + (T - 1) * dw].reshape(n, T - 1, dw).copy()
    v = xi[:, dx + (T - 1) * dw:].reshape(n, T, dy).copy()
    return x0, w, v


def _join(x0, w, v):
    n = x0.shape[0]
    return np.hstack([x0, w.reshape(n, -1), v.reshape(n, -1)])


def propagate(model: StateSpaceModel, xi: np.ndarray, T: int):
    """Targets ``s`` and measurements ``y`` of shape ``(trials, T, d)`` from stacked disturbances."""
    x0, w, v = _split(xi, (model.d_x, model.d_w, model.d_y, T))
    n = xi.shape[0]
    s = np.empty((n, T, model.d_s))
    y = np.empty((n, T, model.d_y))
    x = x0
    for t in range(T):
        s[:, t] = x @ model.C_s.T
        y[:, t] = x @ model.C_y.T + v[:, t]
        if t < T - 1:
            x = x @ model.A.T + w[:, t] @ model.B.T
    return s, y


def simulate(config: ExperimentConfig, bank: FilterBank | None = None) -> SimResult:
    """Monte-Carlo MSE curves of every configured filter under one noise model."""
    model, T = config.model, config.T
    bank = bank or FilterBank(model, config.rho, T, config.N, config.tol)
    layout = (model.d_x, model.d_w, model.d_y, T)
    n_xi = model.d_x + (T - 1) * model.d_w + T * model.d_y
    xi = nominal_disturbances(config, n_xi, layout)
    if config.noise == "worst":
        fr = bank.finite_result
        D = finite.worst_case_transform(fr.error_operator, fr.gamma_star)
        xi = xi @ D.T
    energy = float(np.mean(np.sum(xi * xi, axis=1)) / T)
    s, y = propagate(model, xi, T)
    mse, avg, se, wc, rt = {}, {}, {}, {}, {}
    for name in config.filters:
        t0 = time.perf_counter()
        apply = bank.applier(name)
        s_hat = apply(y)
        rt[name] = time.perf_counter() - t0
        err = np.sum((s - s_hat) ** 2, axis=2)
        mse[name] = err.mean(axis=0)
        per_trial = err.mean(axis=1)
        avg[name] = float(per_trial.mean())
        se[name] = float(per_trial.std(ddof=1) / math.sqrt(config.trials)) if config.trials > 1 else math.nan
        if config.rho > 0 and T <= 500:
            op = finite.ErrorOperator.from_filter(bank.K_T(name), bank.pair)
            wc[name] = finite.worst_case_mse_finite(op, config.rho_T)[0] / T
    for k, v in bank.runtimes.items():
        rt.setdefault(f"synth:{k}", v)
    return SimResult(mse, avg, se, wc, rt, config.trials, energy)


# --------------------------------------------------------------------------
# reports


def freq_response_report(bank: FilterBank, filters) -> str:
    """CSV of the largest eigenvalue of ``T_K T_K^*`` per node and filter."""
    filters = list(filters)
    curves = {}
    for name in filters:
        psd = bank.error_psd(name)
        curves[name] = np.linalg.eigvalsh(psd)[:, -1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["omega", *filters])
    for n, om in enumerate(bank.grid.omega):
        w.writerow([repr(float(om)), *(repr(float(curves[f][n])) for f in filters)])
    return buf.getvalue()


def evaluate_worst_case(bank: FilterBank, name: str, rho: float, horizon: int | None = None) -> float:
    """Worst-case MSE of a filter: per step on the grid, or summed over ``horizon`` steps."""
    if name != "zero":
        _check_filter_name(name)
    if horizon is None:
        return freq.worst_case_mse_freq(bank.error_psd(name), rho)[0]
    op = finite.ErrorOperator.from_filter(bank.K_T(name, horizon), build_block_toeplitz(bank.model, horizon))
    return finite.worst_case_mse_finite(op, rho * math.sqrt(horizon))[0]


def bench_scaling(model: StateSpaceModel, T_list, rho: float, N: int = 1024, repeats: int = 3, tol: float = 1e-6) -> list:
    """Wall-clock synthesis time per requested horizon (best of ``repeats``)."""
    rows = []
    for T in T_list:
        fin, inf = [], []
        for _ in range(repeats):
            t0 = time.perf_counter()
            finite.fw_solve_finite(model, T, rho * math.sqrt(T), finite.FiniteConfig(tol=tol))
            fin.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            freq.solve_infinite(model, rho, N, freq.InfiniteConfig(tol=tol))
            inf.append(time.perf_counter() - t0)
        rows.append({"T": T, "finite_s": min(fin), "infinite_s": min(inf)})
    return rows


def bench_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "finite_s", "infinite_s"])
    for r in rows:
        w.writerow([r["T"], f"{r['finite_s']:.6f}", f"{r['infinite_s']:.6f}"])
    return buf.getvalue()
