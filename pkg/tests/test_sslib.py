import json

import numpy as np
import pytest
import scipy.linalg as sla

from drkf.errors import ModelError, SingularResolvent
from drkf.sslib import (
    FrequencyGrid,
    StateSpaceModel,
    build_block_toeplitz,
    eval_delta,
    eval_h2_and_S,
    eval_kalman_error_transfer,
    eval_noncausal_error_psd,
    eval_transfer,
    noncausal_error_psd_direct,
    noncausal_filter,
    scalar_model,
    solve_dare,
    tracking_model,
)

from conftest import off_pole_nodes

GOLDEN = (1 + 5**0.5) / 2


class TestModel:
    def test_dimension_mismatch(self):
        with pytest.raises(ModelError):
            StateSpaceModel(np.eye(2), [[1.0]], [[1.0, 0.0]], [[1.0, 0.0]])

    def test_nonfinite(self):
        with pytest.raises(ModelError):
            scalar_model(a=np.nan)

    def test_uncontrollable_rejected(self):
        m = StateSpaceModel(np.diag([1.0, 0.5]), [[1.0], [0.0]], [[1.0, 1.0]], [[1.0, 0.0]])
        with pytest.raises(ModelError, match="controllable"):
            m.check_assumptions()

    def test_undetectable_rejected(self):
        m = StateSpaceModel(np.diag([1.2, 0.5]), np.eye(2), [[0.0, 1.0]], [[1.0, 0.0]])
        with pytest.raises(ModelError, match="detectable"):
            m.check_assumptions()

    def test_json_round_trip(self, tmp_path):
        m = tracking_model()
        path = tmp_path / "m.json"
        path.write_text(json.dumps(m.to_dict()))
        m2 = StateSpaceModel.from_json(path)
        for k in ("A", "B", "C_y", "C_s"):
            assert np.array_equal(getattr(m, k), getattr(m2, k))

    def test_missing_key(self):
        with pytest.raises(ModelError):
            StateSpaceModel.from_dict({"A": [[1]]})


class TestDare:
    def test_scalar_golden_ratio(self):
        r = solve_dare(scalar_model())
        assert r.P[0, 0] == pytest.approx(GOLDEN, abs=1e-10)
        assert r.R_e[0, 0] == pytest.approx(1 + GOLDEN, abs=1e-10)
        assert r.F_P[0, 0] == pytest.approx(GOLDEN - 1, abs=1e-10)
        assert r.A_P[0, 0] == pytest.approx(2 - GOLDEN, abs=1e-10)

    def test_zero_dynamics(self):
        m = StateSpaceModel([[0.0]], [[1.7]], [[0.3]], [[1.0]])
        r = solve_dare(m)
        assert r.P[0, 0] == pytest.approx(1.7**2, rel=1e-12)

    @pytest.mark.parametrize("model", [tracking_model(), scalar_model(0.9, 0.4, 2.0, 1.0),
                                       StateSpaceModel([[0.9, 0.2], [-0.1, 0.7]], np.eye(2), [[1.0, 0.0], [0.3, 1.0]], [[0.0, 1.0]])])
    def test_matches_scipy(self, model):
        r = solve_dare(model)
        # filter DARE is the control DARE of the dual pair
        P = sla.solve_discrete_are(model.A.T, model.C_y.T, model.B @ model.B.T, np.eye(model.d_y))
        assert np.allclose(r.P, P, rtol=1e-9, atol=1e-11)
        assert r.residual <= 1e-10
        assert np.max(np.abs(np.linalg.eigvals(r.A_P))) < 1

    def test_derived_quantities(self):
        m = tracking_model()
        r = solve_dare(m)
        assert np.allclose(r.A_bar, r.A_P.T)
        assert np.allclose(r.B_bar @ r.B_bar.T, m.C_y.T @ np.linalg.inv(r.R_e) @ m.C_y)
        assert np.allclose(r.C_bar, m.C_s @ r.P @ r.A_P.T)

    def test_doubling_fallback_agrees(self):
        m = tracking_model()
        fp = solve_dare(m)
        db = solve_dare(m, max_iter=1)
        assert db.method == "doubling"
        assert np.allclose(fp.P, db.P, rtol=1e-10)


class TestTransfer:
    def test_examples(self):
        H, L = eval_transfer(scalar_model(0.5), 1.0)
        assert H[0, 0] == pytest.approx(2) and L[0, 0] == pytest.approx(2)
        H, _ = eval_transfer(scalar_model(), -1.0)
        assert H[0, 0] == pytest.approx(-0.5)
        H, _ = eval_transfer(StateSpaceModel([[0.5]], [[1.0]], [[0.0]], [[1.0]]), np.exp(0.3j))
        assert H[0, 0] == 0

    def test_pole_raises(self):
        with pytest.raises(SingularResolvent):
            eval_transfer(scalar_model(), 1.0)

    @pytest.mark.parametrize("model", [scalar_model(), tracking_model(), scalar_model(0.5, 2.0, 0.7, 1.3)])
    def test_delta_factorization(self, model):
        r = solve_dare(model)
        z = off_pole_nodes(256, model, margin=0.05)
        D, Di = eval_delta(model, r, z)
        H, _ = eval_transfer(model, z)
        lhs = D @ np.conj(np.swapaxes(D, -1, -2))
        rhs = np.eye(model.d_y) + H @ np.conj(np.swapaxes(H, -1, -2))
        assert np.max(np.abs(lhs - rhs) / np.abs(rhs)) <= 1e-8
        assert np.max(np.abs(D @ Di - np.eye(model.d_y))) <= 1e-10

    def test_delta_scalar_at_minus_one(self):
        m = scalar_model()
        D, _ = eval_delta(m, solve_dare(m), -1.0)
        assert abs(D[0, 0]) ** 2 == pytest.approx(1.25, abs=1e-10)

    @pytest.mark.parametrize("model", [scalar_model(), tracking_model(), scalar_model(0.5)])
    def test_decomposition(self, model):
        r = solve_dare(model)
        z = off_pole_nodes(256, model, margin=0.05)
        K_h2, S = eval_h2_and_S(model, r, z)
        D, _ = eval_delta(model, r, z)
        Ko = noncausal_filter(model, z)
        err = np.abs(Ko @ D - (K_h2 @ D + S))
        assert np.max(err / np.maximum(np.abs(Ko @ D), 1)) <= 1e-8

    def test_S_vanishes_for_zero_dynamics(self):
        m = StateSpaceModel([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        _, S = eval_h2_and_S(m, solve_dare(m), FrequencyGrid(16).nodes)
        assert np.max(np.abs(S)) == 0

    def test_kalman_error_transfer_matches_direct(self):
        m = scalar_model(0.5, 1.0, 1.0, 1.0)
        r = solve_dare(m)
        z = FrequencyGrid(64).nodes
        T = eval_kalman_error_transfer(m, r, z)
        H, L = eval_transfer(m, z)
        K, _ = eval_h2_and_S(m, r, z)
        assert np.allclose(T, np.concatenate([K @ H - L, K], axis=-1), atol=1e-12)

    @pytest.mark.parametrize("model", [scalar_model(), tracking_model(), scalar_model(0.5)])
    def test_noncausal_psd_two_ways(self, model):
        z = off_pole_nodes(256, model, margin=0.05)
        a = eval_noncausal_error_psd(model, z)
        b = noncausal_error_psd_direct(model, z)
        assert np.max(np.abs(a - b) / np.abs(b)) <= 1e-8

    def test_noncausal_psd_scalar_formula(self):
        m = scalar_model(0.5, 1.0, 2.0, 3.0)
        z = FrequencyGrid(32).nodes
        H, L = eval_transfer(m, z)
        expected = np.abs(L[:, 0, 0]) ** 2 / (1 + np.abs(H[:, 0, 0]) ** 2)
        assert np.allclose(eval_noncausal_error_psd(m, z)[:, 0, 0].real, expected, rtol=1e-10)

    def test_noncausal_psd_zero_target(self):
        m = StateSpaceModel([[0.5]], [[1.0]], [[1.0]], [[0.0]])
        assert np.max(np.abs(eval_noncausal_error_psd(m, FrequencyGrid(16).nodes))) < 1e-14

    def test_noncausal_psd_integrator_finite_at_pole(self):
        psd = eval_noncausal_error_psd(tracking_model(), FrequencyGrid(64).nodes)
        w = np.linalg.eigvalsh(psd)
        assert np.all(np.isfinite(w)) and np.min(w) >= -1e-12


class TestToeplitz:
    def test_T1(self):
        m = tracking_model()
        p = build_block_toeplitz(m, 1)
        assert np.array_equal(p.H_T, m.C_y) and np.array_equal(p.L_T, m.C_s)

    def test_T2_scalar(self):
        p = build_block_toeplitz(scalar_model(), 2)
        assert np.array_equal(p.H_T, [[1, 0], [1, 1]])

    def test_cap(self):
        with pytest.raises(ModelError):
            build_block_toeplitz(tracking_model(), 30, max_dim=50)

    @pytest.mark.parametrize("model", [tracking_model(), StateSpaceModel([[0.9, 0.2], [-0.1, 0.7]], np.eye(2), [[1.0, 0.0], [0.3, 1.0]], [[0.0, 1.0]])])
    def test_recursion_oracle(self, model, rng):
        T = 7
        p = build_block_toeplitz(model, T)
        xi = rng.standard_normal(p.n_xi)
        nw = p.H_T.shape[1]
        w, v = xi[:nw], xi[nw:].reshape(T, model.d_y)
        x = w[: model.d_x]
        ws = w[model.d_x:].reshape(T - 1, model.d_w) if T > 1 else np.zeros((0, model.d_w))
        ys, ss = [], []
        for t in range(T):
            ys.append(model.C_y @ x + v[t])
            ss.append(model.C_s @ x)
            if t < T - 1:
                x = model.A @ x + model.B @ ws[t]
        assert np.allclose(p.H_T @ w + v.ravel(), np.concatenate(ys), atol=1e-12)
        assert np.allclose(p.L_T @ w, np.concatenate(ss), atol=1e-12)

    def test_upper_blocks_zero(self):
        p = build_block_toeplitz(tracking_model(), 5)
        dx = 2
        for i in range(5):
            assert np.all(p.H_T[i, dx + i:] == 0)


class TestGrid:
    def test_even_pow2(self):
        with pytest.raises(ModelError):
            FrequencyGrid(7)
        with pytest.raises(ModelError):
            FrequencyGrid(96)
        assert FrequencyGrid(96, require_pow2=False).N == 96

    def test_nodes_uniform(self):
        z = FrequencyGrid(8).nodes
        assert np.allclose(np.abs(z), 1) and np.allclose(z[2], 1j)
