"""Solver behavior: stepsizes, objective, proximal maps, and the iteration."""

import dataclasses

import numpy as np
import pytest

from elasticgraph.errors import InputError, NumericError
from elasticgraph.graphs import build_graph, normalized_operators
from elasticgraph.oracles import exact_l2_solution, subgradient_solve
from elasticgraph.solver import (EMPConfig, EMPState, Penalty,
                                 appnp_reference_step, default_stepsizes,
                                 emp_run, emp_step, group_soft_threshold,
                                 initial_state, load_emp_config, objective,
                                 prox_l2ball_rows, prox_linf_clip,
                                 soft_threshold)

from conftest import random_graph, random_instance


class TestDefaultStepsizes:
    def test_reference_values(self):
        assert default_stepsizes(3.0) == (0.25, 2.0)
        assert default_stepsizes(0.0) == (1.0, 0.5)

    def test_lambda2_nine_satisfies_bounds(self):
        gamma, beta = default_stepsizes(9.0)
        assert gamma == pytest.approx(0.1)
        assert beta == pytest.approx(5.0)
        assert gamma < 2.0 / (1.0 + 2.0 * 9.0)
        assert beta <= 2.0 / (3.0 * gamma)

    def test_always_valid(self):
        for lam2 in [0.0, 0.5, 3.0, 9.0, 100.0]:
            gamma, beta = default_stepsizes(lam2)
            EMPConfig(lambda1=1.0, lambda2=lam2, gamma=gamma, beta=beta, k=1)


class TestConfigValidation:
    def test_gamma_bound(self):
        with pytest.raises(InputError):
            EMPConfig(lambda1=0.0, lambda2=1.0, gamma=0.7, beta=0.5, k=1)

    def test_beta_bound(self):
        with pytest.raises(InputError):
            EMPConfig(lambda1=0.0, lambda2=0.0, gamma=1.0, beta=0.7, k=1)

    def test_unchecked_bypasses_theorem(self):
        cfg = EMPConfig(lambda1=0.0, lambda2=1.0, gamma=0.9, beta=5.0, k=1,
                        unchecked=True)
        assert cfg.gamma == 0.9

    def test_fast_path_requires_matching_gamma(self):
        with pytest.raises(InputError):
            EMPConfig(lambda1=0.0, lambda2=1.0, gamma=0.4, beta=0.5, k=1,
                      fast_path=True)

    def test_negative_k(self):
        with pytest.raises(InputError):
            EMPConfig.with_default_steps(0.0, 0.0, -1)


class TestObjective:
    def test_zero_at_fixed_point(self):
        _, ops, X = random_instance(np.random.default_rng(0), n=6)
        cfg = EMPConfig.with_default_steps(0.0, 0.0, 1)
        assert objective(X, X, ops, cfg).total == 0.0

    def test_single_edge_by_hand(self):
        # fidelity = (0.25^2 + 0.25^2)/2; quadratic with lambda2 = 1 equals
        # (Delta_tilde F)^2 / 2 = ((0.25 - 0.75)/sqrt(2))^2 / 2 = 0.0625
        ops = normalized_operators(build_graph([(0, 1)], 2))
        cfg = EMPConfig.with_default_steps(0.0, 1.0, 1)
        ob = objective([[0.75], [0.25]], [[1.0], [0.0]], ops, cfg)
        assert ob.fidelity == pytest.approx(0.0625, abs=1e-15)
        assert ob.quadratic == pytest.approx(0.0625, abs=1e-15)
        assert ob.tv == 0.0
        assert ob.total == pytest.approx(0.125, abs=1e-15)

    def test_constant_signal_not_flat_under_degree_scaling(self):
        # star graph has uneven degrees, so a constant vector is not in the
        # null space of the normalized quadratic form
        ops = normalized_operators(build_graph([(0, 1), (0, 2), (0, 3)], 4))
        cfg = EMPConfig.with_default_steps(2.0, 4.0, 1)
        c = 1.7
        F = np.full((4, 1), c)
        ob = objective(F, F, ops, cfg)
        quad_direct = 0.5 * cfg.lambda2 * c * c * float(
            np.ones(4) @ ops.L_tilde.toarray() @ np.ones(4))
        assert ob.tv > 0.0
        assert ob.quadratic == pytest.approx(quad_direct, rel=1e-12)
        assert ob.quadratic > 0.0

    def test_tv_const_signal_zero_on_regular_graph(self):
        # all degrees equal: the constant IS flat
        ops = normalized_operators(build_graph([(0, 1), (1, 2), (0, 2)], 3))
        cfg = EMPConfig.with_default_steps(1.0, 1.0, 1)
        ob = objective(np.ones((3, 2)), np.ones((3, 2)), ops, cfg)
        assert ob.tv == pytest.approx(0.0, abs=1e-14)

    def test_dimension_mismatch(self):
        _, ops, X = random_instance(np.random.default_rng(1), n=5, d=2)
        cfg = EMPConfig.with_default_steps(0.0, 0.0, 1)
        with pytest.raises(InputError):
            objective(X, X[:, :1], ops, cfg)

    def test_mode_selects_tv(self):
        _, ops, X = random_instance(np.random.default_rng(2), n=8, d=3)
        diff = ops.Delta_tilde @ X
        cfg1 = EMPConfig.with_default_steps(2.0, 0.0, 1, mode=Penalty.L1)
        cfg21 = EMPConfig.with_default_steps(2.0, 0.0, 1, mode=Penalty.L21)
        assert objective(X, X, ops, cfg1).tv == pytest.approx(
            2.0 * np.abs(diff).sum(), rel=1e-14)
        assert objective(X, X, ops, cfg21).tv == pytest.approx(
            2.0 * np.linalg.norm(diff, axis=1).sum(), rel=1e-14)


class TestProxOperators:
    def test_clip_example(self):
        out = prox_linf_clip(np.array([[1.5, -0.3], [-2.0, 0.7]]), 1.0)
        assert out.tolist() == [[1.0, -0.3], [-1.0, 0.7]]

    def test_clip_zero_radius(self):
        assert (prox_linf_clip(np.array([[3.0, -2.0]]), 0.0) == 0.0).all()

    def test_clip_interior_unchanged(self):
        rng = np.random.default_rng(0)
        Z = rng.uniform(-1, 1, size=(5, 3))
        assert np.array_equal(prox_linf_clip(Z, 10.0), Z)

    def test_rowball_example(self):
        out = prox_l2ball_rows(np.array([[3.0, 4.0]]), 1.0)
        assert np.allclose(out, [[0.6, 0.8]], atol=1e-15)

    def test_rowball_interior_unchanged(self):
        assert np.array_equal(
            prox_l2ball_rows(np.array([[3.0, 4.0]]), 10.0), [[3.0, 4.0]])

    def test_rowball_zero_row(self):
        out = prox_l2ball_rows(np.array([[0.0, 0.0], [5.0, 0.0]]), 2.0)
        assert out[0].tolist() == [0.0, 0.0]
        assert np.allclose(out[1], [2.0, 0.0])

    @pytest.mark.parametrize("mode", list(Penalty))
    def test_idempotence_feasibility_moreau(self, mode):
        rng = np.random.default_rng(42)
        for _ in range(300):
            m = int(rng.integers(1, 8))
            d = int(rng.integers(1, 5))
            lam1 = float(rng.uniform(0, 3))
            beta = float(rng.uniform(0.1, 5))
            Z = rng.standard_normal((m, d)) * rng.uniform(0.1, 5)
            if mode is Penalty.L1:
                proj = prox_linf_clip(Z, lam1)
                assert np.abs(proj).max() <= lam1 + 1e-15
                assert np.allclose(prox_linf_clip(proj, lam1), proj, atol=1e-15)
                recon = proj + beta * soft_threshold(Z / beta, lam1 / beta)
            else:
                proj = prox_l2ball_rows(Z, lam1)
                assert np.linalg.norm(proj, axis=1).max() <= lam1 * (1 + 1e-12) + 1e-15
                assert np.allclose(prox_l2ball_rows(proj, lam1), proj, atol=1e-12)
                recon = proj + beta * group_soft_threshold(Z / beta, lam1 / beta)
            assert np.abs(recon - Z).max() <= 1e-12


class TestEMPStep:
    def test_lambda1_zero_reduces_to_personalized_propagation(self):
        rng = np.random.default_rng(3)
        _, ops, X = random_instance(rng, n=9, d=2)
        cfg = EMPConfig.with_default_steps(0.0, 4.0, 5)
        state = initial_state(X, ops)
        for _ in range(5):
            state = emp_step(state, X, ops, cfg)
            assert (state.Z == 0.0).all()
        expected = X.copy()
        for _ in range(5):
            expected = cfg.gamma * X + (1 - cfg.gamma) * (ops.A_tilde @ expected)
        assert np.array_equal(state.F, expected)

    def test_k_zero_returns_input(self):
        rng = np.random.default_rng(4)
        _, ops, X = random_instance(rng, n=7)
        cfg = EMPConfig.with_default_steps(2.0, 3.0, 0)
        F, _ = emp_run(X, ops, cfg)
        assert np.array_equal(F, X)

    def test_two_node_converges_to_closed_form(self):
        ops = normalized_operators(build_graph([(0, 1)], 2))
        X = np.array([[1.0], [0.0]])
        cfg = EMPConfig.with_default_steps(0.0, 1.0, 10_000)
        F, _ = emp_run(X, ops, cfg, tol=1e-14)
        assert np.allclose(F, [[0.75], [0.25]], atol=1e-10)

    def test_appnp_equivalence(self):
        # lambda2 = 9 corresponds to teleport 0.1
        rng = np.random.default_rng(5)
        _, ops, X = random_instance(rng, n=12, d=3, edge_prob=0.3)
        cfg = EMPConfig.with_default_steps(0.0, 9.0, 10)
        state = initial_state(X, ops)
        ref = X.copy()
        for _ in range(10):
            state = emp_step(state, X, ops, cfg)
            ref = appnp_reference_step(ref, X, ops.A_tilde, 0.1)
            assert np.abs(state.F - ref).max() <= 1e-12

    def test_aggregate_only(self):
        rng = np.random.default_rng(6)
        _, ops, X = random_instance(rng, n=8, d=2)
        cfg = EMPConfig.with_default_steps(1.0, 3.0, 4, aggregate_only=True)
        F, _ = emp_run(X, ops, cfg)
        expected = X.copy()
        for _ in range(4):
            expected = ops.A_tilde @ expected
        assert np.array_equal(F, expected)

    @pytest.mark.parametrize("mode", list(Penalty))
    def test_dual_feasibility_every_step(self, mode):
        rng = np.random.default_rng(7)
        _, ops, X = random_instance(rng, n=10, d=3, edge_prob=0.4)
        lam1 = 0.8
        cfg = EMPConfig.with_default_steps(lam1, 2.0, 1, mode=mode)
        state = initial_state(X, ops)
        for _ in range(25):
            state = emp_step(state, X, ops, cfg)
            if mode is Penalty.L1:
                assert np.abs(state.Z).max() <= lam1 + 1e-15
            else:
                assert np.linalg.norm(state.Z, axis=1).max() <= lam1 + 1e-12

    def test_general_gamma_path_matches_fast_path(self):
        rng = np.random.default_rng(8)
        _, ops, X = random_instance(rng, n=11, d=2)
        gamma, beta = default_stepsizes(3.0)
        fast = EMPConfig(lambda1=1.5, lambda2=3.0, gamma=gamma, beta=beta,
                         k=20, fast_path=True)
        slow = EMPConfig(lambda1=1.5, lambda2=3.0, gamma=gamma, beta=beta,
                         k=20, fast_path=False)
        F_fast, _ = emp_run(X, ops, fast)
        F_slow, _ = emp_run(X, ops, slow)
        assert np.abs(F_fast - F_slow).max() <= 1e-12

    def test_non_finite_state_names_step(self):
        ops = normalized_operators(build_graph([(0, 1)], 2))
        cfg = EMPConfig.with_default_steps(1.0, 1.0, 1)
        bad = EMPState(F=np.array([[np.inf], [0.0]]), Z=np.zeros((1, 1)), k=0)
        with pytest.raises(NumericError, match="gradient step"):
            emp_step(bad, np.zeros((2, 1)), ops, cfg)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(9)
        _, ops, X = random_instance(rng, n=6, d=2)
        cfg = EMPConfig.with_default_steps(1.0, 1.0, 1)
        state = initial_state(X, ops)
        with pytest.raises(InputError):
            emp_step(state, X[:, :1], ops, cfg)


class TestEMPRun:
    def test_trace_length_and_running_min(self):
        rng = np.random.default_rng(10)
        _, ops, X = random_instance(rng, n=12, d=2, edge_prob=0.4)
        cfg = EMPConfig.with_default_steps(1.0, 2.0, 40)
        _, trace = emp_run(X, ops, cfg, trace=True)
        assert len(trace) == 41
        totals = [b.total for b in trace]
        running = np.minimum.accumulate(totals)
        assert (np.diff(running) <= 0).all()
        assert totals[-1] <= running[-1] * (1 + 1e-6) + 1e-12

    @pytest.mark.parametrize("mode", list(Penalty))
    def test_reaches_oracle_optimum(self, mode):
        rng = np.random.default_rng(11)
        _, ops, X = random_instance(rng, n=9, d=1, edge_prob=0.5)
        cfg = EMPConfig.with_default_steps(1.3, 2.4, 50_000, mode=mode)
        F, _ = emp_run(X, ops, cfg, tol=1e-12)
        emp_obj = objective(F, X, ops, cfg).total
        report = subgradient_solve(X, ops, cfg, iters=100_000)
        scale = max(1.0, abs(report.objective_star))
        assert emp_obj <= report.objective_star + 1e-6 * scale

    def test_lambda1_zero_matches_closed_form(self):
        rng = np.random.default_rng(12)
        _, ops, X = random_instance(rng, n=14, d=3)
        cfg = EMPConfig.with_default_steps(0.0, 5.5, 50_000)
        F, _ = emp_run(X, ops, cfg, tol=1e-13)
        F_star = exact_l2_solution(X, ops, 5.5)
        assert np.abs(F - F_star).max() <= 1e-9

    def test_l1_mode_column_separable(self):
        rng = np.random.default_rng(13)
        _, ops, X = random_instance(rng, n=10, d=3, edge_prob=0.4)
        cfg = EMPConfig.with_default_steps(1.1, 1.7, 30, mode=Penalty.L1)
        joint, _ = emp_run(X, ops, cfg)
        columns = [emp_run(X[:, j:j + 1], ops, cfg)[0] for j in range(3)]
        assert np.array_equal(joint, np.hstack(columns))

    def test_scale_covariance_only_without_tv(self):
        rng = np.random.default_rng(14)
        _, ops, X = random_instance(rng, n=10, d=2, edge_prob=0.4)
        c = 37.5
        linear = EMPConfig.with_default_steps(0.0, 3.0, 25)
        F1, _ = emp_run(X, ops, linear)
        F2, _ = emp_run(c * X, ops, linear)
        assert np.abs(F2 - c * F1).max() <= 1e-12 * c * max(1, np.abs(F1).max())
        nonlinear = EMPConfig.with_default_steps(1.0, 3.0, 25, mode=Penalty.L21)
        G1, _ = emp_run(X, ops, nonlinear)
        G2, _ = emp_run(c * X, ops, nonlinear)
        assert np.abs(G2 - c * G1).max() > 1e-6

    def test_orientation_flip_invariance(self):
        rng = np.random.default_rng(15)
        g, ops, X = random_instance(rng, n=9, d=2, edge_prob=0.5)
        flipped_delta = ops.Delta_tilde.copy()
        rows = np.arange(0, g.m, 2)
        for r in rows:
            flipped_delta.data[flipped_delta.indptr[r]:flipped_delta.indptr[r + 1]] *= -1.0
        flipped = dataclasses.replace(ops, Delta_tilde=flipped_delta.tocsr())
        cfg = EMPConfig.with_default_steps(1.2, 2.0, 30, mode=Penalty.L21)
        state_a = initial_state(X, ops)
        state_b = initial_state(X, flipped)
        for _ in range(30):
            state_a = emp_step(state_a, X, ops, cfg)
            state_b = emp_step(state_b, X, flipped, cfg)
        assert np.array_equal(state_a.F, state_b.F)
        sign = np.ones((g.m, 1))
        sign[rows] = -1.0
        assert np.array_equal(state_a.Z, sign * state_b.Z)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "solver.cfg"
        path.write_text("lambda1 = 2.5\nlambda2 = 3\nk = 7\nmode = l1\n")
        cfg = load_emp_config(path)
        assert cfg.lambda1 == 2.5
        assert cfg.lambda2 == 3.0
        assert cfg.k == 7
        assert cfg.mode is Penalty.L1
        assert cfg.fast_path
        assert (cfg.gamma, cfg.beta) == default_stepsizes(3.0)

    def test_overrides_disable_fast_path(self, tmp_path):
        path = tmp_path / "solver.cfg"
        path.write_text("lambda2 = 3\ngamma = 0.2\nbeta = 1.0\n")
        cfg = load_emp_config(path)
        assert cfg.gamma == 0.2
        assert not cfg.fast_path

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "solver.cfg"
        path.write_text("lambda3 = 1\n")
        with pytest.raises(InputError, match="lambda3"):
            load_emp_config(path)

    def test_space_separated(self, tmp_path):
        path = tmp_path / "solver.cfg"
        path.write_text("lambda1 1.0  # comment\nk 3\n")
        cfg = load_emp_config(path)
        assert cfg.lambda1 == 1.0
        assert cfg.k == 3
