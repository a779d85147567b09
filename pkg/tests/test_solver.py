import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from hlsmm import (
    Dataset,
    Hyperparams,
    InvalidArgumentError,
    ModelState,
    NumericalError,
    StepPolicy,
    fit,
    grad_h,
    heaviside_count,
    make_lowrank_separable,
    margin_residuals,
    penalized_objective,
    prox_heaviside,
    svd,
    update_b,
    update_w,
    update_z,
)

from conftest import make_rng, random_dataset


def smooth_part(w, z, b, data, sigma):
    """h(W) evaluated from scratch: quadratic + coupling penalty, no loss term."""
    gap = z - margin_residuals(w, b, data)
    return 0.5 * float(np.sum(w * w)) + sigma * float(gap @ gap)


def rank1_truncation_2x2(g):
    """Closed-form best rank-1 approximation of a 2x2 matrix.

    Independent of numpy's SVD: the top right singular vector comes from the
    eigen-decomposition of the 2x2 Gram matrix G^T G solved by the quadratic
    formula.
    """
    gram = g.T @ g
    a, b, d = gram[0, 0], gram[0, 1], gram[1, 1]
    mean = 0.5 * (a + d)
    half_gap = np.sqrt(max(0.25 * (a - d) ** 2 + b * b, 0.0))
    lam_top = mean + half_gap
    if abs(b) > 1e-15:
        v = np.array([b, lam_top - a])
    elif a >= d:
        v = np.array([1.0, 0.0])
    else:
        v = np.array([0.0, 1.0])
    v /= np.linalg.norm(v)
    gv = g @ v
    return np.outer(gv, v)


class TestGradH:
    def test_zero_at_consistent_slack(self):
        # W = 0, b = 0, z = all-ones: every coupling residual vanishes.
        data = random_dataset(21)
        g = grad_h(np.zeros(data.sample_shape), np.ones(data.m), 0.0, data, sigma=0.5)
        np.testing.assert_array_equal(g, np.zeros(data.sample_shape))

    def test_small_sigma_limit_is_identity_term(self):
        data = random_dataset(22)
        gen = make_rng(23)
        w = gen.standard_normal(data.sample_shape)
        z = gen.standard_normal(data.m)
        g = grad_h(w, z, 0.1, data, sigma=1e-14)
        np.testing.assert_allclose(g, w, atol=1e-10)

    def test_matches_central_finite_differences(self):
        gen = make_rng(24)
        for trial in range(10):
            data = random_dataset(100 + trial, m=4, p=3, q=2)
            w = gen.standard_normal((3, 2))
            z = gen.standard_normal(4)
            b = float(gen.standard_normal())
            sigma = float(10.0 ** gen.uniform(-2, 0))
            analytic = grad_h(w, z, b, data, sigma)
            numeric = np.zeros_like(w)
            step = 1e-6 * max(1.0, float(np.abs(w).max()))
            for a in range(3):
                for c in range(2):
                    bump = np.zeros_like(w)
                    bump[a, c] = step
                    numeric[a, c] = (smooth_part(w + bump, z, b, data, sigma)
                                     - smooth_part(w - bump, z, b, data, sigma)) / (2 * step)
            err = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
            assert err <= 1e-5


class TestUpdateW:
    def test_fixed_point_stays(self):
        data = random_dataset(25)
        hp = Hyperparams(beta=0.5, sigma=0.5, rank=1)
        state = ModelState(w=np.zeros(data.sample_shape), b=0.0, z=np.ones(data.m))
        new_w, halvings = update_w(state, data, hp)
        np.testing.assert_array_equal(new_w, state.w)
        assert halvings == 0

    def test_step_equals_truncated_svd_of_gradient_step(self):
        # 2x2 samples, r = 1: one projected-gradient step must equal the
        # rank-1 truncation (hand-rolled oracle) of W - alpha * grad.
        gen = make_rng(26)
        xs = gen.standard_normal((4, 2, 2))
        ys = np.array([1, -1, 1, -1], dtype=np.int8)
        data = Dataset(xs=xs, ys=ys)
        alpha = 0.05
        hp = Hyperparams(beta=0.1, sigma=0.2, rank=1,
                         step=StepPolicy(kind="backtracking", alpha0=alpha))
        w = gen.standard_normal((2, 2)) * 0.1
        w = rank1_truncation_2x2(w)  # feasible start
        z = gen.standard_normal(4)
        state = ModelState(w=w, b=0.1, z=z)
        new_w, halvings = update_w(state, data, hp)
        taken = alpha * hp.step.shrink ** halvings
        expected = rank1_truncation_2x2(w - taken * grad_h(w, z, 0.1, data, hp.sigma))
        np.testing.assert_allclose(new_w, expected, atol=1e-10)

    def test_w_only_iteration_is_monotone(self):
        data, _, _ = make_lowrank_separable(m=60, seed=27)
        hp = Hyperparams(beta=0.1, sigma=0.1, rank=2)
        z = np.zeros(data.m)
        b = 0.0
        w = np.zeros(data.sample_shape)
        values = [smooth_part(w, z, b, data, hp.sigma)]
        for _ in range(50):
            state = ModelState(w=w, b=b, z=z)
            w, _ = update_w(state, data, hp)
            values.append(smooth_part(w, z, b, data, hp.sigma))
        diffs = np.diff(values)
        assert np.all(diffs <= 1e-10)

    def test_rank_feasible_after_every_step(self):
        data = random_dataset(28, m=10, p=5, q=4)
        hp = Hyperparams(beta=0.2, sigma=0.3, rank=2)
        state = ModelState(w=np.zeros((5, 4)), b=0.0, z=np.zeros(10))
        w = state.w
        for _ in range(10):
            w, _ = update_w(ModelState(w=w, b=0.0, z=state.z), data, hp)
            assert svd(w).rank <= hp.rank


class TestUpdateZ:
    def test_beta_to_zero_limit_is_weighted_average(self):
        data = random_dataset(29, m=5)
        gen = make_rng(30)
        w = gen.standard_normal(data.sample_shape)
        z_prev = gen.standard_normal(5)
        hp = Hyperparams(beta=1e-300, sigma=0.4, tau2=0.2, rank=1)
        state = ModelState(w=w, b=0.3, z=z_prev)
        v = margin_residuals(w, 0.3, data)
        expected = (2 * 0.4 * v + 0.2 * z_prev) / (2 * 0.4 + 0.2)
        np.testing.assert_allclose(update_z(state, data, hp), expected, rtol=1e-12)

    def test_tau2_to_zero_sigma_half_reduces_to_prox(self):
        data = random_dataset(31, m=6)
        gen = make_rng(32)
        w = gen.standard_normal(data.sample_shape)
        hp = Hyperparams(beta=0.7, sigma=0.5, tau2=1e-300, rank=1)
        state = ModelState(w=w, b=-0.2, z=gen.standard_normal(6))
        v = margin_residuals(w, -0.2, data)
        np.testing.assert_allclose(update_z(state, data, hp),
                                   prox_heaviside(v, 0.7), atol=1e-12)

    def test_beats_dense_grid(self):
        # The returned coordinate must attain the global minimum of
        #   beta 1[z>0] + sigma (z - v)^2 + tau2/2 (z - z_prev)^2
        # verified against 200001 grid points on [-10, 10].  Samples are
        # crafted 1x1 matrices so the first margin residual equals v.
        gen = make_rng(33)
        grid = np.linspace(-10.0, 10.0, 200_001)
        for _ in range(25):
            sigma = float(10.0 ** gen.uniform(-2, 0))
            tau2 = float(10.0 ** gen.uniform(-4, -1))
            beta = float(10.0 ** gen.uniform(-2, 0))
            v = float(gen.uniform(-4, 4))
            z_prev = float(gen.uniform(-4, 4))
            data = Dataset(xs=np.array([[[1.0 - v]], [[0.0]]]),
                           ys=np.array([1, -1]))
            state = ModelState(w=np.array([[1.0]]), b=0.0,
                               z=np.array([z_prev, 0.0]))
            hp = Hyperparams(beta=beta, sigma=sigma, tau2=tau2, rank=1)
            assert margin_residuals(state.w, state.b, data)[0] == pytest.approx(v)

            def objective(z):
                return beta * (z > 0) + sigma * (z - v) ** 2 + 0.5 * tau2 * (z - z_prev) ** 2

            returned = update_z(state, data, hp)[0]
            assert objective(returned) <= objective(grid).min() + 1e-12

    def test_update_z_matches_manual_formula(self):
        data = random_dataset(34, m=7)
        gen = make_rng(35)
        w = gen.standard_normal(data.sample_shape)
        z_prev = gen.standard_normal(7)
        hp = Hyperparams(beta=0.15, sigma=0.2, tau2=1e-3, rank=1)
        state = ModelState(w=w, b=0.05, z=z_prev)
        v = margin_residuals(w, 0.05, data)
        center = (2 * hp.sigma * v + hp.tau2 * z_prev) / (2 * hp.sigma + hp.tau2)
        threshold = np.sqrt(2 * hp.beta / (2 * hp.sigma + hp.tau2))
        expected = np.where((center > 0) & (center <= threshold), 0.0, center)
        np.testing.assert_array_equal(update_z(state, data, hp), expected)

    def test_paper_mode_uses_printed_constants(self):
        data = random_dataset(36, m=5)
        gen = make_rng(37)
        w = gen.standard_normal(data.sample_shape)
        z_prev = gen.standard_normal(5)
        hp = Hyperparams(beta=0.15, sigma=0.2, tau2=1e-3, rank=1, z_update="paper")
        state = ModelState(w=w, b=0.0, z=z_prev)
        v = margin_residuals(w, 0.0, data)
        center = (2 * hp.sigma * v + hp.tau2 * z_prev) / (hp.sigma + hp.tau2)
        threshold = np.sqrt(4 * hp.beta / (hp.sigma + hp.tau2))
        expected = np.where((center > 0) & (center <= threshold), 0.0, center)
        np.testing.assert_array_equal(update_z(state, data, hp), expected)


class TestUpdateB:
    def test_stationary_bias_unchanged(self):
        data = random_dataset(38, m=6)
        gen = make_rng(39)
        w = gen.standard_normal(data.sample_shape)
        b_prev = 0.4
        z = margin_residuals(w, b_prev, data)  # coupling residual zero at b_prev
        hp = Hyperparams(beta=0.1, sigma=0.3, tau3=1e-3, rank=1)
        state = ModelState(w=w, b=b_prev, z=z)
        assert update_b(state, data, hp) == pytest.approx(b_prev, abs=1e-12)

    def test_huge_tau3_freezes_block(self):
        data = random_dataset(40, m=6)
        gen = make_rng(41)
        state = ModelState(w=gen.standard_normal(data.sample_shape), b=-0.7,
                           z=gen.standard_normal(6))
        hp = Hyperparams(beta=0.1, sigma=0.3, tau3=1e16, rank=1)
        assert update_b(state, data, hp) == pytest.approx(-0.7, abs=1e-10)

    def test_matches_golden_section_search(self):
        data = random_dataset(42, m=8, p=2, q=3)
        gen = make_rng(43)
        w = gen.standard_normal((2, 3))
        z = gen.standard_normal(8)
        b_prev = float(gen.standard_normal())
        hp = Hyperparams(beta=0.1, sigma=0.25, tau3=2e-3, rank=1)

        def objective(b):
            gap = z - margin_residuals(w, b, data)
            return hp.sigma * float(gap @ gap) + 0.5 * hp.tau3 * (b - b_prev) ** 2

        oracle = minimize_scalar(objective, bracket=(-10.0, 10.0),
                                 method="golden", options={"xtol": 1e-12})
        state = ModelState(w=w, b=b_prev, z=z)
        assert update_b(state, data, hp) == pytest.approx(oracle.x, abs=1e-8)


class TestFit:
    def test_maxit_zero_returns_initialization(self, synthetic):
        data, _, _ = synthetic
        hp = Hyperparams(beta=0.1, sigma=0.1, rank=2, maxit=0)
        result = fit(data, hp)
        assert result.trace.status == "max_iter"
        assert result.model.iter == 0
        np.testing.assert_array_equal(result.model.w, np.zeros(data.sample_shape))
        assert result.model.b == 0.0
        np.testing.assert_array_equal(result.model.z, np.zeros(data.m))
        assert len(result.trace) == 1  # initial row only

    def test_synthetic_recovery(self, synthetic, default_hp):
        data, _, _ = synthetic
        result = fit(data, default_hp)
        pred = np.where(data.xs.reshape(data.m, -1) @ result.model.w.ravel()
                        + result.model.b > 0, 1, -1)
        assert (pred == data.ys).all()
        assert heaviside_count(result.model.z) == 0
        assert svd(result.model.w).rank <= 2

    def test_trace_objective_non_increasing(self, synthetic, default_hp):
        data, _, _ = synthetic
        trace = fit(data, default_hp).trace
        diffs = np.diff(trace.objective)
        assert np.all(diffs <= 1e-10)

    def test_sufficient_decrease_from_trace(self, synthetic, default_hp):
        data, _, _ = synthetic
        trace = fit(data, default_hp).trace
        tau_min = min(default_hp.tau1, default_hp.tau2, default_hp.tau3)
        for k in range(1, len(trace)):
            drop = trace.objective[k - 1] - trace.objective[k]
            required = 0.5 * tau_min * (trace.w_step[k] ** 2
                                        + trace.z_step[k] ** 2
                                        + trace.b_step[k] ** 2)
            assert drop >= required - 1e-9

    def test_deterministic_bit_for_bit(self, synthetic, default_hp):
        data, _, _ = synthetic
        r1 = fit(data, default_hp)
        r2 = fit(data, default_hp)
        assert r1.trace.objective == r2.trace.objective
        assert r1.trace.w_step == r2.trace.w_step
        assert np.array_equal(r1.model.w, r2.model.w)
        assert r1.model.b == r2.model.b

    def test_objective_matches_reference_evaluation(self, synthetic, default_hp):
        data, _, _ = synthetic
        result = fit(data, default_hp)
        assert result.trace.objective[-1] == pytest.approx(
            penalized_objective(result.model, data, default_hp), rel=1e-12)

    def test_single_label_dataset_rejected(self):
        data = Dataset(xs=np.zeros((3, 1, 2)) + np.arange(3)[:, None, None],
                       ys=np.array([1, 1, 1]))
        with pytest.raises(InvalidArgumentError):
            fit(data, Hyperparams(beta=0.1, sigma=0.1, rank=1))

    def test_rank_bound_vs_shape_rejected(self, synthetic):
        data, _, _ = synthetic  # 8x6 samples
        with pytest.raises(InvalidArgumentError):
            fit(data, Hyperparams(beta=0.1, sigma=0.1, rank=6))

    def test_fixed_step_policy_descends(self, synthetic):
        data, _, _ = synthetic
        hp = Hyperparams(beta=0.1, sigma=0.1, rank=2, maxit=100,
                         step=StepPolicy(kind="fixed"))
        trace = fit(data, hp).trace
        assert np.all(np.diff(trace.objective) <= 1e-10)

    def test_paper_mode_divergence_raises_numerical_error(self, synthetic):
        # The printed z-update constants inflate the slack (their center
        # weights sum to ~2), which blows up on this configuration; the
        # solver must fail loudly with the iteration index, not crash.
        data, _, _ = synthetic
        hp = Hyperparams(beta=0.1, sigma=0.1, rank=2, z_update="paper")
        with pytest.raises(NumericalError) as info:
            fit(data, hp)
        assert info.value.iteration is not None

    def test_custom_init_used(self, synthetic, default_hp):
        data, _, _ = synthetic
        gen = make_rng(44)
        init = ModelState(w=np.zeros(data.sample_shape), b=0.5,
                          z=gen.standard_normal(data.m))
        result = fit(data, default_hp.with_(maxit=0), init=init)
        assert result.model.b == 0.5

    def test_rank_infeasible_init_rejected(self, synthetic, default_hp):
        data, _, _ = synthetic
        gen = make_rng(45)
        init = ModelState(w=gen.standard_normal(data.sample_shape), b=0.0,
                          z=np.zeros(data.m))  # full-rank start, bound is 2
        with pytest.raises(InvalidArgumentError, match="rank"):
            fit(data, default_hp, init=init)
