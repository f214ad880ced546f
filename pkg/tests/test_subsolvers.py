"""Ball and affine l1-prox subsolvers against oracles and hand KKT cases."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparseratio.models import SensingMatrix
from sparseratio.subsolvers import (
    BallProxProblem,
    BallProxSolution,
    SubsolverError,
    least_norm_solution,
    prox_l1_affine,
    prox_l1_ball,
    soft_threshold,
)

from oracles import (
    grid_min_scalar,
    projected_subgradient_affine,
    projected_subgradient_ball,
    prox_ball_oracle_1d,
    soft_threshold_oracle,
)


def ball_objective(x, c, alpha):
    return float(np.abs(x).sum() + 0.5 * alpha * np.sum((x - c) ** 2))


class TestSoftThreshold:
    def test_hand_case(self):
        np.testing.assert_array_equal(
            soft_threshold([3.0, -0.5, 0.0], 1.0), [2.0, 0.0, 0.0]
        )

    def test_tau_zero_is_identity(self):
        v = np.random.default_rng(0).standard_normal(6)
        np.testing.assert_array_equal(soft_threshold(v, 0.0), v)

    def test_matches_per_coordinate_grid(self):
        v = np.random.default_rng(1).standard_normal(8)
        out = soft_threshold(v, 0.3)
        for vi, oi in zip(v, out):
            assert abs(oi - soft_threshold_oracle(float(vi), 0.3)) <= 1e-8

    def test_rejects_negative_tau(self):
        with pytest.raises(ValueError):
            soft_threshold([1.0], -0.1)

    @given(
        st.lists(st.floats(-10, 10), min_size=1, max_size=8),
        st.floats(0.01, 5),
        st.floats(0.01, 100),
    )
    def test_scaling_covariance(self, v, tau, t):
        v = np.asarray(v)
        left = soft_threshold(t * v, t * tau)
        right = t * soft_threshold(v, tau)
        np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-12)


class TestProxL1Ball:
    def test_inactive_hand_case(self):
        sol = prox_l1_ball(BallProxProblem(c=[0.5], s=[0.0], R=4.0, alpha=1.0))
        assert isinstance(sol, BallProxSolution)
        np.testing.assert_array_equal(sol.x, [0.0])
        assert sol.mu == 0.0
        assert not sol.active

    def test_active_hand_case(self):
        # KKT by hand: x(mu) = (3 - 1)/(1 + mu) = 1 at mu = 1
        sol = prox_l1_ball(BallProxProblem(c=[3.0], s=[0.0], R=1.0, alpha=1.0))
        assert sol.active
        np.testing.assert_allclose(sol.x, [1.0], atol=1e-10)
        assert sol.mu == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_ball_returns_center(self):
        s = np.array([0.3, -0.7])
        sol = prox_l1_ball(BallProxProblem(c=[5.0, 5.0], s=s, R=0.0, alpha=2.0))
        np.testing.assert_array_equal(sol.x, s)
        assert sol.active and sol.mu == 0.0

    def test_matches_subgradient_oracle_n5(self):
        rng = np.random.default_rng(5)
        batch = 4
        c = rng.standard_normal((batch, 5)) * 2.0
        s = rng.standard_normal((batch, 5))
        R = rng.uniform(0.5, 3.0, batch)
        ref = projected_subgradient_ball(c, s, R, np.ones(batch), iters=500_000)
        for i in range(batch):
            sol = prox_l1_ball(BallProxProblem(c=c[i], s=s[i], R=R[i], alpha=1.0))
            assert np.linalg.norm(sol.x - ref[i]) <= 1e-5

    def test_feasibility_and_kkt_invariants(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            n = rng.integers(1, 9)
            p = BallProxProblem(
                c=rng.standard_normal(n) * 3.0,
                s=rng.standard_normal(n),
                R=float(rng.uniform(0.01, 4.0)),
                alpha=float(rng.uniform(0.2, 5.0)),
            )
            sol = prox_l1_ball(p, tol=1e-12)
            gap = float(np.sum((sol.x - p.s) ** 2)) - p.R
            assert gap <= 1e-12 * max(p.R, 1.0)
            assert sol.kkt_residual <= 1e-6
            # complementary slackness
            assert abs(sol.mu * gap) <= 1e-10 * (1.0 + sol.mu)
            if not sol.active:
                assert sol.mu == 0.0

    def test_phi_monotone_in_mu(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            n = rng.integers(1, 7)
            c = rng.standard_normal(n) * 2.0
            s = rng.standard_normal(n)
            alpha = float(rng.uniform(0.3, 3.0))
            mus = np.linspace(0.0, 50.0, 100)
            vals = []
            for mu in mus:
                x = soft_threshold((alpha * c + mu * s) / (alpha + mu), 1.0 / (alpha + mu))
                vals.append(float(np.sum((x - s) ** 2)))
            diffs = np.diff(vals)
            assert np.all(diffs <= 1e-12)

    def test_exact_on_1d_grid_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            c = float(rng.uniform(-4, 4))
            s = float(rng.uniform(-2, 2))
            R = float(rng.uniform(0.01, 5.0))
            alpha = float(rng.uniform(0.1, 4.0))
            sol = prox_l1_ball(BallProxProblem(c=[c], s=[s], R=R, alpha=alpha))
            ref = prox_ball_oracle_1d(c, s, R, alpha)
            assert abs(float(sol.x[0]) - ref) <= 1e-6

    def test_input_validation(self):
        with pytest.raises(ValueError):
            BallProxProblem(c=[1.0], s=[0.0], R=-1.0, alpha=1.0)
        with pytest.raises(ValueError):
            BallProxProblem(c=[np.inf], s=[0.0], R=1.0, alpha=1.0)
        with pytest.raises(ValueError):
            BallProxProblem(c=[1.0], s=[0.0, 1.0], R=1.0, alpha=1.0)
        with pytest.raises(ValueError):
            BallProxProblem(c=[1.0], s=[0.0], R=1.0, alpha=0.0)
        with pytest.raises(ValueError):
            prox_l1_ball(BallProxProblem(c=[1.0], s=[0.0], R=1.0, alpha=1.0), tol=0.0)

    def test_pathological_scaling_raises(self):
        # with s = 0 the gap (alpha c - 1)/(alpha + mu) decays like 1/mu and
        # cannot reach the vanishing radius before the multiplier cap
        p = BallProxProblem(c=[2.0], s=[0.0], R=1e-40, alpha=1.0)
        with pytest.raises(SubsolverError):
            prox_l1_ball(p)


class TestLeastNormSolution:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(least_norm_solution(SensingMatrix(np.eye(3)), b), b)

    def test_line_case(self):
        x = least_norm_solution(SensingMatrix([[1.0, 1.0]]), [2.0])
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-14)

    def test_random_wide_system(self):
        rng = np.random.default_rng(9)
        A = SensingMatrix(rng.standard_normal((8, 32)))
        b = rng.standard_normal(8)
        x = least_norm_solution(A, b)
        assert np.linalg.norm(A.entries @ x - b) <= 1e-10 * np.linalg.norm(b)
        # x must be orthogonal to ker A; build a null basis from the full QR
        q_full, _ = np.linalg.qr(A.entries.T, mode="complete")
        null = q_full[:, 8:]
        rng2 = np.random.default_rng(10)
        for _ in range(10):
            v = null @ rng2.standard_normal(null.shape[1])
            assert abs(float(x @ v)) <= 1e-10 * max(1.0, np.linalg.norm(v))

    def test_rank_deficient_raises(self):
        with pytest.raises(SubsolverError):
            least_norm_solution(SensingMatrix(np.ones((2, 5))), [1.0, 1.0])

    def test_wrong_length_b(self):
        with pytest.raises(ValueError):
            least_norm_solution(SensingMatrix(np.eye(3)), [1.0, 2.0])


class TestProxL1Affine:
    def test_symmetric_line_case(self):
        A = SensingMatrix([[1.0, 1.0]])
        x = prox_l1_affine([0.0, 0.0], A, [2.0], alpha=1.0)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-9)
        # grid cross-check along the feasible line x = (t, 2 - t)
        t_star, _ = grid_min_scalar(
            lambda t: np.abs(t) + np.abs(2.0 - t) + 0.5 * (t**2 + (2.0 - t) ** 2),
            -3.0,
            5.0,
        )
        np.testing.assert_allclose(x[0], t_star, atol=1e-6)

    def test_zero_rhs(self):
        A = SensingMatrix([[1.0, 1.0]])
        np.testing.assert_allclose(
            prox_l1_affine([0.0, 0.0], A, [0.0], alpha=1.0), [0.0, 0.0], atol=1e-12
        )

    def test_objective_matches_subgradient_oracle(self):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((4, 10))
        b = rng.standard_normal(4)
        c = rng.standard_normal(10)
        x = prox_l1_affine(c, SensingMatrix(A), b, alpha=1.0)
        ref = projected_subgradient_affine(A[None], b[None], c[None], [1.0])[0]
        assert ball_objective(x, c, 1.0) <= ball_objective(ref, c, 1.0) + 1e-6

    def test_constraint_holds_to_machine_precision(self):
        rng = np.random.default_rng(12)
        A = rng.standard_normal((5, 14))
        b = rng.standard_normal(5)
        x = prox_l1_affine(rng.standard_normal(14), SensingMatrix(A), b, alpha=0.7)
        assert np.linalg.norm(A @ x - b) <= 1e-12 * max(1.0, np.linalg.norm(b))

    def test_max_iter_exhaustion_raises_with_residuals(self):
        rng = np.random.default_rng(13)
        A = SensingMatrix(rng.standard_normal((3, 9)))
        b = rng.standard_normal(3)
        with pytest.raises(SubsolverError) as info:
            prox_l1_affine(np.zeros(9), A, b, alpha=1.0, max_iter=1)
        err = info.value
        assert err.primal is not None and err.dual is not None
        assert err.iterations == 1

    def test_input_validation(self):
        A = SensingMatrix([[1.0, 1.0]])
        with pytest.raises(ValueError):
            prox_l1_affine([0.0, 0.0], A, [1.0], alpha=0.0)
        with pytest.raises(ValueError):
            prox_l1_affine([0.0], A, [1.0], alpha=1.0)  # wrong c length
        with pytest.raises(ValueError):
            prox_l1_affine([0.0, 0.0], A, [1.0], alpha=1.0, tol=0.0)
        with pytest.raises(ValueError):
            prox_l1_affine([0.0, 0.0], A, [1.0], alpha=1.0, max_iter=0)
