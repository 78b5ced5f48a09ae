import numpy as np
import pytest

from hoplab.dynfit import LinearGaussianDynamics
from hoplab.ilqr import (BackwardPassError, QuadraticCostExpansion,
                         TimeVaryingLinearGaussianPolicy, augment_cost,
                         backward_pass, gaussian_kl, kl_step, quadratize_cost,
                         select_cost_mode, solve_box_qp, stage_cost)
from oracles import gaussian_kl as kl_oracle
from oracles import lqr_riccati_oracle


class TestStageCost:
    def test_minima(self):
        assert stage_cost(np.array([0, 0, 0.0, 0, 0.0, 0, 0]), np.zeros(2),
                          "jump") == 0.0
        assert stage_cost(np.array([0, 0, 1.3, 0, 2.3, 0, 0]), np.zeros(2),
                          "land") == 0.0

    def test_jump_cost_at_land_pose(self):
        x = np.array([0.2, 0, 1.3, 0, 2.3, 0, 0])
        assert stage_cost(x, np.zeros(2), "jump") == pytest.approx(
            0.2 * 1.69 + 0.2 * 5.29)

    def test_torque_term(self):
        x = np.array([0, 0, 1.3, 0, 2.3, 0, 0])
        assert stage_cost(x, np.array([1.0, -0.5]), "land") == pytest.approx(
            0.001 * 1.25)


class TestSelectMode:
    def test_contact_is_jump(self):
        assert select_cost_mode(np.array([0.3, 0, 0, 0, 0, 0, 1.0])) == "jump"

    def test_airborne_high_is_land(self):
        assert select_cost_mode(np.array([0.30, 0, 0, 0, 0, 0, 0.0])) == "land"

    def test_airborne_low_is_jump(self):
        assert select_cost_mode(np.array([0.14, 0, 0, 0, 0, 0, 0.0])) == "jump"


class TestQuadratize:
    def test_hessian_structure(self):
        exp = quadratize_cost("jump", np.zeros(7), np.zeros(2))
        diag = np.diag(exp.hess)
        expected = np.zeros(9)
        expected[[2, 4, 7, 8]] = [0.4, 0.4, 0.002, 0.002]
        np.testing.assert_allclose(diag, expected)
        assert np.count_nonzero(exp.hess - np.diag(diag)) == 0

    def test_gradient_zero_at_minimum(self):
        x = np.array([0.5, 0, 1.3, 0, 2.3, 0, 0])
        exp = quadratize_cost("land", x, np.zeros(2))
        np.testing.assert_allclose(exp.grad, 0.0, atol=1e-15)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        eps = 1e-6
        for _ in range(100):
            x = rng.uniform(-2, 2, size=7)
            u = rng.uniform(-1, 1, size=2)
            mode = "jump" if rng.random() < 0.5 else "land"
            exp = quadratize_cost(mode, x, u)
            z = np.concatenate([x, u])
            for i in range(9):
                dz = np.zeros(9)
                dz[i] = eps
                zp, zm = z + dz, z - dz
                fd = (stage_cost(zp[:7], zp[7:], mode)
                      - stage_cost(zm[:7], zm[7:], mode)) / (2 * eps)
                assert exp.grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestAugmentCost:
    def _logpdf(self, u, mean, sig):
        d = u - mean
        return (-0.5 * d @ np.linalg.solve(sig, d)
                - 0.5 * np.log(np.linalg.det(2 * np.pi * sig)))

    def test_exact_quadratic_against_direct_evaluation(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            K = rng.standard_normal((2, 7))
            k = rng.standard_normal(2)
            x_hat = rng.standard_normal(7)
            A = rng.standard_normal((2, 2))
            sig = A @ A.T + 0.1 * np.eye(2)
            x_bar = rng.standard_normal(7)
            u_bar = rng.standard_normal(2)
            base = quadratize_cost("jump", x_bar, u_bar)
            eta = float(rng.uniform(0.1, 10.0))
            aug = augment_cost(base, k, K, x_hat, sig, eta, x_bar, u_bar)
            z_bar = np.concatenate([x_bar, u_bar])
            for _ in range(30):
                z = z_bar + 0.5 * rng.standard_normal(9)
                dz = z - z_bar
                model = (aug.const + aug.grad @ dz + 0.5 * dz @ aug.hess @ dz)
                direct = (stage_cost(z[:7], z[7:], "jump") / eta
                          - self._logpdf(z[7:], k + K @ (z[:7] - x_hat), sig))
                assert model == pytest.approx(direct, rel=1e-10, abs=1e-10)

    def test_eta_one_zero_cost_recovers_old_policy(self):
        rng = np.random.default_rng(2)
        K = rng.standard_normal((2, 7)) * 0.2
        k = rng.standard_normal(2)
        x_hat = rng.standard_normal(7)
        sig = 0.01 * np.eye(2)
        x_bar = rng.standard_normal(7)
        u_bar = k + K @ (x_bar - x_hat)
        zero = QuadraticCostExpansion(grad=np.zeros(9), hess=np.zeros((9, 9)),
                                      const=0.0, mode="jump")
        aug = augment_cost(zero, k, K, x_hat, sig, 1.0, x_bar, u_bar)
        # minimizing the u-block reproduces the old policy exactly
        Q_uu = aug.hess[7:, 7:]
        Q_u = aug.grad[7:]
        du = -np.linalg.solve(Q_uu, Q_u)
        np.testing.assert_allclose(du, 0.0, atol=1e-12)
        K_new = -np.linalg.solve(Q_uu, aug.hess[7:, :7])
        np.testing.assert_allclose(K_new, K, atol=1e-10)

    def test_rejects_bad_eta(self):
        base = quadratize_cost("jump", np.zeros(7), np.zeros(2))
        with pytest.raises(ValueError):
            augment_cost(base, np.zeros(2), np.zeros((2, 7)), np.zeros(7),
                         0.01 * np.eye(2), 0.0, np.zeros(7), np.zeros(2))


class TestBoxQp:
    def _enumerate_oracle(self, H, g, lo, hi):
        # all KKT candidates for m = 2: interior, edges, corners
        cands = []
        x_free = np.linalg.solve(H, -g)
        cands.append(np.clip(x_free, lo, hi))
        for i in range(2):
            for b in (lo[i], hi[i]):
                j = 1 - i
                xj = -(g[j] + H[j, i] * b) / H[j, j]
                cand = np.empty(2)
                cand[i] = b
                cand[j] = np.clip(xj, lo[j], hi[j])
                cands.append(cand)
        for bi in (lo[0], hi[0]):
            for bj in (lo[1], hi[1]):
                cands.append(np.array([bi, bj]))
        vals = [0.5 * c @ H @ c + g @ c for c in cands]
        return cands[int(np.argmin(vals))]

    def test_against_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            A = rng.standard_normal((2, 2))
            H = A @ A.T + 0.2 * np.eye(2)
            g = rng.standard_normal(2) * 2
            lo = -rng.uniform(0.1, 2.0, size=2)
            hi = rng.uniform(0.1, 2.0, size=2)
            x, clamped = solve_box_qp(H, g, lo, hi)
            ref = self._enumerate_oracle(H, g, lo, hi)
            obj = 0.5 * x @ H @ x + g @ x
            obj_ref = 0.5 * ref @ H @ ref + g @ ref
            assert obj <= obj_ref + 1e-9
            np.testing.assert_allclose(x, ref, atol=1e-6)

    def test_interior_solution_unclamped(self):
        H = np.diag([2.0, 4.0])
        g = np.array([-0.2, 0.4])
        x, clamped = solve_box_qp(H, g, np.array([-1.0, -1.0]),
                                  np.array([1.0, 1.0]))
        np.testing.assert_allclose(x, [0.1, -0.1], atol=1e-12)
        assert not clamped.any()


def _lq_dynamics(rng, n, m, T):
    A = rng.standard_normal((n, n))
    A *= 0.95 / max(1.0, np.abs(np.linalg.eigvals(A)).max())
    B = rng.standard_normal((n, m))
    f_xu = np.tile(np.hstack([A, B]), (T, 1, 1))
    f_c = np.zeros((T, n))
    F = np.tile(1e-8 * np.eye(n), (T, 1, 1))
    return A, B, LinearGaussianDynamics(f_xu=f_xu, f_c=f_c, F=F)


def _lq_expansions(Q, R, T):
    n, m = Q.shape[0], R.shape[0]
    hess = np.zeros((n + m, n + m))
    hess[:n, :n] = Q
    hess[n:, n:] = R
    return [QuadraticCostExpansion(grad=np.zeros(n + m), hess=hess,
                                   const=0.0, mode="jump") for _ in range(T)]


class TestBackwardPass:
    def test_zero_cost_gives_zero_update(self):
        rng = np.random.default_rng(4)
        _, _, dyn = _lq_dynamics(rng, 4, 2, 10)
        exps = [QuadraticCostExpansion(grad=np.zeros(6),
                                       hess=np.zeros((6, 6)), const=0.0,
                                       mode="jump") for _ in range(10)]
        bp = backward_pass(dyn, exps, np.zeros((10, 2)), u_limit=1.0)
        np.testing.assert_allclose(bp.du, 0.0, atol=1e-12)
        np.testing.assert_allclose(bp.K, 0.0, atol=1e-12)

    def test_matches_riccati_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, 4))
            T = int(rng.integers(5, 61))
            A, B, dyn = _lq_dynamics(rng, n, m, T)
            Qh = rng.standard_normal((n, n))
            Q = Qh @ Qh.T + 0.1 * np.eye(n)
            Rh = rng.standard_normal((m, m))
            R = Rh @ Rh.T + 0.5 * np.eye(m)
            bp = backward_pass(dyn, _lq_expansions(Q, R, T),
                               np.zeros((T, m)), u_limit=1e9)
            gains = lqr_riccati_oracle(A, B, Q, R, np.zeros((n, m)), T)
            for t in range(T):
                np.testing.assert_allclose(bp.K[t], -gains[t], atol=1e-8)

    def test_one_step_clamp_zeroes_feedback_row(self):
        # 1-D action whose unconstrained minimizer is far outside the box
        dyn = LinearGaussianDynamics(
            f_xu=np.array([[[0.5, 1.0]]]), f_c=np.zeros((1, 1)),
            F=np.full((1, 1, 1), 1e-8))
        hess = np.array([[1.0, 0.3], [0.3, 2.0]])
        exps = [QuadraticCostExpansion(grad=np.array([0.0, -10.0]), hess=hess,
                                       const=0.0, mode="jump")]
        bp = backward_pass(dyn, exps, np.zeros((1, 1)), u_limit=1.0)
        assert bp.du[0, 0] == pytest.approx(1.0)
        assert bp.clamped[0, 0]
        np.testing.assert_allclose(bp.K[0], 0.0)

    def test_value_reset_blocks_information_flow(self):
        rng = np.random.default_rng(6)
        n, m, T, s = 3, 2, 10, 5
        _, _, dyn = _lq_dynamics(rng, n, m, T)
        Q = np.eye(n)
        R = np.eye(m)
        exps = _lq_expansions(Q, R, T)
        perturbed = list(exps)
        for t in range(s, T):
            g = rng.standard_normal(n + m)
            perturbed[t] = QuadraticCostExpansion(
                grad=g, hess=exps[t].hess * rng.uniform(0.5, 2.0),
                const=0.0, mode="land")
        a = backward_pass(dyn, exps, np.zeros((T, m)), u_limit=1e9,
                          cost_switch_steps={s})
        b = backward_pass(dyn, perturbed, np.zeros((T, m)), u_limit=1e9,
                          cost_switch_steps={s})
        np.testing.assert_allclose(a.du[:s], b.du[:s], atol=1e-12)
        np.testing.assert_allclose(a.K[:s], b.K[:s], atol=1e-12)
        np.testing.assert_allclose(a.V_x[s - 1], b.V_x[s - 1], atol=1e-12)

    def test_quu_failure_raises(self):
        dyn = LinearGaussianDynamics(
            f_xu=np.array([[[1.0, 1.0]]]), f_c=np.zeros((1, 1)),
            F=np.full((1, 1, 1), 1e-8))
        hess = np.zeros((2, 2))
        hess[1, 1] = -1.0  # concave in u beyond any allowed regularization
        exps = [QuadraticCostExpansion(grad=np.zeros(2), hess=hess,
                                       const=0.0, mode="jump")]
        with pytest.raises(BackwardPassError):
            backward_pass(dyn, exps, np.zeros((1, 1)), u_limit=1.0)


class TestKl:
    def test_identical_policies_zero(self):
        rng = np.random.default_rng(7)
        T, n, m = 5, 7, 2
        pol = TimeVaryingLinearGaussianPolicy(
            k=rng.standard_normal((T, m)), K=rng.standard_normal((T, m, n)),
            x_hat=rng.standard_normal((T, n)),
            u_hat=np.zeros((T, m)), sigma=0.01)
        kl = kl_step(pol, pol, rng.standard_normal((T, n)))
        np.testing.assert_allclose(kl, 0.0, atol=1e-12)

    def test_equal_covariance_closed_form(self):
        d = np.array([0.3, -0.4])
        sig = 0.01
        val = gaussian_kl(np.zeros(2), sig * np.eye(2), d, sig * np.eye(2))
        assert val == pytest.approx(d @ d / (2 * sig))

    def test_matches_reference_and_monte_carlo(self):
        rng = np.random.default_rng(8)
        A = rng.standard_normal((2, 2))
        sig0 = A @ A.T + 0.5 * np.eye(2)
        B = rng.standard_normal((2, 2))
        sig1 = B @ B.T + 0.5 * np.eye(2)
        mu0 = rng.standard_normal(2)
        mu1 = rng.standard_normal(2)
        val = gaussian_kl(mu0, sig0, mu1, sig1)
        assert val == pytest.approx(kl_oracle(mu0, sig0, mu1, sig1), rel=1e-12)
        # Monte-Carlo estimate within 3 standard errors
        ns = 1_000_000
        z = rng.multivariate_normal(mu0, sig0, size=ns)
        def logpdf(z, mu, sig):
            d = z - mu
            sol = np.linalg.solve(sig, d.T).T
            return (-0.5 * np.sum(d * sol, axis=1)
                    - 0.5 * np.log(np.linalg.det(2 * np.pi * sig)))
        samples = logpdf(z, mu0, sig0) - logpdf(z, mu1, sig1)
        se = samples.std() / np.sqrt(ns)
        assert abs(samples.mean() - val) < 3 * se

    def test_rejects_non_spd(self):
        with pytest.raises(ValueError):
            gaussian_kl(np.zeros(2), -np.eye(2), np.zeros(2), np.eye(2))
