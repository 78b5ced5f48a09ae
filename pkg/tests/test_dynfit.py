import numpy as np
import pytest

from hoplab.dynfit import (FitConfig, GmmPrior, IllConditionedFitError,
                           InsufficientDataError, LinearGaussianDynamics,
                           fit_gmm, fit_timestep, fit_trajectory_dynamics,
                           posterior_moments, transitions_from_trajectory)
from hoplab.sim import RobotParams, TerrainConfig, Trajectory, rollout
from oracles import ridge_fit_oracle


def random_spd(rng, d, lo=0.1, hi=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(lo, hi, size=d)) @ q.T


class TestGmm:
    def test_identical_samples(self):
        x = np.tile(np.arange(16.0), (40, 1))
        prior = fit_gmm(x, k=3, seed=0)
        assert np.isfinite(prior.log_likelihoods[-1])
        for cov in prior.covariances:
            assert np.linalg.eigvalsh(cov).min() >= 1e-6 - 1e-12

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(0)
        a = rng.normal(0.0, 0.5, size=(200, 4))
        b = rng.normal(12.0, 0.5, size=(200, 4))
        prior = fit_gmm(np.vstack([a, b]), k=2, seed=1)
        # responsibilities assign nearly all points to their own cluster
        ra = np.array([prior.responsibilities(p).max() for p in a[:50]])
        rb = np.array([prior.responsibilities(p).max() for p in b[:50]])
        assert np.mean(np.concatenate([ra, rb]) > 0.99) > 0.99
        np.testing.assert_allclose(sorted(prior.weights), [0.5, 0.5], atol=0.02)

    def test_loglik_monotone_within_tol(self):
        rng = np.random.default_rng(2)
        x = np.vstack([rng.normal(i, 1.0, size=(60, 6)) for i in range(3)])
        prior = fit_gmm(x, k=3, seed=3)
        ll = np.array(prior.log_likelihoods)
        assert np.all(np.diff(ll) >= -1e-9 * np.abs(ll[:-1]))

    def test_mixture_moments_single_component(self):
        mu = np.arange(5.0)
        cov = np.eye(5) * 2.0
        prior = GmmPrior(weights=np.array([1.0]), means=mu[None, :],
                         covariances=cov[None, :, :])
        m, p = prior.moments_at(np.zeros(5))
        np.testing.assert_allclose(m, mu)
        np.testing.assert_allclose(p, cov)


class TestPosteriorMoments:
    def test_zero_pseudocount_gives_empirical(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((30, 16))
        prior = fit_gmm(x, k=2, seed=0, pseudo_count=0.0)
        mean, cov = posterior_moments(x, prior)
        np.testing.assert_allclose(mean, x.mean(axis=0))
        emp = np.cov(x.T, bias=True)
        np.testing.assert_allclose(cov, emp, atol=1e-12)

    def test_large_sample_limit(self):
        rng = np.random.default_rng(5)
        true_mu = rng.standard_normal(16)
        x = true_mu + 0.3 * rng.standard_normal((10_000, 16))
        prior = fit_gmm(x[:200], k=3, seed=1, pseudo_count=1.0)
        mean, cov = posterior_moments(x, prior)
        emp_cov = np.cov(x.T, bias=True)
        assert np.linalg.norm(mean - x.mean(axis=0)) / np.linalg.norm(
            x.mean(axis=0)) < 1e-2
        assert (np.linalg.norm(cov - emp_cov) / np.linalg.norm(emp_cov)) < 1e-2

    def test_single_sample_is_psd(self):
        rng = np.random.default_rng(6)
        pool = rng.standard_normal((50, 16))
        prior = fit_gmm(pool, k=2, seed=2, pseudo_count=1.0)
        mean, cov = posterior_moments(pool[:1], prior)
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        assert np.linalg.eigvalsh(cov).min() > 0


class TestFitTimestep:
    def test_recovers_affine_map_noiseless(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((7, 9)) * 0.5
        c = rng.standard_normal(7)
        xu = rng.standard_normal((120, 9))
        x_next = xu @ A.T + c
        data = np.hstack([xu, x_next])
        mean = data.mean(axis=0)
        cov = np.cov(data.T, bias=True)
        f_xu, f_c, F = fit_timestep(mean, cov, lam=0.0)
        np.testing.assert_allclose(f_xu, A, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(f_c, c, rtol=1e-8, atol=1e-8)

    def test_infinite_ridge_limit(self):
        rng = np.random.default_rng(8)
        mean = rng.standard_normal(16)
        cov = random_spd(rng, 16)
        f_xu, f_c, _ = fit_timestep(mean, cov, lam=1e6)
        target = np.hstack([np.eye(7), np.zeros((7, 2))])
        assert np.abs(f_xu - target).max() < 1e-3
        np.testing.assert_allclose(f_c, mean[9:] - mean[:7], atol=1e-3)

    @pytest.mark.parametrize("lam", [0.0, 1e-2, 1.0, 1e6])
    def test_matches_ridge_oracle(self, lam):
        rng = np.random.default_rng(9)
        for _ in range(50):
            mean = rng.standard_normal(16)
            cov = random_spd(rng, 16)
            f_xu, f_c, F = fit_timestep(mean, cov, lam=lam)
            of_xu, of_c, oF = ridge_fit_oracle(mean, cov, 7, lam)
            np.testing.assert_allclose(f_xu, of_xu, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(f_c, of_c, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(F, oF, rtol=1e-8, atol=1e-10)

    def test_singular_unregularized_raises_with_cond(self):
        mean = np.zeros(16)
        cov = np.zeros((16, 16))
        cov[0, 0] = 1.0  # rank-1 input covariance
        with pytest.raises(IllConditionedFitError) as exc:
            fit_timestep(mean, cov, lam=0.0)
        assert exc.value.cond > 1e8

    def test_F_is_psd(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            mean = rng.standard_normal(16)
            cov = random_spd(rng, 16)
            _, _, F = fit_timestep(mean, cov, lam=1e-2)
            np.testing.assert_allclose(F, F.T, atol=1e-12)
            assert np.linalg.eigvalsh(F).min() >= 1e-6 - 1e-12


class _LinearPolicy:
    def __init__(self, gain, rng):
        self.gain = gain
        self.rng = rng

    def action_mean(self, x, t):
        return self.gain @ x


def _linear_system_trajectories(rng, n_traj=5, T=40, noise=0.005):
    """Rollouts of a known stable linear system disguised as trajectories."""
    A = np.eye(7) + 0.05 * rng.standard_normal((7, 7))
    A *= 0.98 / max(1.0, np.abs(np.linalg.eigvals(A)).max())
    B = 0.3 * rng.standard_normal((7, 2))
    trajs = []
    for _ in range(n_traj):
        x = rng.standard_normal(7)
        xs, us = [x], []
        for t in range(T):
            u = rng.normal(0.0, 1.0, size=2)
            x = A @ x + B @ u + noise * rng.standard_normal(7)
            us.append(u)
            xs.append(x)
        trajs.append(Trajectory(states=np.array(xs), actions=np.array(us),
                                costs=np.zeros(T), events=[""] * T))
    return A, B, trajs


def test_fit_trajectory_dynamics_recovers_linear_system():
    rng = np.random.default_rng(11)
    A, B, trajs = _linear_system_trajectories(rng)
    dyn = fit_trajectory_dynamics(trajs, FitConfig(ridge_lambda=1e-2), seed=0)
    true = np.hstack([A, B])
    errs = [np.linalg.norm(dyn.f_xu[t] - true) / np.linalg.norm(true)
            for t in range(dyn.horizon)]
    assert np.mean(errs) < 0.10


def test_fit_zero_noise_trajectories_survives_via_prior():
    rng = np.random.default_rng(12)
    A, B, trajs = _linear_system_trajectories(rng, n_traj=1, noise=0.0)
    trajs = trajs * 5  # five identical rollouts: zero empirical variance
    dyn = fit_trajectory_dynamics(trajs, FitConfig(ridge_lambda=1e-2), seed=0)
    assert np.all(np.isfinite(dyn.f_xu))
    for t in range(dyn.horizon):
        assert np.linalg.eigvalsh(dyn.F[t]).min() >= 1e-6 - 1e-12


def test_insufficient_data_error_on_missing_step():
    rng = np.random.default_rng(13)
    _, _, trajs = _linear_system_trajectories(rng, n_traj=2, T=10)
    short = Trajectory(states=trajs[0].states[:5], actions=trajs[0].actions[:4],
                       costs=np.zeros(4), events=[""] * 4,
                       terminated_early=True, termination_reason="fall")
    with pytest.raises(InsufficientDataError):
        fit_trajectory_dynamics([short], FitConfig(), T=10, seed=0)


def test_impact_step_dynamics_stand_out():
    # drop onto flat ground under a gentle leg-extension policy; the fitted
    # velocity rows change far more across the impact step than they wobble
    # between consecutive flight steps
    class GentleExtend:
        def action_mean(self, x, t):
            return np.array([-0.05 * x[2] - 0.002 * x[3],
                             -0.03 * x[4] - 0.001 * x[5]])

    x0 = np.array([0.3, 0.0, 0.25, 0.0, 0.5, 0.0, 0.0])
    trajs = [rollout(GentleExtend(), x0, TerrainConfig(), T=30,
                     noise_cov=0.02**2 * np.eye(2), rng_seed=s)
             for s in range(40)]
    dyn = fit_trajectory_dynamics(trajs, FitConfig(),
                                  T=min(len(t) for t in trajs), seed=0)
    cbar = np.array([np.mean([t.states[i, 6] for t in trajs])
                     for i in range(dyn.horizon + 1)])
    t_imp = int(np.argmax(cbar > 0.5))  # first state index in contact
    assert 5 < t_imp < dyn.horizon - 2
    vrows = [1, 3, 5]
    flight = list(range(t_imp - 3))
    mean_flight = np.mean([dyn.f_xu[t][vrows] for t in flight], axis=0)
    d_imp = max(
        np.linalg.norm(dyn.f_xu[t_imp - 1][vrows] - mean_flight),
        np.linalg.norm(dyn.f_xu[t_imp][vrows] - mean_flight))
    wobble = np.mean([np.linalg.norm(dyn.f_xu[t + 1][vrows] - dyn.f_xu[t][vrows])
                      for t in flight[:-1]])
    assert d_imp > 10 * wobble


def test_serialization_roundtrip():
    rng = np.random.default_rng(14)
    _, _, trajs = _linear_system_trajectories(rng, T=8)
    dyn = fit_trajectory_dynamics(trajs, FitConfig(), seed=0)
    back = LinearGaussianDynamics.from_json(dyn.to_json())
    np.testing.assert_array_equal(back.f_xu, dyn.f_xu)
    np.testing.assert_array_equal(back.F, dyn.F)
    np.testing.assert_array_equal(back.sample_counts, dyn.sample_counts)
