import numpy as np
import pytest

from hoplab.sim import (RobotParams, TerrainConfig, contact_jacobian,
                        forward_dynamics, foot_position, impact_map,
                        mass_matrix, mechanical_energy)
from oracles import impulse_nullspace_oracle, lagrangian_dynamics_oracle

PARAMS = RobotParams()


@pytest.fixture(scope="module")
def oracle():
    return lagrangian_dynamics_oracle(PARAMS)


def random_state(rng):
    q = np.array([rng.uniform(0.1, 0.5), rng.uniform(-2.5, 2.5),
                  rng.uniform(-2.5, 2.5)])
    qd = rng.uniform(-6.0, 6.0, size=3)
    return q, qd


def test_free_fall_acceleration():
    for pose in [(1.3, 2.3), (1.0, 1.55), (0.0, 0.0), (-0.7, 1.1)]:
        q = np.array([0.2, *pose])
        qdd, lam = forward_dynamics(PARAMS, q, np.zeros(3), np.zeros(2))
        assert lam == 0.0
        np.testing.assert_allclose(qdd, [-9.81, 0.0, 0.0], atol=1e-12)


def test_static_equilibrium_in_contact():
    # choose torques + contact force that exactly balance gravity
    q = np.array([0.17, 0.9, 1.9])
    m = PARAMS
    g_vec = np.array([m.total_mass * m.gravity, 0.0, 0.0])
    # gravity torque components from the potential gradient
    mu1 = m.m_upper * 0.05 + m.m_shank * 0.1
    mu2 = m.m_shank * 0.05
    b = q[1] - q[2]
    g_vec[1] = m.gravity * (mu1 * np.sin(q[1]) + mu2 * np.sin(b))
    g_vec[2] = -m.gravity * mu2 * np.sin(b)
    J = contact_jacobian(m, q)
    A = np.zeros((3, 3))
    A[1, 0] = 1.0
    A[2, 1] = 1.0
    A[:, 2] = J
    sol = np.linalg.solve(A, g_vec)
    tau, lam_expected = sol[:2], sol[2]
    assert lam_expected > 0
    qdd, lam = forward_dynamics(m, q, np.zeros(3), tau, contact_active=True)
    np.testing.assert_allclose(qdd, 0.0, atol=1e-10)
    assert lam == pytest.approx(lam_expected, rel=1e-10)


def test_forward_dynamics_matches_lagrangian_oracle(oracle):
    free, contact, _ = oracle
    rng = np.random.default_rng(7)
    for _ in range(100):
        q, qd = random_state(rng)
        tau = rng.uniform(-1.3, 1.3, size=2)
        qdd, _ = forward_dynamics(PARAMS, q, qd, tau)
        ref = free(q, qd, tau)
        np.testing.assert_allclose(qdd, ref, rtol=1e-8, atol=1e-10)


def test_contact_dynamics_matches_lagrangian_oracle(oracle):
    _, contact, _ = oracle
    rng = np.random.default_rng(8)
    for _ in range(100):
        q, qd = random_state(rng)
        tau = rng.uniform(-1.3, 1.3, size=2)
        slope = rng.uniform(-0.9, 0.9)
        terr = TerrainConfig(floor_height=0.0, floor_slope=slope)
        qdd, lam = forward_dynamics(PARAMS, q, qd, tau, contact_active=True,
                                    terrain=terr)
        ref_qdd, ref_lam = contact(q, qd, tau, slope)
        np.testing.assert_allclose(qdd, ref_qdd, rtol=1e-8, atol=1e-10)
        assert lam == pytest.approx(ref_lam, rel=1e-8, abs=1e-10)


def test_energy_matches_oracle(oracle):
    _, _, energy = oracle
    rng = np.random.default_rng(9)
    for _ in range(20):
        q, qd = random_state(rng)
        assert mechanical_energy(PARAMS, q, qd) == pytest.approx(
            energy(q, qd), rel=1e-10)


def test_mass_matrix_spd():
    rng = np.random.default_rng(10)
    for _ in range(50):
        q, _ = random_state(rng)
        M = mass_matrix(PARAMS, q)
        np.testing.assert_allclose(M, M.T, atol=1e-15)
        assert np.linalg.eigvalsh(M).min() > 0


class TestImpactMap:
    def test_zero_velocity(self):
        q = np.array([0.095, 0.9, 1.9])
        out = impact_map(PARAMS, q, np.zeros(3))
        np.testing.assert_allclose(out, 0.0, atol=1e-15)

    def test_nullspace_velocity_unchanged(self):
        rng = np.random.default_rng(11)
        q = np.array([0.12, 0.7, 1.5])
        J = contact_jacobian(PARAMS, q)
        _, _, vt = np.linalg.svd(J.reshape(1, 3))
        for i in (1, 2):
            v = vt[i] * rng.uniform(0.5, 2.0)
            out = impact_map(PARAMS, q, v)
            np.testing.assert_allclose(out, v, atol=1e-12)

    def test_properties_and_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(500):
            q = np.array([rng.uniform(0.05, 0.3), rng.uniform(-2.0, 2.0),
                          rng.uniform(-2.0, 2.0)])
            qd = rng.uniform(-5.0, 5.0, size=3)
            J = contact_jacobian(PARAMS, q)
            if J @ qd >= 0:
                qd -= 2 * (J @ qd) / (J @ J) * J  # make it a closing impact
            out = impact_map(PARAMS, q, qd)
            assert abs(J @ out) < 1e-10
            M = mass_matrix(PARAMS, q)
            ke_minus = 0.5 * qd @ M @ qd
            ke_plus = 0.5 * out @ M @ out
            assert ke_plus <= ke_minus + 1e-12
            ref = impulse_nullspace_oracle(M, J, qd)
            np.testing.assert_allclose(out, ref, rtol=1e-8, atol=1e-10)
