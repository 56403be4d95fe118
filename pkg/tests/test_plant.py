import numpy as np
import pytest

from flexatt.errors import ConfigurationError, FrequencyError
from flexatt.plant import (AxisDisturbance, DisturbanceModel, F_terms, InertiaParameterization, PlantState,
                           SpacecraftParams, Tone, disturbance_eval, inertia_vector, plant_rhs, regressor_L, split_L)
from flexatt.quat import Quaternion, normalize
from flexatt.scenario import EXAMPLE_C, EXAMPLE_DELTA, EXAMPLE_K, example_disturbance, example_inertia


@pytest.fixture
def craft():
    return SpacecraftParams(example_inertia(20.0), EXAMPLE_DELTA, EXAMPLE_C, EXAMPLE_K)


@pytest.fixture
def par():
    return InertiaParameterization.from_inertia(example_inertia(20.0), ("J11",))


def _random_spd(rng, n=3):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


def test_L_unit_vector():
    expected = np.zeros((3, 6))
    expected[0, 0] = expected[1, 5] = expected[2, 4] = 1.0
    np.testing.assert_array_equal(regressor_L([1, 0, 0]), expected)


def test_L_template():
    np.testing.assert_array_equal(regressor_L([1, 2, 3]), [[1, 0, 0, 0, 3, 2], [0, 2, 0, 3, 0, 1], [0, 0, 3, 2, 1, 0]])


def test_L_bilinear_identity(rng):
    for _ in range(200):
        J = _random_spd(rng)
        x = rng.normal(size=3)
        assert np.abs(regressor_L(x) @ inertia_vector(J) - J @ x).max() < 1e-12


def test_split_L_example(par, rng):
    w = rng.normal(size=3)
    L1, L0 = split_L(w, par)
    np.testing.assert_allclose(L1, [[w[0]], [0], [0]], atol=0)
    np.testing.assert_allclose(L0, np.array([[0, 3, 0], [3, 100, 0], [0, 0, 10]]) @ w, atol=1e-13)
    np.testing.assert_allclose(L1 @ par.mu_true + L0, example_inertia(20.0) @ w, atol=1e-12)


def test_split_L_known_and_zero(rng):
    J = _random_spd(rng)
    full = InertiaParameterization.from_inertia(J, ())
    x = rng.normal(size=3)
    L1, L0 = split_L(x, full)
    assert L1.shape == (3, 0)
    np.testing.assert_allclose(L0, J @ x, atol=1e-12)
    L1, L0 = split_L(np.zeros(3), full)
    assert not L0.any()


def test_F_terms(par, rng):
    F1, F0 = F_terms(np.zeros(3), par)
    assert not F1.any() and not F0.any()
    J = example_inertia(20.0)
    _, vecs = np.linalg.eigh(J)
    F1, F0 = F_terms(2.5 * vecs[:, 1], par)
    assert np.abs(F1 @ par.mu_true + F0).max() < 1e-12
    for _ in range(100):
        w = rng.normal(size=3)
        F1, F0 = F_terms(w, par)
        np.testing.assert_allclose(F1 @ par.mu_true + F0, -np.cross(w, J @ w), atol=1e-12)
        c = rng.normal()
        G1, G0 = F_terms(c * w, par)
        np.testing.assert_allclose(G1, c * c * F1, atol=1e-12)
        np.testing.assert_allclose(G0, c * c * F0, atol=1e-10)


def test_disturbance_examples():
    d = example_disturbance(0.2)
    assert disturbance_eval(d, np.pi / 2)[2] == pytest.approx(6.0 * np.sin(0.2 * np.pi / 2))
    d1 = example_disturbance(1.0)
    assert disturbance_eval(d1, np.pi / 2)[2] == 6.0
    np.testing.assert_array_equal(disturbance_eval(d, 0.0), np.zeros(3))
    bias = DisturbanceModel((AxisDisturbance(2.0),) * 3)
    np.testing.assert_array_equal(disturbance_eval(bias, 13.7), [2.0, 2.0, 2.0])


def test_disturbance_periodic_per_tone():
    d = example_disturbance(0.2)
    for axis, b in enumerate((1.0, 0.8, 0.2)):
        for t in np.linspace(0, 50, 11):
            assert abs(disturbance_eval(d, t + 2 * np.pi / b)[axis] - disturbance_eval(d, t)[axis]) < 1e-12


def test_disturbance_rejects_bad_frequencies():
    with pytest.raises(FrequencyError):
        AxisDisturbance(0.0, (Tone(1.0, 1.0), Tone(2.0, 1.0)))
    with pytest.raises(FrequencyError):
        AxisDisturbance(0.0, (Tone(1.0, 0.0),))


def _state(rng, n=4):
    return PlantState(normalize(rng.normal(size=4)), rng.normal(size=3), rng.normal(size=n), rng.normal(size=n))


def test_rhs_equilibrium(craft):
    st = PlantState(Quaternion.identity(), np.zeros(3), np.zeros(4), np.zeros(4))
    for part in plant_rhs(st, np.zeros(3), np.zeros(3), craft):
        assert not np.any(part)


def test_rhs_torque_balance(craft, rng):
    w = rng.normal(size=3)
    st = PlantState(Quaternion.identity(), w, np.zeros(4), np.zeros(4))
    _, w_dot, _, eta_dd = plant_rhs(st, np.cross(w, craft.J @ w), np.zeros(3), craft)
    assert np.abs(w_dot).max() < 1e-12 and np.abs(eta_dd).max() < 1e-12


def test_rhs_against_monolithic_solve(craft, rng):
    n = craft.n
    Mass = np.block([[craft.J, craft.delta], [craft.delta.T, np.eye(n)]])
    for _ in range(50):
        st = _state(rng)
        u, d = rng.normal(size=3), rng.normal(size=3)
        _, w_dot, eta_d, eta_dd = plant_rhs(st, u, d, craft)
        w = st.omega
        rhs = np.concatenate([-np.cross(w, craft.J @ w) + u + d, -craft.C @ st.eta_dot - craft.K @ st.eta])
        ref = np.linalg.solve(Mass, rhs)
        np.testing.assert_allclose(np.concatenate([w_dot, eta_dd]), ref, rtol=1e-10, atol=1e-12)
        # residuals of both coupled equations
        r1 = craft.J @ w_dot + np.cross(w, craft.J @ w) + craft.delta @ eta_dd - u - d
        r2 = eta_dd + craft.C @ st.eta_dot + craft.K @ st.eta + craft.delta.T @ w_dot
        assert np.abs(r1).max() < 1e-10 * max(1.0, np.abs(rhs).max())
        assert np.abs(r2).max() < 1e-10 * max(1.0, np.abs(rhs).max())
        np.testing.assert_array_equal(eta_d, st.eta_dot)


def test_params_reject_singular_Jmb():
    with pytest.raises(ConfigurationError):
        SpacecraftParams(np.eye(3), 2.0 * np.ones((3, 1)), np.eye(1), np.eye(1))
    with pytest.raises(ConfigurationError):
        SpacecraftParams(-np.eye(3), np.zeros((3, 1)), np.eye(1), np.eye(1))


def test_parameterization_reproduces_J(par):
    J = example_inertia(20.0)
    np.testing.assert_allclose(par.Lbar1 @ par.mu_true + par.Lbar0, inertia_vector(J), atol=1e-12)
    np.testing.assert_array_equal(par.inertia(), J)
    assert par.n_mu == 1 and par.mu_true[0] == 20.0
