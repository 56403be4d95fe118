import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexatt.errors import InvalidInputError
from flexatt.quat import (Quaternion, error_kinematics, normalize, quat_error, quat_mul, skew)

mp.mp.dps = 40


def _unit(raw):
    v = np.asarray(raw, dtype=float)
    return v / np.linalg.norm(v)


def _mp_error(q, qd):
    """Error quaternion by direct high-precision evaluation of the component formulas."""
    q = [mp.mpf(float(x)) for x in q]
    qd = [mp.mpf(float(x)) for x in qd]
    qv, q4, dv, d4 = q[:3], q[3], qd[:3], qd[3]
    cross = [dv[1] * qv[2] - dv[2] * qv[1], dv[2] * qv[0] - dv[0] * qv[2], dv[0] * qv[1] - dv[1] * qv[0]]
    ev = [d4 * qv[i] - cross[i] - q4 * dv[i] for i in range(3)]
    e4 = sum(dv[i] * qv[i] for i in range(3)) + q4 * d4
    return np.array([float(x) for x in ev + [e4]])


unit_quats = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(_unit)
vec3 = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_skew_examples():
    np.testing.assert_array_equal(skew([1, 2, 3]), [[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
    np.testing.assert_array_equal(skew([0, 0, 0]), np.zeros((3, 3)))
    x = np.array([0.3, -0.2, -0.3])
    assert np.abs(skew(x) @ x).max() <= 1e-16


@given(vec3, vec3)
def test_skew_is_cross_product(x, y):
    S = skew(x)
    np.testing.assert_array_equal(S + S.T, np.zeros((3, 3)))
    np.testing.assert_allclose(S @ y, np.cross(x, y), atol=1e-12)


def test_error_of_identical_attitudes():
    q = _unit([0.3, -0.2, -0.3, 0.8832])
    e = quat_error(q, q)
    assert np.all(e.qv == 0.0)
    assert e.q4 == pytest.approx(1.0, abs=1e-15)


def test_error_with_identity_desired():
    q = _unit([0.1, 0.4, -0.2, 0.7])
    e = quat_error(q, [0, 0, 0, 1])
    np.testing.assert_array_equal(e.as_array(), q)


def test_error_example_against_high_precision_oracle():
    q = _unit([0.3, -0.2, -0.3, 0.8832])
    qd = _unit([-0.24, -0.57, -0.18, 0.77])
    np.testing.assert_allclose(quat_error(q, qd).as_array(), _mp_error(q, qd), atol=1e-15)


@settings(max_examples=200)
@given(unit_quats, unit_quats)
def test_error_matches_oracle_and_composition(q, qd):
    e = quat_error(q, qd).as_array()
    np.testing.assert_allclose(e, _mp_error(q, qd), atol=1e-14)
    # q == q_d (x) q_e
    np.testing.assert_allclose(quat_mul(qd, e), q, atol=1e-14)
    assert abs(e @ e - 1.0) <= 1e-9


def test_error_rejects_non_unit():
    with pytest.raises(InvalidInputError):
        quat_error([0, 0, 0, 1.01], [0, 0, 0, 1])
    with pytest.raises(InvalidInputError):
        quat_error([0, 0, 0, 1], [0.5, 0, 0, 1])


def test_kinematics_examples():
    qe = Quaternion.identity()
    assert np.all(error_kinematics(_unit([0.2, 0.1, 0.4, 0.9]), np.zeros(3)) == 0.0)
    np.testing.assert_allclose(error_kinematics(qe, [1.0, -2.0, 3.0]), [0.5, -1.0, 1.5, 0.0])


@settings(max_examples=200)
@given(unit_quats, vec3)
def test_kinematics_preserve_unit_norm(q, w):
    assert abs(q @ error_kinematics(q, w)) <= 1e-12


def test_kinematics_against_finite_difference():
    # exact rotation about a fixed body axis: q(t) = q0 (x) [sin(wt/2) a, cos(wt/2)]
    q0 = _unit([0.2, -0.1, 0.5, 0.8])
    a = _unit([1.0, 2.0, -1.0])
    w = 0.7

    def q(t):
        return quat_mul(q0, np.append(np.sin(0.5 * w * t) * a, np.cos(0.5 * w * t)))

    h = 1e-6
    fd = (q(h) - q(-h)) / (2 * h)
    np.testing.assert_allclose(error_kinematics(q(0.0), w * a), fd, atol=1e-9)


def test_normalize_examples():
    np.testing.assert_array_equal(normalize([0, 0, 0, 2]).as_array(), [0, 0, 0, 1])
    u = _unit([0.3, -0.2, -0.3, 0.8832])
    assert np.abs(normalize(u).as_array() - u).max() <= 1e-15
    np.testing.assert_allclose(normalize([0.6, 0, 0, 0.9]).as_array(), np.array([0.6, 0, 0, 0.9]) / np.sqrt(1.17),
                               rtol=1e-15)
    with pytest.raises(InvalidInputError):
        normalize([0, 0, 0, 0])


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_normalize_idempotent(raw):
    once = normalize(raw).as_array()
    twice = normalize(once).as_array()
    assert np.array_equal(once, twice)
    assert abs(once @ once - 1.0) <= 1e-15 * 4


def test_quaternion_type_rejects_non_unit():
    with pytest.raises(InvalidInputError):
        Quaternion(np.zeros(3), 0.5)
