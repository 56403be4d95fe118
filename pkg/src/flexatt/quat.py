"""Unit-quaternion algebra and attitude-error kinematics.

Quaternions are stored scalar-last, ``[q1, q2, q3, q4]`` with ``q4`` the
scalar part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

UNIT_TOL = 1e-9
INPUT_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion with vector part ``qv`` and scalar part ``q4``."""

    qv: np.ndarray
    q4: float

    def __post_init__(self):
        qv = np.asarray(self.qv, dtype=float).reshape(3)
        qv.setflags(write=False)
        object.__setattr__(self, "qv", qv)
        object.__setattr__(self, "q4", float(self.q4))
        err = abs(float(qv @ qv) + self.q4 * self.q4 - 1.0)
        if not err <= UNIT_TOL:
            raise InvalidInputError(f"quaternion is not unit norm (|q|^2 - 1 = {err:.3e})")

    @classmethod
    def from_array(cls, q) -> "Quaternion":
        q = np.asarray(q, dtype=float).reshape(4)
        return cls(q[:3], q[3])

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(np.zeros(3), 1.0)

    def as_array(self) -> np.ndarray:
        return np.append(self.qv, self.q4)


def _as4(q) -> np.ndarray:
    if isinstance(q, Quaternion):
        return q.as_array()
    return np.asarray(q, dtype=float).reshape(4)


def skew(x) -> np.ndarray:
    """Cross-product matrix: ``skew(x) @ y == np.cross(x, y)``."""
    x1, x2, x3 = np.asarray(x, dtype=float).reshape(3)
    return np.array([[0.0, -x3, x2], [x3, 0.0, -x1], [-x2, x1, 0.0]])


def normalize(q) -> Quaternion:
    q = _as4(q)
    nrm = np.linalg.norm(q)
    if not nrm > 0.0 or not np.isfinite(nrm):
        raise InvalidInputError("cannot normalize a zero or non-finite quaternion")
    # Already unit to a few ulps: return unchanged so normalize is idempotent.
    if abs(nrm - 1.0) <= 1e-15:
        return Quaternion.from_array(q)
    return Quaternion.from_array(q / nrm)


def quat_error(q, q_d) -> Quaternion:
    """Attitude error of ``q`` relative to the desired attitude ``q_d``.

    Equivalent to ``conj(q_d) * q`` (Hamilton product); ``q_ev == 0`` iff the
    attitudes coincide.

    Raises
    ------
    InvalidInputError
        If either input deviates from unit norm by more than 1e-6.
    """
    q = _as4(q)
    qd = _as4(q_d)
    for name, val in (("q", q), ("q_d", qd)):
        if abs(np.linalg.norm(val) - 1.0) > INPUT_UNIT_TOL:
            raise InvalidInputError(f"{name} is not a unit quaternion (|{name}| = {np.linalg.norm(val)!r})")
    qv, q4 = q[:3], q[3]
    qdv, qd4 = qd[:3], qd[3]
    qev = qd4 * qv - np.cross(qdv, qv) - q4 * qdv
    qe4 = qdv @ qv + q4 * qd4
    out = np.append(qev, qe4)
    # Roundoff can push a valid product past UNIT_TOL only for inputs at the
    # 1e-6 edge; renormalize those.
    if abs(out @ out - 1.0) > UNIT_TOL:
        out = out / np.linalg.norm(out)
    return Quaternion.from_array(out)


def kinematics_matrix(q) -> np.ndarray:
    """4x3 matrix ``G`` with ``q_dot = G @ omega`` (body rates)."""
    q = _as4(q)
    G = np.empty((4, 3))
    G[:3] = q[3] * np.eye(3) + skew(q[:3])
    G[3] = -q[:3]
    return 0.5 * G


def error_kinematics(q_e, omega_e) -> np.ndarray:
    """Time derivative of the error quaternion for body-rate error ``omega_e``."""
    return kinematics_matrix(q_e) @ np.asarray(omega_e, dtype=float).reshape(3)


def quat_mul(p, q) -> np.ndarray:
    """Hamilton product ``p * q`` of scalar-last 4-vectors (no normalization)."""
    p = _as4(p)
    q = _as4(q)
    v = p[3] * q[:3] + q[3] * p[:3] + np.cross(p[:3], q[:3])
    return np.append(v, p[3] * q[3] - p[:3] @ q[:3])
