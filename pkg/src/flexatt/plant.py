"""Flexible spacecraft model: inertia parameterization, coupled rigid/modal
dynamics and the multi-tone disturbance.

Units: torques in N*m, rates in rad/s, inertia in kg*m^2. The coupling
matrix is used as given and never converted.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, FrequencyError, InvalidInputError
from .quat import Quaternion, kinematics_matrix, skew

#: Ordering of the six independent inertia entries.
INERTIA_ENTRIES = ("J11", "J22", "J33", "J23", "J13", "J12")
_ENTRY_INDEX = {
    "J11": (0, 0), "J22": (1, 1), "J33": (2, 2),
    "J23": (1, 2), "J13": (0, 2), "J12": (0, 1),
}


def _is_spd(A: np.ndarray) -> bool:
    if A.size == 0:
        return True
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        return False
    return bool(np.linalg.eigvalsh(A).min() > 0.0)


def inertia_vector(J) -> np.ndarray:
    """``[J11, J22, J33, J23, J13, J12]`` of a symmetric inertia matrix."""
    J = np.asarray(J, dtype=float)
    return np.array([J[_ENTRY_INDEX[k]] for k in INERTIA_ENTRIES])


def inertia_matrix(vech) -> np.ndarray:
    j11, j22, j33, j23, j13, j12 = np.asarray(vech, dtype=float).reshape(6)
    return np.array([[j11, j12, j13], [j12, j22, j23], [j13, j23, j33]])


@dataclass(frozen=True)
class SpacecraftParams:
    """Physical plant. ``delta`` is 3 x n, ``C`` and ``K`` are n x n."""

    J: np.ndarray
    delta: np.ndarray
    C: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float).reshape(3, 3)
        delta = np.asarray(self.delta, dtype=float)
        if delta.size == 0:
            delta = delta.reshape(3, 0)
        n = delta.shape[1]
        C = np.asarray(self.C, dtype=float).reshape(n, n)
        K = np.asarray(self.K, dtype=float).reshape(n, n)
        if delta.shape[0] != 3:
            raise ConfigurationError(f"delta must be 3 x n, got {delta.shape}")
        for name, mat in (("J", J), ("C", C), ("K", K)):
            if not _is_spd(mat):
                raise ConfigurationError(f"{name} must be symmetric positive definite")
        if not _is_spd(J - delta @ delta.T):
            raise ConfigurationError("J - delta delta^T is not positive definite")
        for name, mat in (("J", J), ("delta", delta), ("C", C), ("K", K)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n(self) -> int:
        return self.delta.shape[1]

    @property
    def J_mb(self) -> np.ndarray:
        return self.J - self.delta @ self.delta.T

    def with_inertia(self, J) -> "SpacecraftParams":
        return replace(self, J=J)


@dataclass(frozen=True)
class InertiaParameterization:
    """``inertia_vector(J) = Lbar1 @ mu + Lbar0`` with ``mu`` unknown to the controller."""

    Lbar1: np.ndarray
    Lbar0: np.ndarray
    mu_true: np.ndarray

    def __post_init__(self):
        Lbar1 = np.asarray(self.Lbar1, dtype=float)
        if Lbar1.size == 0:
            Lbar1 = Lbar1.reshape(6, 0)
        Lbar0 = np.asarray(self.Lbar0, dtype=float).reshape(6)
        mu = np.asarray(self.mu_true, dtype=float).reshape(-1)
        if Lbar1.shape != (6, mu.size) or mu.size > 6:
            raise ConfigurationError(f"Lbar1 must be 6 x n_mu (n_mu <= 6), got {Lbar1.shape} for n_mu={mu.size}")
        for name, val in (("Lbar1", Lbar1), ("Lbar0", Lbar0), ("mu_true", mu)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_mu(self) -> int:
        return self.mu_true.size

    @classmethod
    def from_inertia(cls, J, unknown=("J11",)) -> "InertiaParameterization":
        """Treat the named entries of ``J`` as unknown, the rest as known."""
        vech = inertia_vector(J)
        idx = []
        for name in unknown:
            if name not in INERTIA_ENTRIES:
                raise InvalidInputError(f"unknown inertia entry {name!r}; expected one of {INERTIA_ENTRIES}")
            idx.append(INERTIA_ENTRIES.index(name))
        Lbar1 = np.zeros((6, len(idx)))
        for col, i in enumerate(idx):
            Lbar1[i, col] = 1.0
        Lbar0 = vech.copy()
        Lbar0[idx] = 0.0
        return cls(Lbar1, Lbar0, vech[idx])

    def inertia(self, mu=None) -> np.ndarray:
        mu = self.mu_true if mu is None else np.asarray(mu, dtype=float)
        return inertia_matrix(self.Lbar1 @ mu + self.Lbar0)

    def with_mu(self, mu) -> "InertiaParameterization":
        return replace(self, mu_true=np.asarray(mu, dtype=float))


def regressor_L(x) -> np.ndarray:
    """3x6 ``L(x)`` with ``J @ x == L(x) @ inertia_vector(J)`` for symmetric J."""
    x1, x2, x3 = np.asarray(x, dtype=float).reshape(3)
    return np.array([
        [x1, 0.0, 0.0, 0.0, x3, x2],
        [0.0, x2, 0.0, x3, 0.0, x1],
        [0.0, 0.0, x3, x2, x1, 0.0],
    ])


def split_L(x, par: InertiaParameterization):
    """Return ``(L1, L0)`` with ``J @ x == L1 @ mu + L0``."""
    L = regressor_L(x)
    return L @ par.Lbar1, L @ par.Lbar0


def F_terms(omega_e, par: InertiaParameterization):
    """Return ``(F1, F0)`` with ``-omega^x J omega == F1 @ mu + F0``."""
    w = np.asarray(omega_e, dtype=float).reshape(3)
    L1, L0 = split_L(w, par)
    W = skew(w)
    return -W @ L1, -W @ L0


@dataclass(frozen=True)
class Tone:
    amplitude: float
    frequency: float
    phase: float = 0.0


@dataclass(frozen=True)
class AxisDisturbance:
    bias: float = 0.0
    tones: tuple = ()

    def __post_init__(self):
        tones = tuple(t if isinstance(t, Tone) else Tone(*t) for t in self.tones)
        object.__setattr__(self, "tones", tones)
        freqs = [t.frequency for t in tones]
        if any(not f > 0.0 for f in freqs):
            raise FrequencyError(f"disturbance frequencies must be positive, got {freqs}")
        if len(set(freqs)) != len(freqs):
            raise FrequencyError(f"duplicate disturbance frequency in {freqs}")

    @property
    def frequencies(self) -> list:
        return [t.frequency for t in self.tones]


@dataclass(frozen=True)
class DisturbanceModel:
    """Per-axis bias plus a finite sum of sinusoids."""

    axes: tuple = field(default_factory=lambda: (AxisDisturbance(),) * 3)

    def __post_init__(self):
        axes = tuple(self.axes)
        if len(axes) != 3:
            raise InvalidInputError("disturbance model needs exactly three axes")
        object.__setattr__(self, "axes", axes)

    def with_frequency(self, axis: int, tone: int, value: float) -> "DisturbanceModel":
        ax = self.axes[axis]
        tones = list(ax.tones)
        tones[tone] = replace(tones[tone], frequency=float(value))
        axes = list(self.axes)
        axes[axis] = AxisDisturbance(ax.bias, tuple(tones))
        return DisturbanceModel(tuple(axes))


def disturbance_eval(model: DisturbanceModel, t: float) -> np.ndarray:
    d = np.empty(3)
    for i, ax in enumerate(model.axes):
        val = ax.bias
        for tone in ax.tones:
            val += tone.amplitude * np.sin(tone.frequency * t + tone.phase)
        d[i] = val
    return d


@dataclass(frozen=True)
class PlantState:
    q: Quaternion
    omega: np.ndarray
    eta: np.ndarray
    eta_dot: np.ndarray

    def __post_init__(self):
        if not isinstance(self.q, Quaternion):
            object.__setattr__(self, "q", Quaternion.from_array(self.q))
        for name in ("omega", "eta", "eta_dot"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))


def plant_rhs(state: PlantState, u, d, par: SpacecraftParams):
    """Derivatives ``(q_dot, omega_dot, eta_dot, eta_ddot)`` of the flexible plant.

    The modal acceleration is eliminated analytically, so the attitude
    equation is solved against ``J_mb = J - delta delta^T``.
    """
    w = state.omega
    eta, eta_d = state.eta, state.eta_dot
    modal_force = par.C @ eta_d + par.K @ eta
    rhs = -np.cross(w, par.J @ w) + np.asarray(u, dtype=float) + np.asarray(d, dtype=float) + par.delta @ modal_force
    w_dot = np.linalg.solve(par.J_mb, rhs)
    eta_dd = -modal_force - par.delta.T @ w_dot
    q_dot = kinematics_matrix(state.q) @ w
    return q_dot, w_dot, eta_d.copy(), eta_dd
