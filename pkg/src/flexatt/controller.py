"""Adaptive control law: parameter update, virtual control and torque assembly.

The control torque only touches measurable or designer-known quantities:
the attitude error, the body rate, the controller states and the known
plant data (delta, C and the known part of the inertia). Plant truth such
as ``mu_true``, the true frequencies, the modal coordinates or the
disturbance never enters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .exosystem import InternalModelDesign, regressor_rho
from .plant import F_terms, InertiaParameterization, split_L


@dataclass(frozen=True)
class Gains:
    k1: float = 10.0
    k2: float = 50.0
    k: float = 10.0
    adaptation_enabled: bool = True

    def __post_init__(self):
        for name in ("k1", "k2", "k"):
            if not getattr(self, name) > 0.0:
                raise InvalidInputError(f"gain {name} must be strictly positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class KnownPlant:
    """The slice of the plant the controller is allowed to see.

    ``par`` keeps ``Lbar1``/``Lbar0`` (regressor shape and known inertia
    entries); its ``mu_true`` is replaced by NaN so any accidental use
    poisons the torque.
    """

    delta: np.ndarray
    C: np.ndarray
    par: InertiaParameterization

    def __post_init__(self):
        blind = InertiaParameterization(self.par.Lbar1, self.par.Lbar0, np.full(self.par.n_mu, np.nan))
        object.__setattr__(self, "par", blind)
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        object.__setattr__(self, "C", np.asarray(self.C, dtype=float))

    @property
    def damping_feedthrough(self) -> np.ndarray:
        return self.delta @ self.C @ self.delta.T


def adaptive_law(rho, omega_e, gains: Gains) -> np.ndarray:
    """``k rho^T omega_e``, or zeros while adaptation is disabled."""
    rho = np.asarray(rho, dtype=float)
    if not gains.adaptation_enabled:
        return np.zeros(rho.shape[1])
    return gains.k * (rho.T @ np.asarray(omega_e, dtype=float))


def virtual_control(q_ev, omega_e, rho, R_hat, gains: Gains) -> np.ndarray:
    return (-gains.k1 * np.asarray(q_ev, dtype=float)
            - gains.k2 * np.asarray(omega_e, dtype=float)
            - np.asarray(rho, dtype=float) @ np.asarray(R_hat, dtype=float))


def input_transform(omega_e, v, design: InternalModelDesign, known: KnownPlant) -> np.ndarray:
    """Terms added to the virtual control: ``-E0 N L0 + E0 v + delta C delta^T omega``."""
    _, L0 = split_L(omega_e, known.par)
    E0N = design.E0 @ design.N
    return -E0N @ L0 + design.E0 @ np.asarray(v, dtype=float) + known.damping_feedthrough @ np.asarray(omega_e, dtype=float)


def control_torque(q_ev, omega_e, v, zeta, R_hat, design: InternalModelDesign, known: KnownPlant,
                   gains: Gains) -> np.ndarray:
    """Control torque (N*m) from the measurable error and the controller states."""
    rho = regressor_rho(omega_e, zeta, v, design, known.par)
    u_check = virtual_control(q_ev, omega_e, rho, R_hat, gains)
    _, F0 = F_terms(omega_e, known.par)
    return u_check + input_transform(omega_e, v, design, known) - F0
