"""Fixed-step closed-loop simulation with a timed event schedule.

The state vector is laid out as

    q(4)  omega(3)  eta(n)  eta_dot(n)  v(r)  zeta(r*n_mu)  R_hat(n_R)  z(2n)

where ``q`` is the plant attitude (the error quaternion follows from the
fixed desired attitude) and ``z`` is the auxiliary system used by the
analysis tools. Events are applied between steps; the step before an event
is shortened so the switch happens exactly at its timestamp.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel
from .analysis import auxiliary_rhs
from .controller import Gains, KnownPlant, adaptive_law, control_torque
from .errors import IntegrationDivergedError, InvalidInputError
from .exosystem import (ControllerState, InternalModelDesign, R_size, compensator_rhs, internal_model_rhs,
                        regressor_rho, true_R)
from .plant import (DisturbanceModel, InertiaParameterization, PlantState, SpacecraftParams, disturbance_eval,
                    plant_rhs)
from .quat import Quaternion, error_kinematics, quat_error, quat_mul
from .scenario import Scenario


@dataclass(frozen=True)
class StateLayout:
    n: int
    r: int
    n_mu: int
    n_R: int

    @property
    def dim(self) -> int:
        return 7 + 2 * self.n + self.r + self.r * self.n_mu + self.n_R + 2 * self.n

    def slices(self) -> dict:
        n, r, n_mu, n_R = self.n, self.r, self.n_mu, self.n_R
        bounds = [("q", 4), ("omega", 3), ("eta", n), ("eta_dot", n), ("v", r), ("zeta", r * n_mu),
                  ("R_hat", n_R), ("z", 2 * n)]
        out, i = {}, 0
        for name, size in bounds:
            out[name] = slice(i, i + size)
            i += size
        return out

    @classmethod
    def of(cls, design: InternalModelDesign, spacecraft: SpacecraftParams, n_mu: int) -> "StateLayout":
        return cls(spacecraft.n, design.r, n_mu, R_size(design, n_mu))


@dataclass
class ClosedLoopState:
    plant: PlantState
    controller: ControllerState
    z: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([self.plant.q.as_array(), self.plant.omega, self.plant.eta, self.plant.eta_dot,
                               self.controller.v, self.controller.zeta.reshape(-1), self.controller.R_hat,
                               np.asarray(self.z, dtype=float).reshape(-1)])

    @classmethod
    def unpack(cls, x, layout: StateLayout, renormalize: bool = False) -> "ClosedLoopState":
        x = np.asarray(x, dtype=float)
        if x.size != layout.dim:
            raise InvalidInputError(f"state vector has {x.size} entries, layout expects {layout.dim}")
        sl = layout.slices()
        q = x[sl["q"]]
        q = Quaternion.from_array(q / np.linalg.norm(q) if renormalize else q)
        plant = PlantState(q, x[sl["omega"]].copy(), x[sl["eta"]].copy(), x[sl["eta_dot"]].copy())
        ctrl = ControllerState(x[sl["v"]].copy(), x[sl["zeta"]].reshape(layout.r, layout.n_mu),
                               x[sl["R_hat"]].copy())
        return cls(plant, ctrl, x[sl["z"]].copy())


@dataclass(frozen=True)
class Phase:
    """Everything the right-hand side needs on one event-free segment."""

    design: InternalModelDesign
    known: KnownPlant
    gains: Gains
    q_d: Quaternion
    spacecraft: SpacecraftParams
    inertia: InertiaParameterization
    disturbance: DisturbanceModel

    @property
    def layout(self) -> StateLayout:
        return StateLayout.of(self.design, self.spacecraft, self.inertia.n_mu)


def closed_loop_rhs(state, t: float, phase: Phase) -> np.ndarray:
    """Derivative of the packed closed-loop state (reference implementation)."""
    layout = phase.layout
    st = state if isinstance(state, ClosedLoopState) else ClosedLoopState.unpack(state, layout, renormalize=True)
    q_e = quat_error(st.plant.q, phase.q_d)
    w = st.plant.omega
    ctrl = st.controller
    u = control_torque(q_e.qv, w, ctrl.v, ctrl.zeta, ctrl.R_hat, phase.design, phase.known, phase.gains)
    d = disturbance_eval(phase.disturbance, t)
    q_dot, w_dot, eta_dot, eta_dd = plant_rhs(st.plant, u, d, phase.spacecraft)
    rho = regressor_rho(w, ctrl.zeta, ctrl.v, phase.design, phase.known.par)
    return np.concatenate([
        q_dot, w_dot, eta_dot, eta_dd,
        internal_model_rhs(ctrl.v, u, w, phase.design, phase.known.par),
        compensator_rhs(ctrl.zeta, w, phase.design, phase.known.par).reshape(-1),
        adaptive_law(rho, w, phase.gains),
        auxiliary_rhs(st.z, w, phase.spacecraft),
    ])


def error_rhs_check(state: ClosedLoopState, phase: Phase) -> np.ndarray:
    """``q_e`` derivative from the error kinematics (used to cross-check the plant form)."""
    q_e = quat_error(state.plant.q, phase.q_d)
    return error_kinematics(q_e, state.plant.omega)


def rk4_step(rhs, x, t: float, dt: float, quat: slice | None = None) -> np.ndarray:
    """One classical RK4 step; renormalizes ``x[quat]`` afterwards when given.

    Raises
    ------
    IntegrationDivergedError
        If any stage derivative is non-finite.
    """
    if not dt > 0.0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    k1 = rhs(x, t)
    k2 = rhs(x + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(x + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(x + dt * k3, t + dt)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise IntegrationDivergedError(f"non-finite derivative at t={t!r}", t=t)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if quat is not None:
        out[quat] = out[quat] / np.linalg.norm(out[quat])
    return out


# --------------------------------------------------------------------------
# scenario execution
# --------------------------------------------------------------------------

def initial_state(scenario: Scenario, design: InternalModelDesign) -> ClosedLoopState:
    sc = scenario.spacecraft
    n_mu = scenario.inertia.n_mu
    ctrl = ControllerState.zeros(design, n_mu)
    if not scenario.gains.adaptation_enabled:
        sigma, mu = scenario.assumed()
        ctrl.R_hat = true_R(sigma, mu, design.basis)
    elif scenario.R_hat0 is not None:
        ctrl.R_hat = np.asarray(scenario.R_hat0, dtype=float)
    ctrl.check(design, n_mu)
    ini = scenario.initial
    # z1(0) chosen so that z2 tracks eta exactly from t = 0
    z2 = ini.eta.copy()
    if sc.n:
        z1 = -np.linalg.solve(sc.K, ini.eta_dot + sc.C @ ini.eta + sc.delta.T @ ini.omega)
    else:
        z1 = np.zeros(0)
    return ClosedLoopState(ini, ctrl, np.concatenate([z1, z2]))


def build_phases(scenario: Scenario, design: InternalModelDesign):
    """``[(t_start, t_end, phase, event)]`` where ``event`` is applied at ``t_start``."""
    known = KnownPlant(scenario.spacecraft.delta, scenario.spacecraft.C, scenario.inertia)
    phase = Phase(design, known, scenario.gains, scenario.q_d, scenario.spacecraft, scenario.inertia,
                  scenario.disturbance)
    out = []
    t0, ev0 = 0.0, None
    for ev in scenario.events:
        out.append((t0, ev.time, phase, ev0))
        phase = apply_event(phase, ev)
        t0, ev0 = ev.time, ev
    out.append((t0, scenario.t_final, phase, ev0))
    return out


def apply_event(phase: Phase, event) -> Phase:
    for c in event.changes:
        if c.kind == "set-disturbance-frequency":
            phase = replace(phase, disturbance=phase.disturbance.with_frequency(c.axis, c.tone, c.value))
        elif c.kind == "set-inertia-parameter":
            mu = phase.inertia.mu_true.copy()
            mu[c.index] = c.value
            inertia = phase.inertia.with_mu(mu)
            phase = replace(phase, inertia=inertia, spacecraft=phase.spacecraft.with_inertia(inertia.inertia()))
        elif c.kind == "enable-adaptation":
            phase = replace(phase, gains=replace(phase.gains, adaptation_enabled=True))
        elif c.kind == "disable-adaptation":
            phase = replace(phase, gains=replace(phase.gains, adaptation_enabled=False))
    return phase


def _kernel_args(phase: Phase):
    d = phase.design
    sc = phase.spacecraft
    par = phase.known.par
    amp, freq, ph, axis = [], [], [], []
    for i, ax in enumerate(phase.disturbance.axes):
        for tone in ax.tones:
            amp.append(tone.amplitude)
            freq.append(tone.frequency)
            ph.append(tone.phase)
            axis.append(i)
    Eb = np.array(d.E_blocks, dtype=float).reshape(d.ell, 3, d.r)
    c = np.ascontiguousarray
    return (
        c(phase.q_d.as_array()), c(sc.J), c(np.linalg.inv(sc.J_mb)), c(sc.delta), c(sc.C), c(sc.K),
        c(par.Lbar1), c(par.Lbar0), c(d.M), c(d.N), c(d.E0), c(Eb),
        c(phase.known.damping_feedthrough),
        np.array([ax.bias for ax in phase.disturbance.axes], dtype=float),
        np.array(amp, dtype=float), np.array(freq, dtype=float), np.array(ph, dtype=float),
        np.array(axis, dtype=np.int64),
        float(phase.gains.k1), float(phase.gains.k2), float(phase.gains.k), bool(phase.gains.adaptation_enabled),
        sc.n, d.r, par.n_mu, d.ell,
    )


def segment_steps(t0: float, t_end: float, dt: float) -> int:
    """Number of steps covering ``[t0, t_end]``; the last one is shortened (or
    stretched by at most 1e-6 dt) to land on ``t_end``."""
    span = (t_end - t0) / dt
    if span <= 0.0:
        return 0
    return max(1, int(math.ceil(span - 1e-6)))


@dataclass
class Trajectory:
    """Decimated telemetry of one run."""

    t: np.ndarray
    x: np.ndarray
    layout: StateLayout
    q_d: Quaternion
    u: np.ndarray = None
    d: np.ndarray = None
    q_e: np.ndarray = None
    V: np.ndarray = None
    phase_index: np.ndarray = None
    max_quat_drift: float = 0.0
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        sl = self.layout.slices()
        if name in sl:
            return self.x[:, sl[name]]
        raise KeyError(name)

    @property
    def omega(self):
        return self["omega"]

    @property
    def eta(self):
        return self["eta"]

    @property
    def R_hat(self):
        return self["R_hat"]

    @property
    def q_ev_norm(self) -> np.ndarray:
        return np.linalg.norm(self.q_e[:, :3], axis=1)

    def state(self, k: int) -> ClosedLoopState:
        return ClosedLoopState.unpack(self.x[k], self.layout)

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        return (self.t >= t_lo - 1e-9) & (self.t <= t_hi + 1e-9)

    # -- CSV -------------------------------------------------------------------

    def columns(self) -> list:
        L = self.layout
        cols = ["t"] + [f"qe{i}" for i in range(1, 5)] + [f"we{i}" for i in range(1, 4)]
        cols += [f"eta{i}" for i in range(1, L.n + 1)] + [f"etad{i}" for i in range(1, L.n + 1)]
        cols += [f"v{i}" for i in range(1, L.r + 1)]
        cols += [f"zeta{i}_{j}" for i in range(1, L.r + 1) for j in range(1, L.n_mu + 1)]
        cols += [f"Rhat{i}" for i in range(1, L.n_R + 1)]
        cols += ["u1", "u2", "u3", "d1", "d2", "d3"]
        cols += [f"z{i}" for i in range(1, 2 * L.n + 1)]
        if self.V is not None:
            cols += ["V", "V1", "V2", "V3"]
        return cols

    def table(self) -> np.ndarray:
        sl = self.layout.slices()
        parts = [self.t[:, None], self.q_e, self.x[:, sl["omega"]], self.x[:, sl["eta"]], self.x[:, sl["eta_dot"]],
                 self.x[:, sl["v"]], self.x[:, sl["zeta"]], self.x[:, sl["R_hat"]], self.u, self.d,
                 self.x[:, sl["z"]]]
        if self.V is not None:
            parts.append(self.V)
        return np.hstack(parts)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns()) + "\n")
        for row in self.table():
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


def trajectory_from_csv(text: str, scenario: Scenario, design: InternalModelDesign) -> Trajectory:
    """Rebuild a :class:`Trajectory` from telemetry CSV written for ``scenario``/``design``.

    The plant attitude is recovered as ``q = q_d * q_e``. Raises
    :class:`InvalidInputError` when the header does not match the expected
    columns or a row is ragged.
    """
    header, data = read_csv(text)
    phases = build_phases(scenario, design)
    layout = phases[0][2].layout
    probe = Trajectory(np.zeros(0), np.zeros((0, layout.dim)), layout, scenario.q_d, V=np.zeros((0, 4)))
    expected = probe.columns()
    with_V = header == expected
    if not with_V and header != expected[:-4]:
        raise InvalidInputError(f"telemetry columns do not match the scenario/design layout "
                                f"(expected {len(expected) - 4} or {len(expected)} columns, got {len(header)})")
    col = {name: i for i, name in enumerate(header)}

    def block(prefix_names):
        return data[:, [col[c] for c in prefix_names]]

    t = data[:, 0]
    if np.any(np.diff(t) <= 0.0):
        raise InvalidInputError("telemetry time column is not strictly increasing")
    q_e = block([f"qe{i}" for i in range(1, 5)])
    sl = layout.slices()
    x = np.empty((t.size, layout.dim))
    for k in range(t.size):
        q = quat_mul(scenario.q_d, q_e[k])
        x[k, sl["q"]] = q / np.linalg.norm(q)
    names = expected[1:]
    x[:, sl["omega"]] = block([n for n in names if n.startswith("we")])
    x[:, sl["eta"]] = block([f"eta{i}" for i in range(1, layout.n + 1)])
    x[:, sl["eta_dot"]] = block([f"etad{i}" for i in range(1, layout.n + 1)])
    x[:, sl["v"]] = block([f"v{i}" for i in range(1, layout.r + 1)])
    x[:, sl["zeta"]] = block([n for n in names if n.startswith("zeta")])
    x[:, sl["R_hat"]] = block([n for n in names if n.startswith("Rhat")])
    x[:, sl["z"]] = block([f"z{i}" for i in range(1, 2 * layout.n + 1)])
    # a record on an event boundary belongs to the phase that starts there
    starts = np.array([p[0] for p in phases])
    phase_index = np.searchsorted(starts, t, side="right") - 1
    traj = Trajectory(t, x, layout, scenario.q_d, u=block(["u1", "u2", "u3"]), d=block(["d1", "d2", "d3"]),
                      q_e=q_e, V=block(["V", "V1", "V2", "V3"]) if with_V else None, phase_index=phase_index)
    traj.meta["basis_tags"] = [b.tag for b in design.basis]
    return traj


def run_scenario(scenario: Scenario, design: InternalModelDesign | None = None, *, engine: str = "compiled",
                 certificate=None) -> Trajectory:
    """Integrate a scenario from 0 to ``t_final`` and return decimated telemetry.

    ``engine="reference"`` uses the pure-numpy right-hand side (slow; meant
    for short cross-checks). ``certificate`` overrides the Lyapunov
    certificate used for the V columns.

    Raises
    ------
    IntegrationDivergedError
        If the state stops being finite.
    """
    from .analysis import certificate_for_scenario, lyapunov_series

    if design is None:
        design = scenario.synthesize_design()
    x = initial_state(scenario, design).pack()
    phases = build_phases(scenario, design)
    layout = phases[0][2].layout
    if x.size != layout.dim:
        raise InvalidInputError("initial state does not match the design dimensions")
    dt = scenario.dt
    decim = scenario.decimate

    rec_t = [0.0]
    rec_x = [x.copy()]
    rec_phase = [0]
    k_global = 0
    max_drift = 0.0
    for idx, (t0, t_end, phase, event) in enumerate(phases):
        if event is not None:
            x = _on_event(x, event, scenario, design, layout)
            # a record sitting on the event time reflects the post-event state
            if rec_t[-1] == t0:
                rec_x[-1] = x.copy()
                rec_phase[-1] = idx
        n_steps = segment_steps(t0, t_end, dt)
        if n_steps == 0:
            continue
        if engine == "compiled":
            buf = np.empty((n_steps // decim + 2, layout.dim + 1))
            x, n_rec, drift, status, t_fail = _kernel.rk4_segment(
                x, t0, t_end, dt, n_steps, k_global, decim, buf, *_kernel_args(phase))
            if status != _kernel.OK:
                raise IntegrationDivergedError(f"integration diverged at t={t_fail!r}", t=t_fail)
            for row in buf[:n_rec]:
                rec_t.append(float(row[0]))
                rec_x.append(row[1:].copy())
                rec_phase.append(idx)
            max_drift = max(max_drift, drift)
        elif engine == "reference":
            for k in range(n_steps):
                t = t0 + k * dt
                t_next = t_end if k == n_steps - 1 else t0 + (k + 1) * dt
                x_raw = rk4_step(lambda y, s: closed_loop_rhs(y, s, phase), x, t, t_next - t)
                # rk4_step's renormalization is applied here to also measure drift
                max_drift = max(max_drift, abs(np.linalg.norm(x_raw[:4]) - 1.0))
                x_raw[:4] /= np.linalg.norm(x_raw[:4])
                x = x_raw
                if (k_global + k + 1) % decim == 0:
                    rec_t.append(t_next)
                    rec_x.append(x.copy())
                    rec_phase.append(idx)
        else:
            raise InvalidInputError(f"unknown engine {engine!r}")
        k_global += n_steps
    if rec_t[-1] != scenario.t_final:
        rec_t.append(scenario.t_final)
        rec_x.append(x.copy())
        rec_phase.append(len(phases) - 1)

    traj = Trajectory(np.array(rec_t), np.array(rec_x), layout, scenario.q_d,
                      phase_index=np.array(rec_phase), max_quat_drift=max_drift)
    traj.meta["basis_tags"] = [b.tag for b in design.basis]
    _fill_outputs(traj, phases)
    if scenario.analysis.enabled:
        cert = certificate if certificate is not None else certificate_for_scenario(scenario, design)
        traj.V = lyapunov_series(traj, phases, cert, scenario, design)
        traj.meta["certificate"] = {"p": cert.p, "s": cert.s}
    return traj


def _on_event(x, event, scenario: Scenario, design: InternalModelDesign, layout: StateLayout) -> np.ndarray:
    x = x.copy()
    for c in event.changes:
        if c.kind == "disable-adaptation":
            sigma, mu = scenario.assumed()
            x[layout.slices()["R_hat"]] = true_R(sigma, mu, design.basis)
    return x


def _fill_outputs(traj: Trajectory, phases) -> None:
    K = traj.t.size
    traj.u = np.empty((K, 3))
    traj.d = np.empty((K, 3))
    traj.q_e = np.empty((K, 4))
    for k in range(K):
        phase = phases[traj.phase_index[k]][2]
        st = ClosedLoopState.unpack(traj.x[k], traj.layout)
        q_e = quat_error(st.plant.q, phase.q_d)
        traj.q_e[k] = q_e.as_array()
        c = st.controller
        traj.u[k] = control_torque(q_e.qv, st.plant.omega, c.v, c.zeta, c.R_hat, phase.design, phase.known,
                                   phase.gains)
        traj.d[k] = disturbance_eval(phase.disturbance, traj.t[k])


def read_csv(text: str) -> tuple:
    """Parse telemetry CSV into ``(columns, data)``; raises on ragged rows."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidInputError("empty telemetry CSV")
    header = rows[0]
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InvalidInputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise InvalidInputError(f"line {lineno}: {exc}") from exc
    if not data:
        raise InvalidInputError("telemetry CSV has no data rows")
    return header, np.array(data)
