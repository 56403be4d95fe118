"""Scenario records, JSON (de)serialization and the bundled worked example.

A scenario document is JSON with ``"schema_version": 1``; all matrices are
row-major nested arrays. Quaternions in a document must be unit to 1e-6 and
are renormalized on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import Gains
from .errors import FrequencyError, InvalidInputError
from .exosystem import InternalModelDesign, Monomial, synthesize
from .plant import (INERTIA_ENTRIES, AxisDisturbance, DisturbanceModel, InertiaParameterization, PlantState,
                    SpacecraftParams, Tone)
from .quat import INPUT_UNIT_TOL, Quaternion, normalize

SCHEMA_VERSION = 1
EVENT_KINDS = ("set-disturbance-frequency", "set-inertia-parameter", "enable-adaptation", "disable-adaptation")


@dataclass(frozen=True)
class Change:
    kind: str
    axis: int | None = None
    tone: int | None = None
    index: int | None = None
    value: float | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise InvalidInputError(f"unknown event kind {self.kind!r}; expected one of {EVENT_KINDS}")
        if self.kind == "set-disturbance-frequency" and (self.axis is None or self.tone is None or self.value is None):
            raise InvalidInputError("set-disturbance-frequency needs axis, tone and value")
        if self.kind == "set-inertia-parameter" and (self.index is None or self.value is None):
            raise InvalidInputError("set-inertia-parameter needs index and value")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key in ("axis", "tone", "index", "value"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Change":
        return cls(d["kind"], d.get("axis"), d.get("tone"), d.get("index"),
                   None if d.get("value") is None else float(d["value"]))


@dataclass(frozen=True)
class Event:
    """One or more changes applied atomically at ``time``."""

    time: float
    changes: tuple

    def __post_init__(self):
        changes = (self.changes,) if isinstance(self.changes, Change) else tuple(self.changes)
        if not changes:
            raise InvalidInputError(f"event at t={self.time} has no changes")
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "changes", changes)

    def to_dict(self) -> dict:
        return {"time": self.time, "changes": [c.to_dict() for c in self.changes]}

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        if "changes" in d:
            return cls(float(d["time"]), tuple(Change.from_dict(c) for c in d["changes"]))
        return cls(float(d["time"]), Change.from_dict(d))


@dataclass(frozen=True)
class DesignConfig:
    """Internal-model synthesis settings.

    ``unknown`` lists ``(axis, tone)`` references (0-based) of the unknown
    frequencies. ``assumed_sigma``/``assumed_mu`` give the values ``R_hat``
    is pinned to while adaptation is off.
    """

    unknown: tuple = ()
    nominal_sigma: tuple | None = None
    poles: tuple | None = None
    basis: tuple | None = None
    half_width: float = 1.5
    grid_points: int | None = None
    has_bias: tuple | None = None
    assumed_sigma: tuple | None = None
    assumed_mu: tuple | None = None


@dataclass(frozen=True)
class AnalysisConfig:
    """Lyapunov certificate weights; ``None`` picks them by the gain-condition search."""

    enabled: bool = True
    p: float | None = None
    s: float | None = None


@dataclass(frozen=True)
class Scenario:
    t_final: float
    dt: float
    q_d: Quaternion
    initial: PlantState
    gains: Gains
    spacecraft: SpacecraftParams
    inertia: InertiaParameterization
    disturbance: DisturbanceModel
    design: DesignConfig = field(default_factory=DesignConfig)
    events: tuple = ()
    decimate: int = 100
    R_hat0: tuple | None = None
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        self.validate()

    def validate(self) -> None:
        if not self.dt > 0.0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if not self.t_final >= 0.0:
            raise InvalidInputError(f"t_final must be non-negative, got {self.t_final}")
        if self.decimate < 1:
            raise InvalidInputError("decimate must be >= 1")
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidInputError(f"event times must be strictly increasing, got {times}")
        if times and (times[0] <= 0.0 or times[-1] >= self.t_final):
            raise InvalidInputError("event times must lie strictly inside (0, t_final)")
        if not np.allclose(self.inertia.inertia(), self.spacecraft.J, rtol=0, atol=1e-12):
            raise InvalidInputError("inertia parameterization does not reproduce spacecraft J")
        n = self.spacecraft.n
        if self.initial.eta.size != n or self.initial.eta_dot.size != n:
            raise InvalidInputError(f"initial eta/eta_dot must have {n} entries")
        for e in self.events:
            for c in e.changes:
                if c.kind == "set-inertia-parameter" and not 0 <= c.index < self.inertia.n_mu:
                    raise InvalidInputError(f"event at t={e.time}: inertia parameter index {c.index} out of range")
                if c.kind == "set-disturbance-frequency":
                    ax = self.disturbance.axes[c.axis] if 0 <= c.axis < 3 else None
                    if ax is None or not 0 <= c.tone < len(ax.tones):
                        raise InvalidInputError(f"event at t={e.time}: no tone {c.tone} on axis {c.axis}")

    def with_dt(self, dt: float) -> "Scenario":
        return replace(self, dt=float(dt))

    # -- synthesis helpers -----------------------------------------------------

    def synthesize_design(self) -> InternalModelDesign:
        cfg = self.design
        return synthesize(self.disturbance, unknown=cfg.unknown, nominal_sigma=cfg.nominal_sigma,
                          has_bias=cfg.has_bias, poles=cfg.poles,
                          basis=None if cfg.basis is None else [Monomial(b) for b in cfg.basis],
                          half_width=cfg.half_width, grid_points=cfg.grid_points)

    def true_sigma(self, model: DisturbanceModel | None = None) -> np.ndarray:
        model = self.disturbance if model is None else model
        return np.array([model.axes[a].tones[k].frequency for a, k in self.design.unknown])

    def assumed(self):
        """``(sigma, mu)`` used to pin ``R_hat`` while adaptation is off."""
        cfg = self.design
        sigma = self.true_sigma() if cfg.assumed_sigma is None else np.asarray(cfg.assumed_sigma, dtype=float)
        mu = self.inertia.mu_true if cfg.assumed_mu is None else np.asarray(cfg.assumed_mu, dtype=float)
        return sigma, mu

    # -- JSON ------------------------------------------------------------------

    def to_dict(self) -> dict:
        sc = self.spacecraft
        cfg = self.design
        unknown_entries = [name for name, _ in _unknown_entry_names(self.inertia)]
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "scenario",
            "name": self.name,
            "t_final": self.t_final,
            "dt": self.dt,
            "decimate": self.decimate,
            "q_d": self.q_d.as_array().tolist(),
            "initial": {
                "q": self.initial.q.as_array().tolist(),
                "omega": self.initial.omega.tolist(),
                "eta": self.initial.eta.tolist(),
                "eta_dot": self.initial.eta_dot.tolist(),
            },
            "gains": {"k1": self.gains.k1, "k2": self.gains.k2, "k": self.gains.k,
                      "adaptation_enabled": self.gains.adaptation_enabled},
            "spacecraft": {"J": sc.J.tolist(), "delta": sc.delta.tolist(), "C": sc.C.tolist(), "K": sc.K.tolist(),
                           "unknown_inertia": unknown_entries},
            "disturbance": [{"bias": ax.bias,
                             "tones": [{"amplitude": t.amplitude, "frequency": t.frequency, "phase": t.phase}
                                       for t in ax.tones]} for ax in self.disturbance.axes],
            "design": {
                "unknown_frequencies": [{"axis": a, "tone": k} for a, k in cfg.unknown],
                "nominal_sigma": None if cfg.nominal_sigma is None else list(cfg.nominal_sigma),
                "poles": None if cfg.poles is None else [
                    None if p is None else [[complex(z).real, complex(z).imag] for z in p] for p in cfg.poles],
                "basis": None if cfg.basis is None else [list(b) for b in cfg.basis],
                "half_width": cfg.half_width,
                "grid_points": cfg.grid_points,
                "has_bias": None if cfg.has_bias is None else list(cfg.has_bias),
                "assumed_sigma": None if cfg.assumed_sigma is None else list(cfg.assumed_sigma),
                "assumed_mu": None if cfg.assumed_mu is None else list(cfg.assumed_mu),
            },
            "events": [e.to_dict() for e in self.events],
            "R_hat0": None if self.R_hat0 is None else list(self.R_hat0),
            "analysis": {"enabled": self.analysis.enabled, "p": self.analysis.p, "s": self.analysis.s},
        }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if doc.get("schema_version") != SCHEMA_VERSION or doc.get("kind", "scenario") != "scenario":
            raise InvalidInputError(f"unsupported scenario schema_version {doc.get('schema_version')!r}")
        try:
            sc = doc["spacecraft"]
            J = np.array(sc["J"], dtype=float)
            delta = np.array(sc.get("delta", []), dtype=float).reshape(3, -1)
            n = delta.shape[1]
            spacecraft = SpacecraftParams(J, delta, np.array(sc.get("C", []), dtype=float).reshape(n, n),
                                          np.array(sc.get("K", []), dtype=float).reshape(n, n))
            inertia = InertiaParameterization.from_inertia(J, sc.get("unknown_inertia", []))
            axes = []
            for i, ax in enumerate(doc["disturbance"]):
                tones = tuple(Tone(float(t["amplitude"]), float(t["frequency"]), float(t.get("phase", 0.0)))
                              for t in ax.get("tones", []))
                try:
                    axes.append(AxisDisturbance(float(ax.get("bias", 0.0)), tones))
                except FrequencyError as exc:
                    raise FrequencyError(f"disturbance axis {i + 1}: {exc}") from exc
            ini = doc["initial"]
            initial = PlantState(_load_quat(ini["q"], "initial.q"), ini.get("omega", [0.0, 0.0, 0.0]),
                                 ini.get("eta", [0.0] * n), ini.get("eta_dot", [0.0] * n))
            g = doc.get("gains", {})
            gains = Gains(float(g.get("k1", 10.0)), float(g.get("k2", 50.0)), float(g.get("k", 10.0)),
                          bool(g.get("adaptation_enabled", True)))
            d = doc.get("design", {})
            poles = d.get("poles")
            if poles is not None:
                poles = tuple(None if p is None else tuple(complex(re, im) for re, im in p) for p in poles)
            design = DesignConfig(
                unknown=tuple((int(u["axis"]), int(u["tone"])) for u in d.get("unknown_frequencies", [])),
                nominal_sigma=_opt_tuple(d.get("nominal_sigma")),
                poles=poles,
                basis=None if d.get("basis") is None else tuple(tuple(int(e) for e in b) for b in d["basis"]),
                half_width=float(d.get("half_width", 1.5)),
                grid_points=d.get("grid_points"),
                has_bias=None if d.get("has_bias") is None else tuple(bool(b) for b in d["has_bias"]),
                assumed_sigma=_opt_tuple(d.get("assumed_sigma")),
                assumed_mu=_opt_tuple(d.get("assumed_mu")),
            )
            events = tuple(Event.from_dict(e) for e in doc.get("events", []))
            a = doc.get("analysis", {})
            return cls(
                t_final=float(doc["t_final"]), dt=float(doc["dt"]),
                q_d=_load_quat(doc["q_d"], "q_d"), initial=initial, gains=gains,
                spacecraft=spacecraft, inertia=inertia, disturbance=DisturbanceModel(tuple(axes)),
                design=design, events=events, decimate=int(doc.get("decimate", 100)),
                R_hat0=_opt_tuple(doc.get("R_hat0")),
                analysis=AnalysisConfig(bool(a.get("enabled", True)), a.get("p"), a.get("s")),
                name=str(doc.get("name", "scenario")),
            )
        except KeyError as exc:
            raise InvalidInputError(f"scenario is missing required field {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise InvalidInputError(f"malformed scenario: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)


def _opt_tuple(x):
    return None if x is None else tuple(float(v) for v in x)


def _load_quat(q, name) -> Quaternion:
    q = np.asarray(q, dtype=float).reshape(4)
    if abs(np.linalg.norm(q) - 1.0) > INPUT_UNIT_TOL:
        raise InvalidInputError(f"{name} is not a unit quaternion (norm {np.linalg.norm(q)!r})")
    return normalize(q)


def _unknown_entry_names(par: InertiaParameterization):
    out = []
    for col in range(par.n_mu):
        row = int(np.flatnonzero(par.Lbar1[:, col])[0])
        out.append((INERTIA_ENTRIES[row], col))
    return out


# --------------------------------------------------------------------------
# the bundled example
# --------------------------------------------------------------------------

EXAMPLE_C = np.diag([0.1229, 0.2195, 0.2646, 0.1145])
EXAMPLE_K = np.diag([1.2041, 1.6284, 2.7351, 5.2409])
EXAMPLE_DELTA = np.array([
    [1.3523, 1.1519, 2.2167, 1.2364],
    [1.2784, 1.0176, 1.5891, -1.6537],
    [2.1530, -1.2724, -0.8324, 0.2251],
])
#: printed to four digits; normalized before use
EXAMPLE_Q0_RAW = np.array([0.3, -0.2, -0.3, 0.8832])
EXAMPLE_QD_RAW = np.array([-0.24, -0.57, -0.18, 0.77])


def example_inertia(mu: float) -> np.ndarray:
    return np.array([[mu, 3.0, 0.0], [3.0, 100.0, 0.0], [0.0, 0.0, 10.0]])


def example_disturbance(sigma: float = 0.2) -> DisturbanceModel:
    return DisturbanceModel((
        AxisDisturbance(0.0, (Tone(1.0, 1.0, 0.0),)),
        AxisDisturbance(0.0, (Tone(2.0, 0.8, 0.0),)),
        AxisDisturbance(0.0, (Tone(6.0, sigma, 0.0),)),
    ))


def example_scenario(dt: float = 1e-3, t_final: float = 800.0, decimate: int | None = None) -> Scenario:
    """The rest-to-rest manoeuvre with parameter switches at 200, 400 and 600 s.

    0-200 s: sigma = 0.2, mu = 20, ``R_hat`` pinned to the (correct) assumed
    values, no adaptation. 200 s: sigma -> 1, mu -> 22. 400 s: adaptation on
    with k = 10. 600 s: parameters revert to sigma = 0.2, mu = 20. Switches at
    or after ``t_final`` are dropped.
    """
    J = example_inertia(20.0)
    if decimate is None:
        decimate = max(1, int(round(0.1 / dt)))
    events = [
        Event(200.0, (Change("set-disturbance-frequency", axis=2, tone=0, value=1.0),
                      Change("set-inertia-parameter", index=0, value=22.0))),
        Event(400.0, Change("enable-adaptation")),
        Event(600.0, (Change("set-disturbance-frequency", axis=2, tone=0, value=0.2),
                      Change("set-inertia-parameter", index=0, value=20.0))),
    ]
    # a shortened run keeps only the switches that fall inside it
    events = [e for e in events if e.time < t_final]
    return Scenario(
        t_final=t_final, dt=dt,
        q_d=normalize(EXAMPLE_QD_RAW),
        initial=PlantState(normalize(EXAMPLE_Q0_RAW), np.zeros(3), np.zeros(4), np.zeros(4)),
        gains=Gains(10.0, 50.0, 10.0, adaptation_enabled=False),
        spacecraft=SpacecraftParams(J, EXAMPLE_DELTA, EXAMPLE_C, EXAMPLE_K),
        inertia=InertiaParameterization.from_inertia(J, ("J11",)),
        disturbance=example_disturbance(0.2),
        design=DesignConfig(unknown=((2, 0),), nominal_sigma=(0.0,), basis=((2,),),
                            assumed_sigma=(0.2,), assumed_mu=(20.0,)),
        events=tuple(events),
        decimate=decimate,
        name="example",
    )


def certified_scenario(dt: float = 1e-3, t_final: float = 120.0, decimate: int | None = None) -> Scenario:
    """A variant of the example whose gains pass the sufficient gain conditions.

    Weaker coupling (delta / 10), stiffer damping (10 C) and k2 = 200 bring
    the certified k2 bound to about 64. Adaptation runs from t = 0 with the
    estimate started at the stale values (sigma = 0.2, mu = 20) while the
    truth is sigma = 1, mu = 22; at 60 s the frequency drops to 0.5.
    """
    J = example_inertia(22.0)
    if decimate is None:
        decimate = max(1, int(round(0.1 / dt)))
    return Scenario(
        t_final=t_final, dt=dt,
        q_d=normalize(EXAMPLE_QD_RAW),
        initial=PlantState(normalize(EXAMPLE_Q0_RAW), np.zeros(3), np.zeros(4), np.zeros(4)),
        gains=Gains(10.0, 200.0, 10.0, adaptation_enabled=True),
        spacecraft=SpacecraftParams(J, 0.1 * EXAMPLE_DELTA, 10.0 * EXAMPLE_C, EXAMPLE_K),
        inertia=InertiaParameterization.from_inertia(J, ("J11",)),
        disturbance=example_disturbance(1.0),
        design=DesignConfig(unknown=((2, 0),), nominal_sigma=(0.0,), basis=((2,),)),
        events=(Event(60.0, Change("set-disturbance-frequency", axis=2, tone=0, value=0.5)),),
        decimate=decimate,
        R_hat0=(20.0, 0.8, 0.04),
        name="certified",
    )
