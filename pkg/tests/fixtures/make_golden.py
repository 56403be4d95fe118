"""Regenerate golden.json from a reference run of the bundled example.

Run once after the invariant suites pass; the values are then frozen:

    python3 tests/fixtures/make_golden.py
"""

import json
import os

import mpmath as mp
import numpy as np

from flexatt.quat import normalize
from flexatt.scenario import EXAMPLE_Q0_RAW, EXAMPLE_QD_RAW, example_scenario
from flexatt.sim import build_phases, closed_loop_rhs, initial_state, rk4_step, run_scenario

MID_T = 300.0


def quat_error_hp(q, qd):
    mp.mp.dps = 40
    q = [mp.mpf(float(x)) for x in q]
    qd = [mp.mpf(float(x)) for x in qd]
    cross = [qd[1] * q[2] - qd[2] * q[1], qd[2] * q[0] - qd[0] * q[2], qd[0] * q[1] - qd[1] * q[0]]
    ev = [qd[3] * q[i] - cross[i] - q[3] * qd[i] for i in range(3)]
    return [float(x) for x in ev + [sum(qd[i] * q[i] for i in range(3)) + q[3] * qd[3]]]


def main():
    scen = example_scenario()
    design = scen.synthesize_design()
    phase = build_phases(scen, design)[0][2]
    x0 = initial_state(scen, design).pack()
    x1 = rk4_step(lambda y, s: closed_loop_rhs(y, s, phase), x0, 0.0, scen.dt, quat=slice(0, 4))
    traj = run_scenario(scen, design)
    k = int(np.argmin(np.abs(traj.t - MID_T)))
    m = traj.window(150.0, 200.0)
    doc = {
        "quat_error_example": {
            "q": normalize(EXAMPLE_Q0_RAW).as_array().tolist(),
            "q_d": normalize(EXAMPLE_QD_RAW).as_array().tolist(),
            "q_e": quat_error_hp(normalize(EXAMPLE_Q0_RAW).as_array(), normalize(EXAMPLE_QD_RAW).as_array()),
        },
        "rk4_one_step": {"dt": scen.dt, "x0": x0.tolist(), "x1": x1.tolist()},
        "mid_trajectory": {"t": float(traj.t[k]), "x": traj.x[k].tolist(), "u": traj.u[k].tolist(),
                           "V": traj.V[k].tolist(), "phase": int(traj.phase_index[k])},
        "plateau_150_200": float(traj.q_ev_norm[m].max()),
        "final_state": traj.x[-1].tolist(),
    }
    path = os.path.join(os.path.dirname(__file__), "golden.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()
