"""Acceptance suite: one PASS/FAIL line per criterion, each at its stated tolerance.

Run under pytest (the lines are printed in the terminal summary) or directly:

    python3 tests/test_acceptance.py
"""

import json
import os
import time

import numpy as np
import pytest

from flexatt.analysis import (PESignalConfig, certificate_for_scenario, check_gain_conditions,
                              estimate_convergence_report, lyapunov_monotonicity, pe_check, search_certificate)
from flexatt.exosystem import (choose_MN, exosystem_matrices, exosystem_state, regressor_rho, solve_sylvester,
                               synthesize, true_R)
from flexatt.plant import F_terms, InertiaParameterization, disturbance_eval, split_L
from flexatt.scenario import certified_scenario, example_disturbance, example_inertia, example_scenario
from flexatt.sim import rk4_step, run_scenario

GOLDEN = json.load(open(os.path.join(os.path.dirname(__file__), "fixtures", "golden.json")))

#: lines collected for the terminal summary
RESULTS = []


def report(tag, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {tag}: {detail}"
    RESULTS.append(line)
    print(line)
    return passed


# --------------------------------------------------------------------------
# shared runs
# --------------------------------------------------------------------------

_cache = {}


def example_run_timed():
    if "example" not in _cache:
        scen = example_scenario(dt=1e-3)
        t0 = time.perf_counter()
        design = scen.synthesize_design()
        traj = run_scenario(scen, design)
        _cache["example"] = (scen, design, traj, time.perf_counter() - t0)
    return _cache["example"]


def certified_run_per_step():
    if "certified" not in _cache:
        scen = certified_scenario(dt=1e-3, decimate=1)
        design = scen.synthesize_design()
        _cache["certified"] = (scen, design, run_scenario(scen, design))
    return _cache["certified"]


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    worst_res, worst_row = 0.0, 0.0
    for b in (0.2, 0.8, 1.0):
        Phi, Psi = exosystem_matrices([b], False)
        M, N = choose_MN(2)
        T = solve_sylvester(Phi, M, N, Psi)
        worst_res = max(worst_res, np.linalg.norm(T @ Phi - M @ T - N @ Psi))
        worst_row = max(worst_row, np.abs(Psi @ np.linalg.inv(T) - [[3 - b * b, 2]]).max())
    dt = time.perf_counter() - t0
    ok = worst_res <= 1e-10 and worst_row <= 1e-9 and dt < 1.0
    return report("1 (Sylvester synthesis)", ok,
                  f"max residual {worst_res:.2e} (<= 1e-10), max |Psi T^-1 - [3-b^2, 2]| {worst_row:.2e} (<= 1e-9), "
                  f"runtime {dt:.3f} s (< 1 s)")


def criterion_2():
    t0 = time.perf_counter()
    design = synthesize(example_disturbance(0.2), unknown=((2, 0),), nominal_sigma=(0.0,))
    dt = time.perf_counter() - t0
    E0_ref = np.zeros((3, 6))
    E0_ref[0, :2], E0_ref[1, 2:4], E0_ref[2, 4:] = [2, 2], [2.36, 2], [3, 2]
    E_ref = np.zeros((3, 6))
    E_ref[2, 4:] = [-1, 0]
    err_coef = max(np.abs(design.E0 - E0_ref).max(), np.abs(design.E_blocks[0] - E_ref).max())
    err_grid = max(np.abs(design.psi_tinv_model([s]) - design.psi_tinv_at([s])).max()
                   for s in np.linspace(0.0, 1.5, 151))
    ok = len(design.E_blocks) == 1 and err_coef <= 1e-8 and err_grid <= 1e-8 and dt < 1.0
    return report("2 (parameterization fit)", ok,
                  f"max coefficient error {err_coef:.2e}, max grid error on [0, 1.5] {err_grid:.2e} (<= 1e-8), "
                  f"runtime {dt:.3f} s (< 1 s)")


def criterion_3():
    design = synthesize(example_disturbance(0.2), unknown=((2, 0),), nominal_sigma=(0.0,))
    worst, slowest = 0.0, 0.0
    for sigma in (0.2, 1.0):
        t0 = time.perf_counter()
        model = example_disturbance(sigma)
        T = design.T_at([sigma])
        A = T @ design.Phi_at([sigma]) @ np.linalg.inv(T)
        out = -design.psi_tinv_at([sigma])
        h = 1e-3
        n = int(round(100.0 / h))
        # RK4 on a linear system is a fixed one-step map; build it with the integrator itself
        P = rk4_step(lambda X, s: A @ X, np.eye(len(A)), 0.0, h)
        theta = -T @ exosystem_state(model, 0.0, design.has_bias)
        for k in range(n):
            theta = P @ theta
            worst = max(worst, np.abs(out @ theta - disturbance_eval(model, (k + 1) * h)).max())
        slowest = max(slowest, time.perf_counter() - t0)
    ok = worst <= 1e-8 and slowest < 5.0
    return report("3 (internal-model steady state)", ok,
                  f"max |-Psi T^-1 theta - d| over 100 s at sigma 0.2 and 1 {worst:.2e} (<= 1e-8), "
                  f"slowest run {slowest:.2f} s (< 5 s)")


def _regressor_identity_errors(n=1000, seed=7):
    rng = np.random.default_rng(seed)
    design = synthesize(example_disturbance(0.2), unknown=((2, 0),), nominal_sigma=(0.0,))
    par = InertiaParameterization.from_inertia(example_inertia(22.0), ("J11",))
    sigma, mu = np.array([1.0]), par.mu_true
    G = design.psi_tinv_at(sigma)
    R = true_R(sigma, mu, design.basis)
    N = design.N
    stated, corrected = 0.0, 0.0
    t0 = time.perf_counter()
    for _ in range(n):
        w = rng.normal(size=3)
        zeta = rng.normal(size=(design.r, 1))
        v = rng.normal(size=design.r)
        L1, L0 = split_L(w, par)
        F1, _ = F_terms(w, par)
        lhs = regressor_rho(w, zeta, v, design, par) @ R
        rhs = F1 @ mu + G @ (zeta @ mu + N @ L1 @ mu + N @ L0 - v)
        stated = max(stated, np.abs(lhs - rhs).max())
        corrected = max(corrected, np.abs(lhs - (rhs - design.E0 @ (N @ L0 - v))).max())
    return stated, corrected, time.perf_counter() - t0


def criterion_4():
    stated, _, dt = _regressor_identity_errors()
    ok = stated <= 1e-10 and dt < 1.0
    return report("4 (regressor identity, as stated)", ok,
                  f"max |rho R - (F1 mu + Psi T^-1 (zeta mu + N L1 mu + N L0 - v))| {stated:.3e} (<= 1e-10), "
                  f"runtime {dt:.3f} s (< 1 s)")


def criterion_4_corrected():
    _, corrected, dt = _regressor_identity_errors()
    ok = corrected <= 1e-10 and dt < 1.0
    return report("4b (regressor identity with the -E0 (N L0 - v) term)", ok,
                  f"max error {corrected:.3e} (<= 1e-10), runtime {dt:.3f} s (< 1 s)")


def criterion_5():
    _, _, traj, dt = example_run_timed()
    qn = traj.q_ev_norm
    eta = np.linalg.norm(traj.eta, axis=1)

    def peak(lo, hi):
        return qn[traj.window(lo, hi)].max()

    plateau_live = peak(150.0, 200.0)
    plateau = GOLDEN["plateau_150_200"]
    a = plateau_live < 1e-2
    b = peak(200.0, 400.0) > 5.0 * plateau
    c = peak(580.0, 600.0) < 1e-2
    d = peak(780.0, 800.0) < 1e-2
    eta_end = [eta[int(np.argmin(np.abs(traj.t - t)))] for t in (200.0, 600.0, 800.0)]
    e = max(eta_end) < 1e-2
    frozen = abs(plateau_live - plateau) <= 1e-6 * plateau
    ok = a and b and c and d and e and frozen and dt < 60.0
    return report("5 (example phase behaviour)", ok,
                  f"(a) max|q_ev| [150,200] {plateau_live:.3e} < 1e-2: {a}; "
                  f"(b) sup [200,400] / frozen plateau {peak(200.0, 400.0) / plateau:.1f} > 5: {b}; "
                  f"(c) max [580,600] {peak(580.0, 600.0):.3e} < 1e-2: {c}; "
                  f"(d) max [780,800] {peak(780.0, 800.0):.3e} < 1e-2: {d}; "
                  f"(e) |eta| at 200/600/800 s max {max(eta_end):.3e} < 1e-2: {e}; "
                  f"plateau matches frozen {plateau:.6e}: {frozen}; runtime {dt:.1f} s (< 60 s)")


def criterion_6():
    scen, design, traj, _ = example_run_timed()
    m = traj.window(580.0, 600.0)
    err = np.abs(np.sqrt(np.clip(traj.R_hat[m, -1], 0.0, None)) - 1.0).max()
    rep = estimate_convergence_report(traj, design, ([1.0], [22.0]), model=example_disturbance(1.0),
                                      par=scen.inertia.with_mu([22.0]), window=(400.0, 600.0))
    r1 = rep["components"][0]
    ok = err <= 0.05 and not r1["converged"]
    return report("6 (frequency estimate convergence)", ok,
                  f"max |sqrt(Rhat3) - 1| on [580,600] {err:.3e} (<= 0.05); Rhat1 final {r1['final']:.4g} vs mu 22 "
                  f"flagged non-convergent: {not r1['converged']}")


def criterion_7():
    dt = 1e-3
    t = np.arange(0.0, 3 * 2 * np.pi + dt, dt)
    cfg = PESignalConfig(T0=2 * np.pi, theta=1.0, dt=dt)
    rep = pe_check(1.5 * (np.cos(t) - np.sin(t)), cfg)
    dec = pe_check(np.exp(-t), cfg)
    ok = abs(rep.min_window_gram_eig - 2.25) <= 1e-3 and rep.is_pe and not dec.is_pe
    return report("7 (PE machinery)", ok,
                  f"window-Gram inf {rep.min_window_gram_eig:.6f} (2.25 +- 1e-3), verdict PE: {rep.is_pe}; "
                  f"exp(-t) inf {dec.min_window_gram_eig:.2e}, verdict PE: {dec.is_pe}")


def criterion_8():
    scen, design, traj = certified_run_per_step()
    cert = certificate_for_scenario(scen, design)
    truths = [[1.0], [0.5]]
    verified = all(check_gain_conditions(cert, scen.gains, scen.spacecraft, design, s).satisfied for s in truths)
    searched = all(search_certificate(scen.gains, scen.spacecraft, design, s).satisfied for s in truths)
    mono = lyapunov_monotonicity(traj.t, traj.V[:, 0], traj.phase_index, rel_slack=1e-6)
    worst = max(p["max_rel_increase"] for p in mono["phases"])
    steps = sum(p["steps"] for p in mono["phases"])
    ok = verified and searched and mono["monotone"] and len(mono["phases"]) == 2
    return report("8 (Lyapunov monotonicity)", ok,
                  f"certificate margins >= 0 at sigma = 1 and 0.5: {verified} (fresh searches: {searched}); "
                  f"max relative step increase of V over {steps} steps {worst:.3e} (<= 1e-6)")


def _oscillator_error(h_target):
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    n = int(round(2 * np.pi / h_target))
    h = 2 * np.pi / n
    x = np.array([1.0, 0.0])
    for k in range(n):
        x = rk4_step(lambda y, s: A @ y, x, k * h, h)
    return np.abs(x - [1.0, 0.0]).max()


def criterion_9(example_csv_other):
    ratio = _oscillator_error(0.05) / _oscillator_error(0.025)
    _, _, traj, _ = example_run_timed()
    drift = traj.max_quat_drift
    same = traj.to_csv() == example_csv_other
    ok = 12.0 <= ratio <= 20.0 and drift <= 1e-9 and same
    return report("9 (numerical hygiene)", ok,
                  f"RK4 error ratio {ratio:.2f} (in [12, 20]); max quaternion drift per step {drift:.2e} (<= 1e-9); "
                  f"byte-identical CSV across runs: {same}")


def criterion_10():
    _, _, traj, _ = example_run_timed()
    err = np.abs(traj["z"][:, 4:] - traj.eta).max()
    return report("10 (auxiliary identity)", err <= 1e-6, f"max |z2 - eta| over the run {err:.2e} (<= 1e-6)")


# --------------------------------------------------------------------------
# pytest entry points
# --------------------------------------------------------------------------

def test_criterion_01_sylvester():
    assert criterion_1()


def test_criterion_02_fit():
    assert criterion_2()


def test_criterion_03_steady_state():
    assert criterion_3()


def test_criterion_04_regressor_identity_as_stated():
    # the stated right-hand side omits -E0 (N L0 - v); see criterion 4b
    assert criterion_4()


def test_criterion_04b_regressor_identity_corrected():
    assert criterion_4_corrected()


def test_criterion_05_phase_behaviour():
    assert criterion_5()


def test_criterion_06_frequency_estimate():
    assert criterion_6()


def test_criterion_07_pe():
    assert criterion_7()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_criterion_08_lyapunov():
    assert criterion_8()


def test_criterion_09_hygiene(example_run):
    assert criterion_9(example_run.to_csv())


def test_criterion_10_auxiliary_identity():
    assert criterion_10()


if __name__ == "__main__":
    scen = example_scenario(dt=1e-3)
    other = run_scenario(scen, scen.synthesize_design()).to_csv()
    for fn in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_4_corrected, criterion_5, criterion_6,
               criterion_7, criterion_8, lambda: criterion_9(other), criterion_10):
        fn()
