"""Command-line front end.

Exit codes: 0 success (or a satisfied/PE verdict), 1 runtime failure,
2 usage or schema error. ``check`` also exits 2 on a negative verdict.
Every error path prints exactly one line ``flexatt: <reason>: <message>``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import (ConfigurationError, FlexAttError, FrequencyError, IntegrationDivergedError, InvalidInputError,
                     SynthesisError)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class CLIError(Exception):
    def __init__(self, reason: str, message: str, code: int):
        super().__init__(message)
        self.reason = reason
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError("usage-error", message, EXIT_USAGE)


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def _read(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise CLIError("usage-error", f"{what} file not found: {path}", EXIT_USAGE)
    with open(path) as fh:
        return fh.read()


def _load_scenario(args):
    from .scenario import Scenario

    if not args.scenario:
        raise CLIError("usage-error", "--scenario is required", EXIT_USAGE)
    text = _read(args.scenario, "scenario")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CLIError("schema-error", f"{args.scenario}: invalid JSON ({exc})", EXIT_USAGE) from exc
    sc = Scenario.from_dict(doc)
    if getattr(args, "dt", None) is not None:
        from dataclasses import replace

        sc = replace(sc, dt=float(args.dt))
    if getattr(args, "decimate", None) is not None:
        from dataclasses import replace

        sc = replace(sc, decimate=int(args.decimate))
    return sc, text


def _load_design(args, scenario):
    from .exosystem import InternalModelDesign

    if not args.design:
        return scenario.synthesize_design(), None
    text = _read(args.design, "design")
    try:
        design = InternalModelDesign.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise CLIError("schema-error", f"{args.design}: invalid JSON ({exc})", EXIT_USAGE) from exc
    _check_design_matches(design, scenario)
    return design, text


def _check_design_matches(design, scenario) -> None:
    model = scenario.disturbance
    counts = tuple(len(ax.tones) for ax in model.axes)
    if tuple(len(f) for f in design.freqs) != counts:
        raise CLIError("schema-error", "design frequency template does not match the scenario disturbance",
                       EXIT_USAGE)
    if tuple(design.unknown) != tuple(scenario.design.unknown):
        raise CLIError("schema-error", "design unknown-frequency list does not match the scenario", EXIT_USAGE)


def _write(path: str, text: str) -> None:
    from .reproduce import write_text

    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    write_text(path, text)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_design(args) -> int:
    sc, _ = _load_scenario(args)
    design = sc.synthesize_design()
    text = design.to_json()
    if args.out:
        _write(args.out if args.out.endswith(".json") else os.path.join(args.out, "design.json"), text)
    else:
        sys.stdout.write(text)
    print(f"design: r={design.r} ell={design.ell} sylvester residual {design.sylvester_residual:.2e} "
          f"fit residual {design.fit_residual:.2e}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .reproduce import manifest
    from .sim import run_scenario

    sc, scen_text = _load_scenario(args)
    design, design_text = _load_design(args, sc)
    if not args.out:
        raise CLIError("usage-error", "--out is required", EXIT_USAGE)
    traj = run_scenario(sc, design)
    csv_text = traj.to_csv()
    _write(os.path.join(args.out, "trajectory.csv"), csv_text)
    inputs = {"scenario": scen_text, "design": design_text or "", "dt": repr(sc.dt), "decimate": str(sc.decimate)}
    _write(os.path.join(args.out, "manifest.json"),
           manifest(args.scenario, args.design, args.out, inputs, {"trajectory.csv": csv_text}))
    print(f"simulate: {traj.t.size} records written to {os.path.join(args.out, 'trajectory.csv')}", file=sys.stderr)
    return EXIT_OK


def _parse_window(text):
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise CLIError("usage-error", f"--window expects 'lo,hi', got {text!r}", EXIT_USAGE) from exc
    return lo, hi


def cmd_check(args) -> int:
    from . import analysis
    from .reproduce import adaptive_window, gains_report, phase_table
    from .sim import read_csv, trajectory_from_csv

    kind = args.kind
    report = None
    verdict = False

    if kind == "pe" and args.columns:
        # generic signal CSV: first column is time, the named columns form the vector signal
        header, data = read_csv(_read(args.trajectory, "trajectory") if args.trajectory else "")
        missing = [c for c in args.columns.split(",") if c not in header]
        if missing:
            raise CLIError("schema-error", f"columns not in CSV: {','.join(missing)}", EXIT_USAGE)
        t = data[:, 0]
        dts = np.diff(t)
        if dts.size == 0 or np.ptp(dts) > 1e-9 * max(1.0, abs(dts.mean())):
            raise CLIError("schema-error", "pe check needs a uniformly sampled time column", EXIT_USAGE)
        F = data[:, [header.index(c) for c in args.columns.split(",")]]
        win = _parse_window(args.window)
        if win is not None:
            m = (t >= win[0] - 1e-9) & (t <= win[1] + 1e-9)
            F, t = F[m], t[m]
        cfg = analysis.PESignalConfig(T0=args.T0, theta=args.theta, t0=float(t[0]), dt=float(dts.mean()))
        report = analysis.pe_check(F, cfg)
        verdict = report.is_pe
        text = report.to_text()
    else:
        sc, _ = _load_scenario(args)
        design, _ = _load_design(args, sc)
        if kind == "gains":
            report = gains_report(sc, design)
            verdict = report.satisfied
            text = report.to_text()
        else:
            if not args.trajectory:
                raise CLIError("usage-error", f"check {kind} needs --trajectory", EXIT_USAGE)
            traj = trajectory_from_csv(_read(args.trajectory, "trajectory"), sc, design)
            rows = phase_table(sc, design)
            win = _parse_window(args.window)
            if win is None:
                row = adaptive_window(sc, design) or rows[-1]
            else:
                row = next((r for r in rows if r["t_start"] <= win[0] < r["t_end"]), rows[-1])
            lo, hi = win if win is not None else (row["t_start"], row["t_end"])
            sigma, mu = np.array(row["sigma"]), np.array(row["mu"])
            if kind == "lyapunov":
                if traj.V is None:
                    raise CLIError("schema-error", "trajectory has no V columns (analysis disabled)", EXIT_USAGE)
                phases = {r["phase"] for r in rows if r["adaptation"]}
                report = analysis.lyapunov_monotonicity(traj.t, traj.V[:, 0], traj.phase_index, phases)
                verdict = report["monotone"]
                text = "\n".join(f"phase {p['phase']} [{p['t_start']:g}, {p['t_end']:g}] s: max relative increase "
                                 f"{p['max_rel_increase']:.3e} -> {'monotone' if p['monotone'] else 'NOT monotone'}"
                                 for p in report["phases"]) or "no adaptive phase to check"
            elif kind == "pe":
                report = analysis.estimate_convergence_report(traj, design, (sigma, mu), model=row["_phase"].disturbance,
                                                              par=row["_phase"].inertia, window=(lo, hi),
                                                              T0=args.T0, theta=args.theta)["pe"]
                verdict = bool(report.get("is_pe"))
                text = f"y(t) PE over [{lo:g}, {hi:g}] s: {report.get('is_pe')} (inf lambda_min " \
                       f"{report.get('min_window_gram_eig', float('nan')):.6g})"
            else:
                report = analysis.estimate_convergence_report(traj, design, (sigma, mu), model=row["_phase"].disturbance,
                                                              par=row["_phase"].inertia, window=(lo, hi))
                target = report["frequencies"] or report["components"]
                verdict = all(c["converged"] for c in target)
                text = analysis.convergence_text(report)
    print(text)
    if args.out:
        _write(args.out, analysis.dumps(report))
    if not verdict:
        print(f"flexatt: verdict-negative: check {kind} not satisfied", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def cmd_reproduce_example(args) -> int:
    from .reproduce import StageError, reproduce
    from .scenario import example_scenario

    out = args.out or "example_output"
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        raise CLIError("usage-error", f"output directory {out} is not empty (use --force)", EXIT_USAGE)
    dt = 1e-3 if args.dt is None else float(args.dt)
    sc = example_scenario(dt=dt, decimate=args.decimate)
    try:
        code = reproduce(sc, out, log=lambda s: print(s, file=sys.stderr))
    except StageError as exc:
        raise CLIError(f"stage-failed:{exc.stage}", _one_line(exc.cause), EXIT_RUNTIME) from exc
    if code != 0:
        raise CLIError("stage-failed:acceptance", "phase checks failed, see reports/phase_checks.txt", EXIT_RUNTIME)
    print(f"artifacts written to {out}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flexatt", description="Adaptive attitude control of a flexible spacecraft: "
                                            "design, simulation and analysis.")
    p.add_argument("--seedless", action="store_true",
                   help="assert that no randomness is used (all commands are deterministic)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="synthesize the internal-model design for a scenario")
    d.add_argument("--scenario", required=True)
    d.add_argument("--out", help="design JSON path (or directory); stdout if omitted")

    s = sub.add_parser("simulate", help="simulate a scenario and write telemetry CSV")
    s.add_argument("--scenario", required=True)
    s.add_argument("--design", help="design JSON from 'flexatt design' (synthesized if omitted)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--dt", type=float)
    s.add_argument("--decimate", type=int)

    c = sub.add_parser("check", help="analysis reports on a scenario or trajectory")
    c.add_argument("kind", choices=("gains", "pe", "lyapunov", "convergence"))
    c.add_argument("--scenario")
    c.add_argument("--design")
    c.add_argument("--trajectory", help="telemetry CSV")
    c.add_argument("--window", help="'lo,hi' time window in seconds")
    c.add_argument("--columns", help="pe only: comma-separated CSV columns forming the signal")
    c.add_argument("--T0", type=float, default=2.0 * np.pi, help="PE window length (s)")
    c.add_argument("--theta", type=float, default=1e-3, help="PE level")
    c.add_argument("--out", help="write the JSON report here")

    r = sub.add_parser("reproduce-example", help="run the bundled example end to end")
    r.add_argument("--out", default="example_output")
    r.add_argument("--dt", type=float)
    r.add_argument("--decimate", type=int)
    r.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    return p


COMMANDS = {"design": cmd_design, "simulate": cmd_simulate, "check": cmd_check,
            "reproduce-example": cmd_reproduce_example}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "dt", None) is not None and not args.dt > 0.0:
            raise CLIError("usage-error", f"--dt must be positive, got {args.dt}", EXIT_USAGE)
        if getattr(args, "decimate", None) is not None and args.decimate < 1:
            raise CLIError("usage-error", f"--decimate must be >= 1, got {args.decimate}", EXIT_USAGE)
        return COMMANDS[args.command](args)
    except CLIError as exc:
        reason, message, code = exc.reason, str(exc), exc.code
    except IntegrationDivergedError as exc:
        reason, message, code = "integration-diverged", f"t={exc.t!r}: {exc}", EXIT_RUNTIME
    except (FrequencyError, SynthesisError) as exc:
        reason, message, code = "synthesis-error", str(exc), EXIT_RUNTIME
    except (InvalidInputError, ConfigurationError) as exc:
        reason, message, code = "schema-error", str(exc), EXIT_USAGE
    except FlexAttError as exc:
        reason, message, code = "runtime-error", str(exc), EXIT_RUNTIME
    except OSError as exc:
        reason, message, code = "io-error", str(exc), EXIT_RUNTIME
    print(f"flexatt: {reason}: {_one_line(message)}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
