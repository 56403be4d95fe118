"""Figure emission: gnuplot scripts over the telemetry CSV and a small SVG renderer."""

from __future__ import annotations

import math

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def gnuplot_script(csv_name: str, columns: list, series: list, title: str, ylabel: str, out_png: str) -> str:
    """Standalone gnuplot script plotting ``series`` (column names or ``(label, expr)``) against ``t``."""
    idx = {c: i + 1 for i, c in enumerate(columns)}
    plots = []
    for s in series:
        if isinstance(s, tuple):
            label, expr = s
            for name, i in sorted(idx.items(), key=lambda kv: -len(kv[0])):
                expr = expr.replace("{" + name + "}", f"${i}")
            plots.append(f"'{csv_name}' using 1:({expr}) with lines title '{label}'")
        else:
            plots.append(f"'{csv_name}' using 1:{idx[s]} with lines title '{s}'")
    return "\n".join([
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 1000,600",
        f"set output '{out_png}'",
        f"set title '{title}'",
        "set xlabel 't (s)'",
        f"set ylabel '{ylabel}'",
        "set grid",
        "plot " + ", \\\n     ".join(plots),
        "",
    ])


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _thin(t: np.ndarray, y: np.ndarray, max_points: int) -> tuple:
    if t.size <= max_points:
        return t, y
    # keep per-bucket min and max so spikes survive the thinning
    edges = np.linspace(0, t.size, max_points // 2 + 1).astype(int)
    keep = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        seg = y[a:b]
        i, j = a + int(np.argmin(seg)), a + int(np.argmax(seg))
        keep.extend(sorted({i, j}))
    keep = np.array(keep)
    return t[keep], y[keep]


def svg_line_plot(t, series: dict, title: str, ylabel: str, width: int = 900, height: int = 520,
                  max_points: int = 2000) -> str:
    """Render ``{label: values}`` against ``t`` as a standalone SVG document."""
    t = np.asarray(t, dtype=float)
    ml, mr, mt, mb = 80, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.zeros(1)
    y_lo, y_hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = (float(t[0]), float(t[-1])) if t.size else (0.0, 1.0)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0

    def X(v):
        return ml + (v - x_lo) / (x_hi - x_lo) * pw

    def Y(v):
        return mt + (y_hi - v) / (y_hi - y_lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml + pw / 2:.1f}" y="22" text-anchor="middle" font-size="15">{title}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _nice_ticks(x_lo, x_hi):
        x = X(v)
        out.append(f'<line x1="{x:.2f}" y1="{mt}" x2="{x:.2f}" y2="{mt + ph}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{x:.2f}" y="{mt + ph + 16}" text-anchor="middle">{v:g}</text>')
    for v in _nice_ticks(y_lo, y_hi):
        y = Y(v)
        out.append(f'<line x1="{ml}" y1="{y:.2f}" x2="{ml + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.2f}" text-anchor="end">{v:g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">t (s)</text>')
    out.append(f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{ylabel}</text>')
    for k, (label, y) in enumerate(zip(series.keys(), ys)):
        color = PALETTE[k % len(PALETTE)]
        tt, yy = _thin(t, y, max_points)
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(tt, yy) if np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        ly = mt + 14 + 18 * k
        out.append(f'<line x1="{ml + pw + 12}" y1="{ly - 4}" x2="{ml + pw + 36}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 42}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def figure_set(traj, csv_name: str = "trajectory.csv") -> dict:
    """File name -> content for the two standard figures (attitude error, parameter estimates)."""
    cols = traj.columns()
    qe = {f"qe{i + 1}": traj.q_e[:, i] for i in range(4)}
    R = traj.R_hat
    rh = {f"Rhat{i + 1}": R[:, i] for i in range(R.shape[1])}
    series_R = [f"Rhat{i + 1}" for i in range(R.shape[1])]
    basis = traj.meta.get("basis_tags", [])
    sqrt_series = {}
    for j, tag in enumerate(basis):
        if tag.endswith("^2") and "*" not in tag:
            col = R.shape[1] - len(basis) + j
            name = f"sqrt(Rhat{col + 1})"
            sqrt_series[name] = np.sqrt(np.clip(R[:, col], 0.0, None))
            series_R.append((name, f"sqrt({{Rhat{col + 1}}} > 0 ? {{Rhat{col + 1}}} : 0)"))
    return {
        "fig_attitude_error.gp": gnuplot_script(csv_name, cols, list(qe), "Attitude quaternion error",
                                                "q_e", "fig_attitude_error.png"),
        "fig_attitude_error.svg": svg_line_plot(traj.t, qe, "Attitude quaternion error", "q_e"),
        "fig_parameter_estimates.gp": gnuplot_script(csv_name, cols, series_R, "Adaptive parameter estimates",
                                                     "estimate", "fig_parameter_estimates.png"),
        "fig_parameter_estimates.svg": svg_line_plot(traj.t, {**rh, **sqrt_series},
                                                     "Adaptive parameter estimates", "estimate"),
    }
