"""Plain-CSV series and self-contained SVG charts from run reports.

Byte output is deterministic for a fixed report, so re-running a
command reproduces identical figure files.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728")

_W, _H = 720, 440
_ML, _MR, _MT, _MB = 60, 16, 40, 110


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _axis_range(values, lo=None, hi=None):
    vmin = min(values) if lo is None else lo
    vmax = max(values) if hi is None else hi
    if vmax <= vmin:
        vmax = vmin + 1.0
    pad = 0.05 * (vmax - vmin)
    return (vmin - pad if lo is None else lo), (vmax + pad if hi is None else hi)


def line_chart_svg(title: str, x_labels: list[str], series: list[tuple[str, list[float]]],
                   hline: float | None = None, hline_label: str = "",
                   y_lo: float | None = None, y_hi: float | None = None) -> str:
    """A minimal line chart: one polyline per series, rotated x tick labels."""
    all_values = [v for _, ys in series for v in ys]
    if hline is not None:
        all_values.append(hline)
    lo, hi = _axis_range(all_values, y_lo, y_hi)
    nx = max(len(x_labels), 2)
    plot_w, plot_h = _W - _ML - _MR, _H - _MT - _MB

    def px(i: int) -> float:
        return _ML + plot_w * i / (nx - 1)

    def py(v: float) -> float:
        return _MT + plot_h * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = lo + frac * (hi - lo)
        y = py(v)
        parts.append(f'<line x1="{_ML - 4}" y1="{_fmt(y)}" x2="{_ML}" y2="{_fmt(y)}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{_fmt(y + 4)}" text-anchor="end">{v:.3g}</text>')
    for i, label in enumerate(x_labels):
        x = px(i)
        parts.append(
            f'<text x="{_fmt(x)}" y="{_H - _MB + 14}" text-anchor="end" '
            f'transform="rotate(-60 {_fmt(x)} {_H - _MB + 14})">{label}</text>'
        )
    if hline is not None:
        y = py(hline)
        parts.append(
            f'<line x1="{_ML}" y1="{_fmt(y)}" x2="{_W - _MR}" y2="{_fmt(y)}" '
            f'stroke="#d62728" stroke-dasharray="6,4"/>'
        )
        if hline_label:
            parts.append(f'<text x="{_W - _MR - 4}" y="{_fmt(y - 4)}" text-anchor="end" '
                         f'fill="#d62728">{hline_label}</text>')
    for s, (label, ys) in enumerate(series):
        color = PALETTE[s % len(PALETTE)]
        points = " ".join(f"{_fmt(px(i))},{_fmt(py(v))}" for i, v in enumerate(ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        lx = _ML + 10 + s * 170
        parts.append(f'<line x1="{lx}" y1="32" x2="{lx + 18}" y2="32" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 22}" y="36">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_svg(title: str, names: list[str], values: list[list[float]]) -> str:
    """A g x g grid; cell darkness scales with the value in [0, 1]."""
    g = len(names)
    cell = 42
    ml, mt = 90, 90
    w = ml + g * cell + 16
    h = mt + g * cell + 16
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'font-family="sans-serif" font-size="10">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for i in range(g):
        parts.append(f'<text x="{ml - 6}" y="{mt + i * cell + cell // 2 + 4}" '
                     f'text-anchor="end">{names[i]}</text>')
        x = ml + i * cell + cell // 2
        parts.append(f'<text x="{x}" y="{mt - 8}" text-anchor="start" '
                     f'transform="rotate(-60 {x} {mt - 8})">{names[i]}</text>')
        for j in range(g):
            v = max(0.0, min(1.0, values[i][j]))
            r = round(255 - 185 * v)
            gb = round(255 - 215 * v)
            color = f"rgb({r},{gb},255)"
            x0, y0 = ml + j * cell, mt + i * cell
            parts.append(f'<rect x="{x0}" y="{y0}" width="{cell}" height="{cell}" '
                         f'fill="{color}" stroke="#cccccc"/>')
            text_color = "black" if v < 0.6 else "white"
            parts.append(f'<text x="{x0 + cell // 2}" y="{y0 + cell // 2 + 4}" '
                         f'text-anchor="middle" fill="{text_color}">{values[i][j]:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def emit_figure_data(report, out_dir) -> list[Path]:
    """Write CSV series + SVG charts for a plottable report payload.

    Greedy reports produce the p-value sequence (with the significance
    rule line) and the with/without-environment AUC sequences; curve
    payloads add the two validation panels; HSIC reports produce the
    dependence heatmap. Non-plottable payloads are a no-op.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.payload
    written: list[Path] = []

    if report.command == "greedy":
        steps = payload["trace"]["steps"]
        labels = [s["removed"] for s in steps]
        pvals = [s["p_value"] for s in steps]
        auc_with = [s["auc_with_env"] for s in steps]
        auc_without = [s["auc_without_env"] for s in steps]
        alpha = payload["alpha"]
        written.append(write_csv(out_dir / "pvalues.csv", ["step", "removed", "p_value"],
                                  [[s["step"], s["removed"], repr(s["p_value"])] for s in steps]))
        written.append(write_csv(out_dir / "auc.csv",
                                  ["step", "removed", "auc_with_env", "auc_without_env"],
                                  [[s["step"], s["removed"], repr(s["auc_with_env"]),
                                    repr(s["auc_without_env"])] for s in steps]))
        written.append(_write(out_dir / "pvalues.svg", line_chart_svg(
            "Conditional-independence p-value per removal", labels,
            [("p-value", pvals)], hline=alpha, hline_label=f"alpha={alpha:g}", y_lo=0.0, y_hi=1.0)))
        written.append(_write(out_dir / "auc.svg", line_chart_svg(
            "Out-of-fold AUC per removal", labels,
            [("with E", auc_with), ("without E", auc_without)])))
        if "curve" in payload:
            curve = payload["curve"]
            clabels = ["(none)"] + [c["excluded"] for c in curve[1:]]
            written.append(write_csv(
                out_dir / "curve.csv",
                ["step", "excluded", "mean_auc_event", "std_auc_event",
                 "mean_auc_spatial", "std_auc_spatial"],
                [[c["step"], c["excluded"] or "", repr(c["mean_auc_event"]),
                  repr(c["std_auc_event"]), repr(c["mean_auc_spatial"]),
                  repr(c["std_auc_spatial"])] for c in curve]))
            written.append(_write(out_dir / "curve_mean.svg", line_chart_svg(
                "Mean out-of-sample AUC", clabels,
                [("event CV", [c["mean_auc_event"] for c in curve]),
                 ("spatial CV", [c["mean_auc_spatial"] for c in curve])])))
            written.append(_write(out_dir / "curve_std.svg", line_chart_svg(
                "Std of out-of-sample AUC", clabels,
                [("event CV", [c["std_auc_event"] for c in curve]),
                 ("spatial CV", [c["std_auc_spatial"] for c in curve])])))
        return written

    if report.command == "hsic":
        names = payload["group_names"]
        values = payload["matrix"]
        written.append(write_csv(out_dir / "hsic_heatmap.csv", names,
                                  [[repr(v) for v in row] for row in values]))
        written.append(_write(out_dir / "hsic.svg",
                              heatmap_svg("Normalized HSIC", names, values)))
        return written

    warnings.warn(f"report for {report.command!r} has no plottable payload", stacklevel=2)
    return written
