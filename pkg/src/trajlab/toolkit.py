"""CSV records and SVG scatter plots for sweep results."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigError
from .metrics import ParetoPoint, pareto_front
from .sweep import SweepRecord

CSV_COLUMNS = (
    "strategy", "omega_c", "omega_s", "t_sw", "q", "r", "variant", "condition",
    "n_samples", "steps", "seed", "fidelity_mean", "fidelity_std", "context_mean",
    "context_std", "calls_per_sample", "wall_ms",
)
MIN_SIG_DIGITS = 9


def format_real(x: float) -> str:
    """Positional decimal with at least 9 significant digits; round-trips exactly."""
    x = float(x)
    short = np.format_float_positional(x, unique=True, trim="-")
    digits = short.lstrip("-").replace(".", "").lstrip("0")
    if len(digits) >= MIN_SIG_DIGITS:
        return short
    # trailing zeros after the shortest round-trip digits keep the value exact
    if "." not in short:
        short += "."
    return short + "0" * (MIN_SIG_DIGITS - len(digits))


def _cell(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_real(value)
    return str(value)


def record_row(rec: SweepRecord) -> dict[str, str]:
    params = rec.params
    variant, cond = rec.strategy.superclass_source
    m = rec.metrics
    row = {
        "strategy": rec.strategy.kind,
        "variant": variant.value,
        "condition": cond.value,
        "n_samples": rec.n_samples,
        "steps": rec.steps,
        "seed": rec.seed,
        "fidelity_mean": m.fidelity_mean,
        "fidelity_std": m.fidelity_std,
        "context_mean": m.context_mean,
        "context_std": m.context_std,
        "calls_per_sample": float(rec.calls_per_sample),
        "wall_ms": float(rec.wall_ms),
    }
    for col in ("omega_c", "omega_s", "q", "r"):
        row[col] = float(params[col]) if col in params else None
    row["t_sw"] = params.get("t_sw")
    return {col: _cell(row[col]) for col in CSV_COLUMNS}


def write_rows(rows: Iterable[dict[str, str]], fh, columns: Sequence[str] = CSV_COLUMNS) -> None:
    writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def records_to_csv(records: Iterable[SweepRecord]) -> str:
    buf = io.StringIO()
    write_rows((record_row(r) for r in records), buf)
    return buf.getvalue()


def read_rows(path) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ConfigError(f"{path}: empty CSV file")
        return list(reader.fieldnames), list(reader)


def numeric_column(rows: list[dict[str, str]], column: str, columns: Sequence[str]) -> np.ndarray:
    if column not in columns:
        raise ConfigError(f"missing column {column!r}")
    values = []
    for lineno, row in enumerate(rows, start=2):
        try:
            values.append(float(row[column]))
        except (TypeError, ValueError):
            raise ConfigError(f"line {lineno}: non-numeric {column} value {row[column]!r}") from None
    return np.asarray(values)


def front_rows(rows: list[dict[str, str]], columns: Sequence[str], x: str, y: str) -> list[dict[str, str]]:
    """Non-dominated rows (maximizing ``x`` and ``y``) sorted by ``x`` ascending."""
    xs = numeric_column(rows, x, columns)
    ys = numeric_column(rows, y, columns)
    points = [ParetoPoint(float(a), float(b), record=row) for a, b, row in zip(xs, ys, rows)]
    return [p.record for p in pareto_front(points)]


# --- SVG ---------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 130, 20, 55


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return list(np.linspace(lo, hi, n))


def _span(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def render_svg(
    xs: np.ndarray,
    ys: np.ndarray,
    series: Sequence[str],
    x_label: str,
    y_label: str,
    front: tuple[np.ndarray, np.ndarray] | None = None,
) -> str:
    """Scatter plot with one colour per series and an optional front polyline."""
    if len(xs) == 0:
        raise ConfigError("nothing to plot")
    all_x = xs if front is None else np.concatenate([xs, front[0]])
    all_y = ys if front is None else np.concatenate([ys, front[1]])
    x0, x1 = _span(all_x)
    y0, y1 = _span(all_y)
    pw, ph = WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B

    def px(v):
        return MARGIN_L + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN_T + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + ph}" x2="{MARGIN_L + pw}" y2="{MARGIN_T + ph}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(
            f'<text x="{px(t):.2f}" y="{MARGIN_T + ph + 16}" text-anchor="middle">{t:.3g}</text>'
        )
    for t in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN_L - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{t:.3g}</text>')
    out.append(
        f'<text x="{MARGIN_L + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(x_label)}</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN_T + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.2f})">{escape(y_label)}</text>'
    )

    names = list(dict.fromkeys(series))
    colours = {name: PALETTE[i % len(PALETTE)] for i, name in enumerate(names)}
    if front is not None and len(front[0]):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(*front))
        out.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    for a, b, s in zip(xs, ys, series):
        out.append(
            f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="4" fill="{colours[s]}">'
            f"<title>{escape(s)} ({a:.6g}, {b:.6g})</title></circle>"
        )
    for i, name in enumerate(names):
        ly = MARGIN_T + 10 + 16 * i
        lx = WIDTH - MARGIN_R + 12
        out.append(f'<rect x="{lx}" y="{ly - 8}" width="10" height="10" fill="{colours[name]}"/>')
        out.append(f'<text x="{lx + 16}" y="{ly + 1}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_csv(in_path, out_path, x: str, y: str, front_path=None, series_column: str = "strategy") -> None:
    columns, rows = read_rows(in_path)
    if not rows:
        raise ConfigError(f"{in_path}: no data rows")
    xs = numeric_column(rows, x, columns)
    ys = numeric_column(rows, y, columns)
    series = [row.get(series_column) or "points" for row in rows]
    front = None
    if front_path is not None:
        fcols, frows = read_rows(front_path)
        front = (numeric_column(frows, x, fcols), numeric_column(frows, y, fcols))
    Path(out_path).write_text(render_svg(xs, ys, series, x, y, front))
