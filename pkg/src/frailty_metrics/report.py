"""Hazard-ratio tables and standalone SVG figures.

Tables format HR and CI bounds to 3 decimals with p-values collapsing to
"<0.001" below that threshold; rounding is the float formatter's
round-half-even with a "." separator regardless of locale. Forest plots are
drawn on the log hazard-ratio axis with a reference line at zero.
"""

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .discrepancy import OlsFit
from .errors import (
    EmptyRows,
    EmptyTable,
    LabelMismatch,
    NonPositiveHR,
)
from .predictor import PredictionTable
from .survival import CoxFitResult

SIGNIFICANCE_LEVEL = 0.05


@dataclass(frozen=True)
class ForestRow:
    label: str
    hr: float
    ci_low: float
    ci_high: float
    p_value: float
    significant: bool


@dataclass(frozen=True)
class TableText:
    csv: str
    text: str


def forest_rows(result: CoxFitResult, labels: list[str]) -> list[ForestRow]:
    if len(labels) != len(result.beta):
        raise LabelMismatch(f"{len(labels)} labels for {len(result.beta)} coefficients")
    return [ForestRow(label=lab, hr=float(result.hr[i]),
                      ci_low=float(result.ci_low[i]),
                      ci_high=float(result.ci_high[i]),
                      p_value=float(result.p_value[i]),
                      significant=bool(result.p_value[i] < SIGNIFICANCE_LEVEL))
            for i, lab in enumerate(labels)]


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def render_hr_table(result: CoxFitResult, labels: list[str]) -> TableText:
    """CSV plus paper-style plain text with '&' separated cells."""
    rows = forest_rows(result, labels)

    csv_lines = ["variable,hazard_ratio,ci_low,ci_high,p_value,significant"]
    for r in rows:
        csv_lines.append(f"{r.label},{r.hr:.3f},{r.ci_low:.3f},{r.ci_high:.3f},"
                         f"{_fmt_p(r.p_value)},{'yes' if r.significant else 'no'}")

    width = max(len("Variable"), max(len(r.label) for r in rows))
    text_lines = [f"{'Variable'.ljust(width)} & Hazard Ratio & 95% CI & p-value & sig"]
    for r in rows:
        marker = "*" if r.significant else "-"
        text_lines.append(f"{r.label.ljust(width)} & {r.hr:.3f} & "
                          f"({r.ci_low:.3f} - {r.ci_high:.3f}) & "
                          f"{_fmt_p(r.p_value)} & {marker}")
    return TableText(csv="\n".join(csv_lines) + "\n",
                     text="\n".join(text_lines) + "\n")


def _svg_open(width: int, height: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        "<style>"
        "text{font-family:sans-serif;font-size:12px;}"
        ".refline{stroke:#888;stroke-dasharray:4 3;}"
        ".whisker{stroke:#1f4e8c;stroke-width:1.6;}"
        ".cap{stroke:#1f4e8c;stroke-width:1.6;}"
        ".marker{fill:#9db8d9;stroke:#1f4e8c;}"
        ".marker.significant{fill:#1f4e8c;}"
        ".axis{stroke:#333;fill:none;}"
        ".tick{stroke:#333;}"
        ".pt{fill:#2b6cb0;fill-opacity:0.75;}"
        ".fit{stroke:#c0392b;stroke-width:1.8;}"
        ".identity{stroke:#999;stroke-width:1.2;stroke-dasharray:5 4;}"
        "</style>",
    ]


def _ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    vals = np.arange(first, hi + step * 1e-9, step)
    return [float(v) for v in vals]


def render_forest_plot(rows: list[ForestRow], axis: str = "log_hr") -> str:
    """One marker per row at log(HR) with a CI whisker, reference line at 0."""
    if axis != "log_hr":
        raise ValueError(f"unsupported axis {axis!r}")
    if not rows:
        raise EmptyRows("forest plot needs at least one row")
    for r in rows:
        if r.hr <= 0 or r.ci_low <= 0 or r.ci_high <= 0:
            raise NonPositiveHR(f"row {r.label!r} has non-positive HR or CI bound")

    logs = [(np.log(r.ci_low), np.log(r.hr), np.log(r.ci_high)) for r in rows]
    lo = min(0.0, min(v[0] for v in logs))
    hi = max(0.0, max(v[2] for v in logs))
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.08 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    width = 800
    height = 40 * len(rows) + 80
    x0, x1 = 250.0, 770.0

    def sx(v: float) -> float:
        return x0 + (v - lo) / (hi - lo) * (x1 - x0)

    parts = _svg_open(width, height)
    base = height - 40.0
    parts.append(f'<line class="refline" x1="{sx(0.0):.2f}" y1="30" '
                 f'x2="{sx(0.0):.2f}" y2="{base:.2f}"/>')
    parts.append(f'<path class="axis" d="M {x0:.2f} {base:.2f} H {x1:.2f}"/>')
    for t in _ticks(lo, hi):
        parts.append(f'<line class="tick" x1="{sx(t):.2f}" y1="{base:.2f}" '
                     f'x2="{sx(t):.2f}" y2="{base + 5:.2f}"/>')
        parts.append(f'<text x="{sx(t):.2f}" y="{base + 18:.2f}" '
                     f'text-anchor="middle">{t:g}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{height - 6:.2f}" '
                 f'text-anchor="middle">log(HR)</text>')

    half = 5.0
    for i, (r, (llo, lmid, lhi)) in enumerate(zip(rows, logs)):
        y = 40.0 * i + 50.0
        cls = "marker significant" if r.significant else "marker"
        parts.append(f'<text x="10" y="{y + 4:.2f}">{escape(r.label)}</text>')
        parts.append(f'<line class="whisker" x1="{sx(llo):.2f}" y1="{y:.2f}" '
                     f'x2="{sx(lhi):.2f}" y2="{y:.2f}"/>')
        for end in (llo, lhi):
            parts.append(f'<line class="cap" x1="{sx(end):.2f}" y1="{y - 4:.2f}" '
                         f'x2="{sx(end):.2f}" y2="{y + 4:.2f}"/>')
        parts.append(f'<rect class="{cls}" x="{sx(lmid) - half:.2f}" '
                     f'y="{y - half:.2f}" width="{2 * half:.2f}" '
                     f'height="{2 * half:.2f}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_scatter(table: PredictionTable, fit: OlsFit) -> str:
    """Predicted vs chronological age with the OLS line and the y = x line."""
    if len(table) == 0:
        raise EmptyTable("no predictions to plot")

    values = np.concatenate([table.chronological_age, table.predicted_age])
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-9:
        lo, hi = lo - 5.0, hi + 5.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    width, height = 640, 640
    m_left, m_right, m_top, m_bottom = 70.0, 20.0, 20.0, 60.0
    x1, y1 = width - m_right, height - m_bottom

    def sx(v: float) -> float:
        return m_left + (v - lo) / (hi - lo) * (x1 - m_left)

    def sy(v: float) -> float:
        return y1 - (v - lo) / (hi - lo) * (y1 - m_top)

    parts = _svg_open(width, height)
    parts.append(f'<path class="axis" d="M {m_left:.2f} {m_top:.2f} '
                 f'V {y1:.2f} H {x1:.2f}"/>')
    for t in _ticks(lo, hi):
        parts.append(f'<path class="tick" d="M {sx(t):.2f} {y1:.2f} v 5"/>')
        parts.append(f'<text x="{sx(t):.2f}" y="{y1 + 18:.2f}" '
                     f'text-anchor="middle">{t:g}</text>')
        parts.append(f'<path class="tick" d="M {m_left:.2f} {sy(t):.2f} h -5"/>')
        parts.append(f'<text x="{m_left - 8:.2f}" y="{sy(t) + 4:.2f}" '
                     f'text-anchor="end">{t:g}</text>')
    parts.append(f'<text x="{(m_left + x1) / 2:.2f}" y="{height - 12:.2f}" '
                 f'text-anchor="middle">Chronological age (years)</text>')
    parts.append(f'<text x="16" y="{(m_top + y1) / 2:.2f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(m_top + y1) / 2:.2f})">'
                 f'Predicted age (years)</text>')

    parts.append(f'<line class="identity" x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" '
                 f'x2="{sx(hi):.2f}" y2="{sy(hi):.2f}"/>')
    parts.append(f'<line class="fit" x1="{sx(lo):.2f}" '
                 f'y1="{sy(fit.intercept + fit.slope * lo):.2f}" '
                 f'x2="{sx(hi):.2f}" y2="{sy(fit.intercept + fit.slope * hi):.2f}"/>')
    for age, pred in zip(table.chronological_age, table.predicted_age):
        parts.append(f'<circle class="pt" cx="{sx(float(age)):.2f}" '
                     f'cy="{sy(float(pred)):.2f}" r="3"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
