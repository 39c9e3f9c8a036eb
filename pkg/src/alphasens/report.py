"""Curve-shape diagnostics, SVG plots and the JSON / Markdown report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import jsonschema
import numpy as np

from .classic_metrics import SensitivitySummary
from .errors import EmptyInput, GridMismatch, SchemaError
from .metric_sensitivity import AlphaCurve

SCHEMA_ID = "alpha-sens/1"
DEFAULT_FLAT_TOL = 0.05
DEFAULT_IRREL_TOL = 0.01

LINEAR_LIKE = "linear-like"
IRRELEVANT = "irrelevant"
LOCALIZED = "localized-high-sensitivity"


@dataclass(frozen=True)
class CurveDiagnostics:
    variable_index: int
    flatness_ratio: float
    relevance: float
    flags: tuple
    crossing_events: tuple  # (other variable index, alpha)
    name: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "variable_index": self.variable_index,
            "name": self.name,
            "flatness_ratio": self.flatness_ratio,
            "relevance": self.relevance,
            "flags": list(self.flags),
            "crossing_events": [{"other": o, "alpha": a} for o, a in self.crossing_events],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CurveDiagnostics":
        return cls(int(doc["variable_index"]), float(doc["flatness_ratio"]), float(doc["relevance"]),
                   tuple(doc["flags"]), tuple((int(e["other"]), float(e["alpha"])) for e in doc["crossing_events"]),
                   doc.get("name"))


def _overtakes(mine: Sequence[float], other: Sequence[float], alphas: Sequence[float], tol: float) -> list:
    """Alphas where ``mine`` rises above ``other``, interpolated in log alpha."""
    events = []
    last = None  # (alpha, diff) of the latest point where mine was clearly below
    for a, u, v in zip(alphas, mine, other):
        d = u - v
        if d < -tol:
            last = (a, d)
        elif d > tol:
            if last is not None:
                a0, d0 = last
                frac = -d0 / (d - d0)
                events.append(math.exp(math.log(a0) + frac * (math.log(a) - math.log(a0))))
            last = None
    return events


def diagnose(curves: Sequence[AlphaCurve], flat_tol: float = DEFAULT_FLAT_TOL,
             irrel_tol: float = DEFAULT_IRREL_TOL) -> list:
    """Flag linear-like, irrelevant and localized-high-sensitivity variables.

    A variable is localized when it is relevant, its alpha = 1 value sits
    below the median alpha = 1 value of the relevant variables, and its curve
    overtakes some variable that started higher.
    """
    if not curves:
        raise EmptyInput("diagnose needs at least one curve")
    alphas = curves[0].alphas
    for c in curves:
        if c.alphas != alphas:
            raise GridMismatch(f"curve {c.variable_index} uses a different alpha grid")
    top = max(c.asymptote for c in curves)
    tol = 1e-12 * top
    first = [c.values[0] for c in curves]
    irrelevant = [c.asymptote <= irrel_tol * top for c in curves]
    relevant_first = [v for v, irr in zip(first, irrelevant) if not irr]
    median = float(np.median(relevant_first)) if relevant_first else 0.0

    out = []
    for idx, c in enumerate(curves):
        ratio = 1.0 if c.asymptote == 0 and c.values[0] == 0 else (
            math.inf if c.values[0] == 0 else c.asymptote / c.values[0])
        events = []
        for jdx, o in enumerate(curves):
            if jdx != idx:
                events.extend((o.variable_index, a) for a in _overtakes(c.values, o.values, alphas, tol))
        flags = []
        if ratio <= 1 + flat_tol:
            flags.append(LINEAR_LIKE)
        if irrelevant[idx]:
            flags.append(IRRELEVANT)
        else:
            started_higher = {o.variable_index for o in curves if o.values[0] > c.values[0]}
            if c.values[0] < median and any(o in started_higher for o, _ in events):
                flags.append(LOCALIZED)
        out.append(CurveDiagnostics(c.variable_index, ratio, c.asymptote / top if top > 0 else 0.0,
                                    tuple(flags), tuple(sorted(events, key=lambda e: (e[1], e[0]))), c.name))
    return out


def verdict(diag: CurveDiagnostics) -> str:
    if IRRELEVANT in diag.flags:
        return "irrelevant"
    if LOCALIZED in diag.flags:
        return "localized"
    if LINEAR_LIKE in diag.flags:
        return "linear"
    return "nonlinear"


# ---------------------------------------------------------------------------
# SVG

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _label(c, fallback_index):
    return c.name if c.name else f"X{fallback_index + 1}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _tick_text(v: float) -> str:
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, width, height):
        self.width, self.height = width, height
        self.parts = []

    def add(self, text):
        self.parts.append(text)

    def text(self, x, y, s, anchor="start", size=11, extra=""):
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}"{extra}>'
                 f"{escape(s)}</text>")

    def line(self, x1, y1, x2, y2, stroke="#000", extra=""):
        self.add(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="{stroke}"{extra}/>')

    def render(self) -> str:
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}" font-family="sans-serif">\n'
                f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#fff"/>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def render_alpha_curves(curves: Sequence[AlphaCurve], diagnostics: Optional[Sequence[CurveDiagnostics]] = None,
                        title: str = "alpha-curves") -> str:
    """One polyline per variable over log(alpha), asymptotes as detached markers."""
    if not curves:
        raise EmptyInput("nothing to plot")
    alphas = curves[0].alphas
    for c in curves:
        if c.alphas != alphas:
            raise GridMismatch(f"curve {c.variable_index} uses a different alpha grid")
    width, height = 720, 440
    left, right, top, bottom = 64, 560, 36, 384
    marker_x = right + 24
    canvas = _Canvas(width, height)
    lo, hi = math.log(alphas[0]), math.log(alphas[-1])
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    ymax = max(max(max(c.values), c.asymptote) for c in curves)
    ymax = 1.0 if ymax <= 0 else ymax * 1.05

    def px(a):
        return left + (math.log(a) - lo) / (hi - lo) * (right - left)

    def py(v):
        return bottom - v / ymax * (bottom - top)

    canvas.text(width / 2, 20, title, "middle", 14)
    canvas.line(left, bottom, right, bottom)
    canvas.line(left, top, left, bottom)
    canvas.line(right + 12, top, right + 12, bottom, "#999", ' stroke-dasharray="3,3"')
    for a in alphas:
        canvas.line(px(a), bottom, px(a), bottom + 4)
        canvas.text(px(a), bottom + 16, _tick_text(a), "middle", 9)
    canvas.text(marker_x, bottom + 16, "inf", "middle", 10)
    canvas.text((left + right) / 2, bottom + 36, "alpha (log scale)", "middle", 12)
    for t in _nice_ticks(0.0, ymax):
        canvas.line(left - 4, py(t), left, py(t))
        canvas.text(left - 6, py(t) + 3, _tick_text(t), "end", 9)
    canvas.text(16, (top + bottom) / 2, "ms^alpha", "middle", 12,
                f' transform="rotate(-90 16 {_f((top + bottom) / 2)})"')
    flags = {d.variable_index: d.flags for d in diagnostics} if diagnostics else {}
    for i, c in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(px(a))},{_f(py(v))}" for a, v in zip(c.alphas, c.values))
        canvas.add(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"'
                   f' data-variable="{escape(_label(c, i))}"/>')
        canvas.add(f'<circle cx="{_f(marker_x)}" cy="{_f(py(c.asymptote))}" r="3.5" fill="{color}"'
                   f' data-asymptote="{escape(_label(c, i))}"/>')
        ly = top + 14 * i + 4
        canvas.line(marker_x + 20, ly, marker_x + 36, ly, color, ' stroke-width="2"')
        tag = _label(c, i)
        if flags.get(c.variable_index):
            tag += " (" + ", ".join(flags[c.variable_index]) + ")"
        canvas.text(marker_x + 40, ly + 4, tag, "start", 9)
    return canvas.render()


def render_sensitivity_plots(summaries: Sequence[SensitivitySummary], title: str = "sensitivity") -> str:
    """Scatter of (mean, std) of derivatives next to a bar chart of root-mean-square."""
    if not summaries:
        raise EmptyInput("nothing to plot")
    width, height = 760, 400
    canvas = _Canvas(width, height)
    canvas.text(width / 2, 20, title, "middle", 14)
    names = [s.name if s.name else f"X{s.variable_index + 1}" for s in summaries]

    # left panel: s_avg vs s_sd
    l, r, t, b = 60, 360, 40, 340
    xs = [s.s_avg for s in summaries]
    xlo, xhi = min(0.0, min(xs)), max(0.0, max(xs))
    pad = 0.05 * (xhi - xlo) or 1.0
    xlo, xhi = xlo - pad, xhi + pad
    ymax = max(s.s_sd for s in summaries) * 1.1 or 1.0

    def sx(v):
        return l + (v - xlo) / (xhi - xlo) * (r - l)

    def sy(v):
        return b - v / ymax * (b - t)

    canvas.line(l, b, r, b)
    canvas.line(l, t, l, b)
    canvas.line(sx(0.0), t, sx(0.0), b, "#bbb", ' stroke-dasharray="3,3"')
    for tk in _nice_ticks(xlo, xhi):
        canvas.line(sx(tk), b, sx(tk), b + 4)
        canvas.text(sx(tk), b + 15, _tick_text(tk), "middle", 9)
    for tk in _nice_ticks(0.0, ymax):
        canvas.line(l - 4, sy(tk), l, sy(tk))
        canvas.text(l - 6, sy(tk) + 3, _tick_text(tk), "end", 9)
    canvas.text((l + r) / 2, b + 32, "mean sensitivity", "middle", 11)
    canvas.text(16, (t + b) / 2, "std sensitivity", "middle", 11,
                f' transform="rotate(-90 16 {_f((t + b) / 2)})"')
    for i, (s, name) in enumerate(zip(summaries, names)):
        color = PALETTE[i % len(PALETTE)]
        canvas.add(f'<circle cx="{_f(sx(s.s_avg))}" cy="{_f(sy(s.s_sd))}" r="4" fill="{color}"'
                   f' data-variable="{escape(name)}"/>')
        canvas.text(sx(s.s_avg) + 6, sy(s.s_sd) - 6, name, "start", 9)

    # right panel: s_sq bars
    l, r = 440, 740
    bmax = max(s.s_sq for s in summaries) * 1.1 or 1.0
    slot = (r - l) / len(summaries)

    def by(v):
        return b - v / bmax * (b - t)

    canvas.line(l, b, r, b)
    canvas.line(l, t, l, b)
    for tk in _nice_ticks(0.0, bmax):
        canvas.line(l - 4, by(tk), l, by(tk))
        canvas.text(l - 6, by(tk) + 3, _tick_text(tk), "end", 9)
    for i, (s, name) in enumerate(zip(summaries, names)):
        x = l + i * slot + 0.15 * slot
        canvas.add(f'<rect x="{_f(x)}" y="{_f(by(s.s_sq))}" width="{_f(0.7 * slot)}" '
                   f'height="{_f(b - by(s.s_sq))}" fill="{PALETTE[i % len(PALETTE)]}"'
                   f' data-variable="{escape(name)}"/>')
        canvas.text(x + 0.35 * slot, b + 15, name, "middle", 9)
    canvas.text((l + r) / 2, b + 32, "root mean squared sensitivity", "middle", 11)
    return canvas.render()


# ---------------------------------------------------------------------------
# JSON / Markdown report

_NUM = {"type": "number"}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "alphas", "variables"],
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "kind": {"const": "report"},
        "alphas": {"type": "array", "items": _NUM, "minItems": 1},
        "variables": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["index", "name", "curve", "diagnostics", "verdict"],
                "properties": {
                    "index": {"type": "integer", "minimum": 0},
                    "name": {"type": "string"},
                    "curve": {
                        "type": "object",
                        "required": ["values", "asymptote"],
                        "properties": {"values": {"type": "array", "items": _NUM}, "asymptote": _NUM},
                    },
                    "diagnostics": {
                        "type": "object",
                        "required": ["flatness_ratio", "relevance", "flags", "crossing_events"],
                        "properties": {
                            "flatness_ratio": _NUM,
                            "relevance": _NUM,
                            "flags": {"type": "array", "items": {"enum": [LINEAR_LIKE, IRRELEVANT, LOCALIZED]}},
                            "crossing_events": {
                                "type": "array",
                                "items": {"type": "object", "required": ["other", "alpha"],
                                          "properties": {"other": {"type": "integer"}, "alpha": _NUM}},
                            },
                        },
                    },
                    "classic": {
                        "type": "object",
                        "required": ["s_avg", "s_sd", "s_sq"],
                        "properties": {"s_avg": _NUM, "s_sd": {"type": "number", "minimum": 0},
                                       "s_sq": {"type": "number", "minimum": 0},
                                       "label": {"enum": ["linear", "nonlinear", "irrelevant", None]}},
                    },
                    "verdict": {"enum": ["linear", "nonlinear", "irrelevant", "localized"]},
                },
            },
        },
        "permutation": {
            "type": "object",
            "required": ["metric", "importance"],
            "properties": {"metric": {"type": "string"},
                           "importance": {"type": "object", "additionalProperties": _NUM},
                           "std": {"type": "object", "additionalProperties": _NUM}},
        },
        "shapley": {
            "type": "object",
            "required": ["mean_abs"],
            "properties": {"mean_abs": {"type": "object", "additionalProperties": _NUM}},
        },
    },
}


def validate_report(doc: dict):
    try:
        jsonschema.validate(doc, REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
        raise SchemaError(path, exc.message) from None


def _sentence(name, diag: CurveDiagnostics, curve: AlphaCurve, names: dict) -> str:
    v = verdict(diag)
    if v == "irrelevant":
        return (f"{name}: the alpha-curve stays near zero (ms^inf = {curve.asymptote:.4g}); "
                f"the model barely uses {name} and it is a pruning candidate.")
    if v == "linear":
        return (f"{name}: the alpha-curve is flat (ms^inf / ms^1 = {diag.flatness_ratio:.3g}), "
                f"so the model depends on {name} almost linearly.")
    if v == "localized":
        over = sorted({names.get(o, str(o)) for o, _ in diag.crossing_events})
        at = min(a for _, a in diag.crossing_events)
        return (f"{name}: low sensitivity at small alpha (ms^1 = {curve.values[0]:.4g}) but the curve "
                f"overtakes {', '.join(over)} from alpha ~ {at:.3g} and reaches ms^inf = {curve.asymptote:.4g}; "
                f"a small input region has outsized influence.")
    return (f"{name}: the alpha-curve grows with alpha (ms^inf / ms^1 = {diag.flatness_ratio:.3g}), "
            f"pointing to a nonlinear effect or interactions.")


def emit_report(curves: Sequence[AlphaCurve], diagnostics: Sequence[CurveDiagnostics],
                summaries: Optional[Sequence[SensitivitySummary]] = None, permutation=None,
                shapley: Optional[dict] = None) -> tuple:
    """Build the JSON document and Markdown text; returns ``(doc, markdown)``.

    ``permutation`` is a PermutationResult; ``shapley`` maps feature names to
    mean absolute Shapley values. Missing optional sections are omitted.
    """
    if not curves:
        raise EmptyInput("report needs at least one curve")
    by_index = {d.variable_index: d for d in diagnostics}
    classic = {s.variable_index: s for s in summaries} if summaries else {}
    names = {c.variable_index: _label(c, c.variable_index) for c in curves}
    variables = []
    for c in curves:
        d = by_index[c.variable_index]
        entry = {
            "index": c.variable_index,
            "name": names[c.variable_index],
            "curve": {"values": list(c.values), "asymptote": c.asymptote},
            "diagnostics": {k: v for k, v in d.to_dict().items() if k not in ("variable_index", "name")},
            "verdict": verdict(d),
        }
        if c.variable_index in classic:
            s = classic[c.variable_index]
            entry["classic"] = {"s_avg": s.s_avg, "s_sd": s.s_sd, "s_sq": s.s_sq, "label": s.label}
        variables.append(entry)
    doc = {"schema": SCHEMA_ID, "kind": "report", "alphas": list(curves[0].alphas), "variables": variables}
    if permutation is not None:
        doc["permutation"] = {
            "metric": permutation.metric,
            "importance": {n: float(v) for n, v in zip(permutation.feature_names, permutation.importances)},
            "std": {n: float(v) for n, v in zip(permutation.feature_names, permutation.std)},
        }
    if shapley is not None:
        doc["shapley"] = {"mean_abs": {str(k): float(v) for k, v in shapley.items()}}
    validate_report(doc)
    return doc, _markdown(doc, curves, diagnostics, names)


def _markdown(doc, curves, diagnostics, names) -> str:
    alphas = doc["alphas"]
    has_two = 2.0 in alphas
    lines = ["# Sensitivity report", "",
             f"alpha grid: {', '.join(f'{a:g}' for a in alphas)}, plus inf", "",
             "## Verdicts", ""]
    header = ["variable", "ms^1", "ms^2" if has_two else None, "ms^inf", "S^avg", "S^sd", "S^sq",
              "classic label", "curve flags", "verdict"]
    header = [h for h in header if h is not None]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for v, c in zip(doc["variables"], curves):
        cl = v.get("classic")
        row = [v["name"], f"{c.values[0]:.4g}"]
        if has_two:
            row.append(f"{c.values[alphas.index(2.0)]:.4g}")
        row.append(f"{c.asymptote:.4g}")
        row += [f"{cl['s_avg']:.4g}", f"{cl['s_sd']:.4g}", f"{cl['s_sq']:.4g}", cl["label"] or "-"] if cl else ["-"] * 4
        row += [", ".join(v["diagnostics"]["flags"]) or "-", v["verdict"]]
        lines.append("| " + " | ".join(row) + " |")
    lines += ["", "## Interpretation", ""]
    by_index = {d.variable_index: d for d in diagnostics}
    for c in curves:
        lines.append("- " + _sentence(names[c.variable_index], by_index[c.variable_index], c, names))
    if "permutation" in doc:
        perm = doc["permutation"]
        lines += ["", f"## Permutation importance ({perm['metric']})", "", "| variable | importance | std |",
                  "|---|---|---|"]
        for n, imp in perm["importance"].items():
            lines.append(f"| {n} | {imp:.4g} | {perm['std'][n]:.4g} |")
    if "shapley" in doc:
        lines += ["", "## Shapley importance (mean |phi|)", "", "| variable | mean abs |", "|---|---|"]
        for n, val in doc["shapley"]["mean_abs"].items():
            lines.append(f"| {n} | {val:.4g} |")
    return "\n".join(lines) + "\n"


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"
