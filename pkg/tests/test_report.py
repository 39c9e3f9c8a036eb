import json
import math
import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphasens import report
from alphasens.baselines import PermutationResult
from alphasens.classic_metrics import SensitivitySummary, classic_summaries
from alphasens.core import JacobianTensor
from alphasens.errors import EmptyInput, GridMismatch, SchemaError
from alphasens.metric_sensitivity import AlphaCurve, AlphaGrid, all_alpha_curves

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def cubic_curves(cubic_jac):
    return all_alpha_curves(cubic_jac)


def curve(values, asymptote, j=0, alphas=(1.0, 2.0, 4.0, 8.0), name=None):
    return AlphaCurve(j, tuple(alphas), tuple(values), asymptote, name=name)


def polyline_points(svg, name):
    root = ET.fromstring(svg)
    for el in root.iter("{http://www.w3.org/2000/svg}polyline"):
        if el.get("data-variable") == name:
            return [tuple(map(float, p.split(","))) for p in el.get("points").split()]
    raise AssertionError(f"no polyline for {name}")


def segments_intersections(a, b):
    """Number of crossings between two polylines sharing x coordinates."""
    diffs = [ya - yb for (_, ya), (_, yb) in zip(a, b)]
    return sum(1 for d0, d1 in zip(diffs, diffs[1:]) if d0 * d1 < 0)


def test_cubic_root_diagnostics(cubic_curves):
    diags = report.diagnose(cubic_curves)
    verdicts = [report.verdict(d) for d in diags]
    assert verdicts == ["nonlinear", "linear", "localized"] + ["irrelevant"] * 5
    assert diags[1].flatness_ratio == 1.0
    x3 = diags[2]
    over_x2 = [a for o, a in x3.crossing_events if o == 1]
    assert len(over_x2) == 1 and 2 < over_x2[0] < 16
    assert x3.relevance == 1.0


def test_diagnose_flags():
    curves = [curve([2, 2, 2, 2], 2, 0), curve([0, 0, 0, 0], 0, 1), curve([0.1, 0.5, 3, 6], 9, 2),
              curve([1.5, 1.8, 2.2, 2.6], 3, 3)]
    diags = report.diagnose(curves)
    assert diags[0].flags == (report.LINEAR_LIKE,)
    assert report.IRRELEVANT in diags[1].flags
    assert report.LOCALIZED in diags[2].flags
    assert diags[3].flags == ()
    # crossing of curve 2 over the flat curve 0 lies between alpha 2 and 4, interpolated in log alpha
    (alpha,) = [a for o, a in diags[2].crossing_events if o == 0]
    # differences -1.5 at alpha 2 and +1 at alpha 4
    assert alpha == pytest.approx(2 ** (1 + 1.5 / 2.5), rel=1e-12)


def test_zero_curves():
    diags = report.diagnose([curve([0] * 4, 0, 0), curve([0] * 4, 0, 1)])
    assert all(report.IRRELEVANT in d.flags and d.flatness_ratio == 1.0 for d in diags)


def test_diagnose_errors():
    with pytest.raises(EmptyInput):
        report.diagnose([])
    with pytest.raises(GridMismatch):
        report.diagnose([curve([1] * 4, 1, 0), curve([1] * 3, 1, 1, alphas=(1.0, 2.0, 3.0))])


positive = st.floats(1e-3, 1e3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(positive, min_size=5, max_size=5), min_size=2, max_size=6), st.floats(1e-3, 1e3))
def test_diagnose_scale_invariant_and_consistent(raw, c):
    curves = []
    for j, vals in enumerate(raw):
        vals = sorted(vals)
        curves.append(curve(vals[:4], vals[4], j))
    base = report.diagnose(curves)
    scaled = report.diagnose([curve([c * v for v in k.values], c * k.asymptote, k.variable_index) for k in curves])
    for a, b in zip(base, scaled):
        assert a.flags == b.flags
        assert a.flatness_ratio >= 1.0
        assert not (report.IRRELEVANT in a.flags and report.LOCALIZED in a.flags)
        for _, alpha in a.crossing_events:
            assert 1.0 <= alpha <= 8.0


def test_alpha_svg_is_valid_and_matches_golden(cubic_curves):
    svg = report.render_alpha_curves(cubic_curves, report.diagnose(cubic_curves))
    ET.fromstring(svg)
    assert svg == report.render_alpha_curves(cubic_curves, report.diagnose(cubic_curves))
    assert svg == (GOLDEN / "cubic_root_curves.svg").read_text()


def test_classic_svg_matches_golden(cubic_jac):
    svg = report.render_sensitivity_plots(classic_summaries(cubic_jac))
    ET.fromstring(svg)
    assert svg == (GOLDEN / "cubic_root_classic.svg").read_text()


def test_flat_curve_marker_at_same_height():
    svg = report.render_alpha_curves([curve([2, 2, 2, 2], 2, name="A")])
    pts = polyline_points(svg, "A")
    assert len({y for _, y in pts}) == 1
    marker = re.search(r'<circle cx="[^"]+" cy="([^"]+)"[^>]*data-asymptote="A"', svg)
    assert float(marker.group(1)) == pts[0][1]


def test_crossing_curves_intersect_once():
    curves = [curve([2, 2, 2, 2], 2, 0, name="flat"), curve([0.5, 1, 3, 5], 6, 1, name="rise")]
    svg = report.render_alpha_curves(curves)
    assert segments_intersections(polyline_points(svg, "flat"), polyline_points(svg, "rise")) == 1


def test_sensitivity_plot_geometry():
    summaries = [SensitivitySummary(0, 2, 0, 2, name="lin"), SensitivitySummary(1, 0, 0, 0, name="off"),
                 SensitivitySummary(2, 0, 1, 1, name="nl")]
    svg = report.render_sensitivity_plots(summaries)
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    circles = {c.get("data-variable"): (float(c.get("cx")), float(c.get("cy"))) for c in root.iter(ns + "circle")}
    bars = {r.get("data-variable"): float(r.get("height")) for r in root.iter(ns + "rect") if r.get("data-variable")}
    assert circles["lin"][1] == circles["off"][1]  # both on the s_sd = 0 axis
    assert circles["off"][0] == circles["nl"][0]  # both at s_avg = 0
    assert bars["off"] == 0 and bars["lin"] > bars["nl"] > 0


def test_render_errors():
    with pytest.raises(EmptyInput):
        report.render_alpha_curves([])
    with pytest.raises(EmptyInput):
        report.render_sensitivity_plots([])


def test_emit_report_minimal_and_full(cubic_curves, cubic_jac):
    diags = report.diagnose(cubic_curves)
    doc, md = report.emit_report(cubic_curves, diags)
    assert "permutation" not in doc and "shapley" not in doc and "classic" not in doc["variables"][0]
    report.validate_report(json.loads(report.dumps(doc)))

    names = tuple(f"X{j}" for j in range(1, 9))
    perm = PermutationResult(names, np.arange(8.0), np.ones((8, 2)), 0.0, 0, "mse")
    doc, md = report.emit_report(cubic_curves, diags, classic_summaries(cubic_jac), perm,
                                 {n: 0.5 for n in names})
    report.validate_report(json.loads(report.dumps(doc)))
    rows = {line.split("|")[1].strip(): line.split("|")[-2].strip() for line in md.splitlines()
            if line.startswith("| X") and line.count("|") == 11}
    assert rows["X1"] == "nonlinear" and rows["X2"] == "linear" and rows["X3"] == "localized"
    assert all(rows[f"X{j}"] == "irrelevant" for j in range(4, 9))
    assert "## Permutation importance" in md and "## Shapley importance" in md
    assert report.emit_report(cubic_curves, diags)[1] == report.emit_report(cubic_curves, diags)[1]


def test_validate_report_rejects_bad_documents(cubic_curves):
    doc, _ = report.emit_report(cubic_curves, report.diagnose(cubic_curves))
    doc["variables"][0]["verdict"] = "maybe"
    with pytest.raises(SchemaError, match=r"\$\.variables\[0\]\.verdict"):
        report.validate_report(doc)
    with pytest.raises(SchemaError):
        report.validate_report({"schema": "other"})


def test_diagnostics_roundtrip(cubic_curves):
    for d in report.diagnose(cubic_curves):
        assert report.CurveDiagnostics.from_dict(d.to_dict()) == d


def test_custom_grid_report():
    jac = JacobianTensor.from_matrix(np.random.default_rng(0).standard_normal((50, 3)))
    curves = all_alpha_curves(jac, grid=AlphaGrid.parse("1,3,9"))
    doc, md = report.emit_report(curves, report.diagnose(curves))
    assert doc["alphas"] == [1.0, 3.0, 9.0] and "ms^2" not in md
