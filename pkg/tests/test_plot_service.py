"""
Tests for PlotService.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import xml.etree.ElementTree as ET

import pytest

from shiftgauge.constants import PlotKind
from shiftgauge.exceptions import InvalidInputError, MetricError
from shiftgauge.services import PlotService, least_squares

SVG_NS = "{http://www.w3.org/2000/svg}"


def on_segment(p, x1, y1, x2, y2, tol=0.05):
    """Whether pixel point p lies on the line through (x1, y1) and (x2, y2)."""
    cross = (p[0] - x1) * (y2 - y1) - (p[1] - y1) * (x2 - x1)
    return abs(cross) / max(abs(x2 - x1), abs(y2 - y1)) <= tol


class TestLeastSquares:
    def test_exact_line(self):
        assert least_squares([0.1, 0.2, 0.4], [0.2, 0.3, 0.5]) == (1.0, 0.1)

    def test_needs_two_points(self):
        with pytest.raises(MetricError):
            least_squares([0.1], [0.2])

    def test_constant_x(self):
        with pytest.raises(MetricError, match="equal"):
            least_squares([0.3, 0.3], [0.1, 0.2])


class TestGeometry:
    """Tests for the pixel geometry behind each plot kind."""

    def test_perfect_predictions_on_diagonal(self):
        """Test pred == true points fall on the dashed y = x line."""
        geometry = PlotService().geometry({"ideal": [(0.1, 0.1), (0.25, 0.25), (0.4, 0.4)]}, PlotKind.SCATTER)
        d = geometry["diagonal"]
        for point in geometry["series"][0]["points"]:
            assert on_segment((point["px"], point["py"]), d["x1"], d["y1"], d["x2"], d["y2"])

    def test_offset_predictions_fit(self):
        """Test pred = true + 0.1 gives slope 1 and intercept 0.1."""
        series = {"shifted": [(t + 0.1, t) for t in (0.0, 0.1, 0.2, 0.3)]}
        fit = PlotService().geometry(series, "scatter_pred_vs_true")["series"][0]["fit"]
        assert fit["slope"] == pytest.approx(1.0)
        assert fit["intercept"] == pytest.approx(0.1)

    def test_single_truth_value_has_no_fit(self):
        fit = PlotService().geometry({"s": [(0.1, 0.2), (0.3, 0.2)]}, PlotKind.SCATTER)["series"][0]["fit"]
        assert fit is None

    def test_risk_curve_sorted_by_epoch(self):
        geometry = PlotService().geometry({"val": [(3, 0.1), (1, 0.3), (2, 0.2)]}, PlotKind.RISK_CURVE)
        xs = [p["px"] for p in geometry["series"][0]["points"]]
        assert xs == sorted(xs)

    def test_ucurve_mean_and_std(self):
        """Test repeated divisions are summarised as mean +/- std."""
        geometry = PlotService().geometry(
            {"wic": [(1, 0.2), (1, 0.4), (2, 0.1), (2, 0.1)]}, PlotKind.DIVISION_UCURVE
        )
        points = geometry["series"][0]["points"]
        assert [round(p["mean"], 12) for p in points] == [0.3, 0.1]
        assert points[0]["std"] == pytest.approx(0.1)
        assert points[1]["std"] == 0.0

    @pytest.mark.parametrize("series", [{}, {"empty": []}, {"bad": [(0.1, float("nan"))]}, {"flat": [1, 2]}])
    def test_invalid_series(self, series):
        with pytest.raises(InvalidInputError):
            PlotService().geometry(series, PlotKind.RISK_CURVE)


class TestEmitPlot:
    """Tests for SVG rendering."""

    @pytest.mark.parametrize("kind", list(PlotKind))
    def test_svg_parses(self, tmp_path, kind):
        series = {"a": [(1, 0.1), (2, 0.3), (3, 0.2)], "b & c": [(1, 0.2), (2, 0.25), (3, 0.15)]}
        path = PlotService().emit_plot(series, kind, tmp_path / "plots" / f"{kind.value}.svg", title="t < 1")
        root = ET.parse(path).getroot()
        assert root.tag == f"{SVG_NS}svg"
        assert root.find(f"{SVG_NS}title").text == "t < 1"
        assert len(root.findall(f".//{SVG_NS}circle")) >= 6

    def test_deterministic(self, tmp_path):
        series = {"a": [(0.1, 0.12), (0.2, 0.18)]}
        first = PlotService().emit_plot(series, PlotKind.SCATTER, tmp_path / "a.svg").read_bytes()
        second = PlotService().emit_plot(series, PlotKind.SCATTER, tmp_path / "b.svg").read_bytes()
        assert first == second

    def test_empty_series_rejected(self, tmp_path):
        with pytest.raises(InvalidInputError):
            PlotService().emit_plot({}, PlotKind.SCATTER, tmp_path / "x.svg")
        assert not (tmp_path / "x.svg").exists()
