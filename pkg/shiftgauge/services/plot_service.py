"""
SVG plot generation service.

Turns numeric series into pixel geometry and renders it through the
Jinja2 plot templates. Three kinds are supported:

- risk_curve: epoch vs. risks, one polyline per series
- scatter_pred_vs_true: true risk (x) vs. predicted risk (y), with the
  dashed y = x reference and a least-squares line per series
- division_ucurve: division index vs. risk, mean +/- std over seeds

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from shiftgauge.constants import PLOT_COLORS, PLOT_HEIGHT, PLOT_MARGIN, PLOT_WIDTH, PlotKind
from shiftgauge.exceptions import InvalidInputError, MetricError
from shiftgauge.template_utils import render_plot_template

logger = logging.getLogger("shiftgauge")

Series = Mapping[str, Sequence[Tuple[float, float]]]

_AXIS_LABELS = {
    PlotKind.RISK_CURVE: ("epoch", "risk"),
    PlotKind.SCATTER: ("true target risk", "predicted target risk"),
    PlotKind.DIVISION_UCURVE: ("division index", "target risk"),
}
_TICKS = 5


def least_squares(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    """
    Slope and intercept of the ordinary least-squares line y = a x + b.

    Raises:
        MetricError: with fewer than 2 points or when all x are equal

    Examples:
        >>> least_squares([0.1, 0.2, 0.4], [0.2, 0.3, 0.5])
        (1.0, 0.1)
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 2 or x.size != y.size:
        raise MetricError(f"least squares needs >= 2 paired points, got {x.size} x and {y.size} y")
    xc = x - x.mean()
    denom = float((xc * xc).sum())
    if denom == 0.0:
        raise MetricError("least squares undefined: all x values are equal")
    slope = float((xc * (y - y.mean())).sum() / denom)
    intercept = float(y.mean() - slope * x.mean())
    return round(slope, 12), round(intercept, 12)


@dataclass
class _Scale:
    lo: float
    hi: float
    px_lo: float
    px_hi: float

    def __call__(self, v: float) -> float:
        return round(self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo), 2)

    def ticks(self) -> List[Dict[str, Any]]:
        return [
            {"px": self(v), "label": f"{v:.3g}"}
            for v in np.linspace(self.lo, self.hi, _TICKS)
        ]


def _padded(lo: float, hi: float) -> Tuple[float, float]:
    if hi - lo < 1e-12:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class PlotService:
    """
    Service for SVG plot emission.

    Attributes:
        width / height: Canvas size in pixels
        margin: Space reserved for axes labels
    """

    def __init__(self, width: int = PLOT_WIDTH, height: int = PLOT_HEIGHT, margin: int = PLOT_MARGIN):
        self.width = width
        self.height = height
        self.margin = margin

    @property
    def _frame(self) -> Dict[str, float]:
        return {
            "left": self.margin,
            "right": self.width - self.margin // 2,
            "top": self.margin // 2 + 10,
            "bottom": self.height - self.margin,
        }

    def _validate(self, series: Series) -> Dict[str, np.ndarray]:
        if not series:
            raise InvalidInputError("cannot plot an empty series collection")
        arrays = {}
        for name, points in series.items():
            arr = np.asarray(points, dtype=np.float64)
            if arr.size == 0:
                raise InvalidInputError(f"series '{name}' is empty")
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise InvalidInputError(f"series '{name}' must hold (x, y) pairs, got shape {list(arr.shape)}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"series '{name}' contains non-finite values")
            arrays[name] = arr
        return arrays

    def _axes(self, x: _Scale, y: _Scale, kind: PlotKind) -> Dict[str, Any]:
        frame = self._frame
        x_label, y_label = _AXIS_LABELS[kind]
        return {**frame, "x_ticks": x.ticks(), "y_ticks": y.ticks(), "x_label": x_label, "y_label": y_label}

    def _risk_curve(self, arrays: Dict[str, np.ndarray]) -> Dict[str, Any]:
        pooled = np.concatenate(list(arrays.values()))
        frame = self._frame
        x = _Scale(*_padded(pooled[:, 0].min(), pooled[:, 0].max()), frame["left"], frame["right"])
        y = _Scale(*_padded(pooled[:, 1].min(), pooled[:, 1].max()), frame["bottom"], frame["top"])
        series = [
            {
                "name": name,
                "color": PLOT_COLORS[k % len(PLOT_COLORS)],
                "points": [{"px": x(px), "py": y(py)} for px, py in arr[np.argsort(arr[:, 0], kind="stable")]],
            }
            for k, (name, arr) in enumerate(arrays.items())
        ]
        return {"axes": self._axes(x, y, PlotKind.RISK_CURVE), "series": series}

    def _scatter(self, arrays: Dict[str, np.ndarray]) -> Dict[str, Any]:
        # Points are (predicted, true); both axes share one range so y = x is the diagonal
        pooled = np.concatenate(list(arrays.values()))
        lo, hi = _padded(pooled.min(), pooled.max())
        frame = self._frame
        x = _Scale(lo, hi, frame["left"], frame["right"])
        y = _Scale(lo, hi, frame["bottom"], frame["top"])
        series = []
        for k, (name, arr) in enumerate(arrays.items()):
            predicted, true = arr[:, 0], arr[:, 1]
            fit = None
            if np.unique(true).size >= 2:
                slope, intercept = least_squares(true, predicted)
                fit = {
                    "slope": slope,
                    "intercept": intercept,
                    "x1": x(lo),
                    "y1": y(slope * lo + intercept),
                    "x2": x(hi),
                    "y2": y(slope * hi + intercept),
                }
            series.append(
                {
                    "name": name,
                    "color": PLOT_COLORS[k % len(PLOT_COLORS)],
                    "points": [{"px": x(t), "py": y(p)} for p, t in zip(predicted, true)],
                    "fit": fit,
                }
            )
        diagonal = {"x1": x(lo), "y1": y(lo), "x2": x(hi), "y2": y(hi)}
        return {"axes": self._axes(x, y, PlotKind.SCATTER), "series": series, "diagonal": diagonal}

    def _division_ucurve(self, arrays: Dict[str, np.ndarray]) -> Dict[str, Any]:
        # Repeated x values are per-seed results of one division
        summaries = {}
        for name, arr in arrays.items():
            divisions = np.unique(arr[:, 0])
            summaries[name] = [
                (d, float(arr[arr[:, 0] == d, 1].mean()), float(arr[arr[:, 0] == d, 1].std()))
                for d in divisions
            ]
        lows = [m - s for rows in summaries.values() for _, m, s in rows]
        highs = [m + s for rows in summaries.values() for _, m, s in rows]
        xs = [d for rows in summaries.values() for d, _, _ in rows]
        frame = self._frame
        x = _Scale(*_padded(min(xs), max(xs)), frame["left"], frame["right"])
        y = _Scale(*_padded(min(lows), max(highs)), frame["bottom"], frame["top"])
        series = [
            {
                "name": name,
                "color": PLOT_COLORS[k % len(PLOT_COLORS)],
                "points": [
                    {"px": x(d), "py": y(m), "py_low": y(m - s), "py_high": y(m + s), "mean": m, "std": s}
                    for d, m, s in rows
                ],
            }
            for k, (name, rows) in enumerate(summaries.items())
        ]
        return {"axes": self._axes(x, y, PlotKind.DIVISION_UCURVE), "series": series}

    def geometry(self, series: Series, kind: Union[PlotKind, str]) -> Dict[str, Any]:
        """Pixel geometry of a plot, as passed to its template."""
        kind = PlotKind(kind)
        arrays = self._validate(series)
        builders = {
            PlotKind.RISK_CURVE: self._risk_curve,
            PlotKind.SCATTER: self._scatter,
            PlotKind.DIVISION_UCURVE: self._division_ucurve,
        }
        return {"width": self.width, "height": self.height, **builders[kind](arrays)}

    def emit_plot(
        self,
        series: Series,
        kind: Union[PlotKind, str],
        path: Union[str, Path],
        title: str = "",
    ) -> Path:
        """
        Render ``series`` as a self-contained SVG file.

        Args:
            series: Series name -> (x, y) points. For the scatter kind each
                point is (predicted, true); for the U-curve, repeated x
                values are per-seed results of one division
            kind: risk_curve, scatter_pred_vs_true or division_ucurve
            path: Output file; parent directories are created

        Returns:
            Path of the written SVG

        Raises:
            InvalidInputError: on an empty or malformed series
        """
        kind = PlotKind(kind)
        context = self.geometry(series, kind)
        svg = render_plot_template(kind, title=title or kind.value, **context)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(svg, encoding="utf-8")
        logger.info(f"Plot written: {path}")
        return path
