"""
Template rendering utilities for SVG plots.

The plot service computes pixel geometry; the Jinja2 templates under
shiftgauge/templates/plots/ only lay it out, so every plot kind shares
axes, legend and styling.
"""

from functools import lru_cache
from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader, StrictUndefined, select_autoescape

from shiftgauge.constants import PlotKind

TEMPLATE_DIR = Path(__file__).parent / "templates"


@lru_cache(maxsize=1)
def _environment() -> Environment:
    template_dir = TEMPLATE_DIR.resolve()
    if not template_dir.exists():
        raise FileNotFoundError(
            f"Templates directory not found: {template_dir}. "
            f"Expected structure: shiftgauge/templates/plots/"
        )
    return Environment(
        loader=FileSystemLoader(str(template_dir)),
        autoescape=select_autoescape(["html", "xml", "svg"]),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )


def render_plot_template(kind: PlotKind, **context: Any) -> str:
    """
    Render the SVG template of a plot kind.

    Args:
        kind: Which plot to render (selects plots/<kind>.svg)
        **context: Geometry prepared by the plot service (width, height,
            axes, series, title)

    Returns:
        SVG document text

    Examples:
        >>> svg = render_plot_template(PlotKind.RISK_CURVE, **geometry)  # doctest: +SKIP
        >>> svg.startswith("<?xml")  # doctest: +SKIP
        True
    """
    template = _environment().get_template(f"plots/{PlotKind(kind).value}.svg")
    return template.render(**context)
