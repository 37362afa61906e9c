"""
Terminal output helpers for run_experiment.py.

Results (tables) go to stdout, progress and diagnostics to stderr. Styling
is dropped when NO_COLOR is set, when stdout is not a terminal, or after
``disable_color()`` (the ``--no-color`` flag).

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import os
import sys
from typing import Any, Dict, List, Sequence, TextIO

_STYLES: Dict[str, str] = {
    "bold": "\033[1m",
    "dim": "\033[2m",
    "green": "\033[32m",
    "yellow": "\033[33m",
    "cyan": "\033[36m",
    "bright_green": "\033[92m",
    "bright_red": "\033[91m",
}
_RESET = "\033[0m"


def _color_enabled(stream: TextIO = sys.stdout) -> bool:
    """Whether ANSI styling should be emitted (https://no-color.org/)."""
    if os.environ.get("NO_COLOR"):
        return False
    isatty = getattr(stream, "isatty", None)
    return bool(isatty and isatty())


_USE_COLOR: bool = _color_enabled()


def disable_color() -> None:
    """Turn styling off for the rest of the process."""
    global _USE_COLOR
    _USE_COLOR = False


def paint(style: str, text: str) -> str:
    """Wrap ``text`` in the named style; plain text when styling is off."""
    if not _USE_COLOR:
        return text
    return f"{_STYLES[style]}{text}{_RESET}"


def green(text: str) -> str:
    """Finished runs and feasible values."""
    return paint("bright_green", text)


def red(text: str) -> str:
    """Error diagnostics."""
    return paint("bright_red", text)


def yellow(text: str) -> str:
    return paint("yellow", text)


def cyan(text: str) -> str:
    return paint("cyan", text)


def bold(text: str) -> str:
    return paint("bold", text)


def dim(text: str) -> str:
    """Paths and other secondary details."""
    return paint("dim", text)


# ---------------------------------------------------------------------------
# Progress and layout
# ---------------------------------------------------------------------------

_FULL, _EMPTY = "█", "░"
_BAR_WIDTH = 20
_RULE_WIDTH = 56


def progress_bar(current: int, total: int, width: int = _BAR_WIDTH) -> str:
    """
    Progress of a per-seed or per-cell fan-out.

    Example:
        >>> disable_color()
        >>> progress_bar(4, 10, width=10)
        '[████░░░░░░]  4/10'
    """
    fraction = min(current / total, 1.0) if total > 0 else 0.0
    n_full = round(fraction * width)
    full, empty = _FULL * n_full, _EMPTY * (width - n_full)
    if _USE_COLOR:
        bar = paint("cyan", "[") + paint("green", full) + paint("dim", empty) + paint("cyan", "]")
    else:
        bar = f"[{full}{empty}]"
    return bar + bold(f"  {current}/{total}")


def divider(width: int = _RULE_WIDTH, char: str = "-") -> str:
    return dim(char * width)


def section(title: str, width: int = _RULE_WIDTH) -> str:
    """Subcommand heading centred in a rule, e.g. ``------  eval  ------``."""
    return cyan(f"{'  ' + title + '  ':-^{width}}")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    return f"{value:.4f}" if isinstance(value, float) else str(value)


def format_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """
    Render rows as a left-aligned fixed-width table (floats to 4 places).

    Example:
        >>> print(format_table(["method", "err"], [["proxy_risk", 0.05]]))
        method      err
        proxy_risk  0.0500
    """
    cells: List[List[str]] = [list(header)] + [[_cell(v) for v in row] for row in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells)
