"""Rendering of training-run metric CSVs into multi-panel comparison figures."""

__version__ = "0.1.0"

from .figspec import FigureSpec, GroupSpec, PanelSpec, load_spec  # noqa: F401
from .render import group_stats, load_csv, render, smooth  # noqa: F401
