"""Figure specification: which CSVs feed which panels, and how to draw them."""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import yaml


class SpecError(ValueError):
    pass


@dataclass
class GroupSpec:
    """One curve family: a label plus one CSV per seed."""

    label: str
    csvs: str                      # glob pattern, one match per seed
    style: str = "intervention"    # "baseline" (dashed) or "intervention" (solid)

    def paths(self, base_dir: str = ".") -> List[str]:
        pattern = self.csvs if os.path.isabs(self.csvs) else os.path.join(
            base_dir, self.csvs)
        found = sorted(glob.glob(pattern))
        if not found:
            raise SpecError(f"group {self.label!r}: no files match {pattern!r}")
        return found


@dataclass
class PanelSpec:
    column: str
    title: Optional[str] = None
    log_scale: bool = False


@dataclass
class FigureSpec:
    output: str
    panels: List[PanelSpec]
    groups: List[GroupSpec]
    layout: Optional[Tuple[int, int]] = None  # rows x cols; auto when omitted
    x_column: str = "step"
    smoothing_window: int = 5
    raw: bool = False              # skip smoothing entirely
    show_seed_curves: bool = True

    def __post_init__(self):
        if not self.panels:
            raise SpecError("figure needs at least one panel")
        if not self.groups:
            raise SpecError("figure needs at least one group")
        if self.smoothing_window < 1:
            raise SpecError("smoothing_window must be >= 1")
        if self.layout is not None:
            rows, cols = self.layout
            if rows * cols < len(self.panels):
                raise SpecError(
                    f"layout {rows}x{cols} cannot hold {len(self.panels)} panels")


def load_spec(path: str) -> FigureSpec:
    """Parse a YAML figure spec; unknown keys are rejected."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: spec must be a mapping")
    known = {"output", "panels", "groups", "layout", "x_column",
             "smoothing_window", "raw", "show_seed_curves"}
    unknown = set(doc) - known
    if unknown:
        raise SpecError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        panels = [PanelSpec(**p) if isinstance(p, dict) else PanelSpec(column=p)
                  for p in doc.get("panels", [])]
        groups = [GroupSpec(**g) for g in doc.get("groups", [])]
    except TypeError as exc:
        raise SpecError(f"{path}: {exc}") from exc
    layout = tuple(doc["layout"]) if "layout" in doc else None
    return FigureSpec(
        output=doc.get("output", "figure.png"),
        panels=panels,
        groups=groups,
        layout=layout,
        x_column=doc.get("x_column", "step"),
        smoothing_window=int(doc.get("smoothing_window", 5)),
        raw=bool(doc.get("raw", False)),
        show_seed_curves=bool(doc.get("show_seed_curves", True)),
    )
