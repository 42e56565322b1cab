"""Read metric CSVs and draw per-seed curves with mean lines and std bands."""

from __future__ import annotations

import math
import os
from typing import Dict, List

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .figspec import FigureSpec, GroupSpec, SpecError  # noqa: E402


class ColumnError(KeyError):
    pass


def load_csv(path: str) -> Dict[str, np.ndarray]:
    """Parse one metrics CSV into column arrays; empty fields become NaN."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not header or header == [""]:
        raise SpecError(f"{path}: empty or headerless CSV")
    return {name: np.array([float(r[j]) if r[j] != "" else np.nan for r in rows])
            for j, name in enumerate(header)}


def _column(table: Dict[str, np.ndarray], name: str, path: str) -> np.ndarray:
    if name not in table:
        raise ColumnError(f"column {name!r} missing from {path}")
    return table[name]


def smooth(y: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; NaNs are ignored inside each window."""
    if window <= 1:
        return y
    half = window // 2
    out = np.empty_like(y, dtype=np.float64)
    for i in range(len(y)):
        seg = y[max(0, i - half):i + half + 1]
        valid = seg[~np.isnan(seg)]
        out[i] = valid.mean() if len(valid) else np.nan
    return out


def group_stats(paths: List[str], column: str, x_column: str = "step",
                window: int = 1):
    """Load one group's seed CSVs; returns (x, per-seed matrix, mean, std).

    Seeds are truncated to the shortest run so columns stay aligned; the mean
    curve is the plain column-wise average over seeds.
    """
    tables = [load_csv(p) for p in paths]
    ys = [smooth(_column(t, column, p), window) for t, p in zip(tables, paths)]
    xs = [_column(t, x_column, p) for t, p in zip(tables, paths)]
    n = min(len(y) for y in ys)
    y_mat = np.vstack([y[:n] for y in ys])
    x = xs[0][:n]
    return x, y_mat, y_mat.mean(axis=0), y_mat.std(axis=0)


_STYLES = {
    "baseline": {"linestyle": "--", "color": "tab:blue"},
    "intervention": {"linestyle": "-", "color": "tab:green"},
}
_EXTRA_COLORS = ["tab:orange", "tab:red", "tab:purple", "tab:brown"]


def _style_for(group: GroupSpec, index: int) -> dict:
    if group.style in _STYLES:
        style = dict(_STYLES[group.style])
        if index >= 2:  # later groups of the same style get distinct colors
            style["color"] = _EXTRA_COLORS[(index - 2) % len(_EXTRA_COLORS)]
        return style
    return {"linestyle": "-",
            "color": _EXTRA_COLORS[index % len(_EXTRA_COLORS)]}


def render(spec: FigureSpec, base_dir: str = ".") -> str:
    """Draw the figure described by ``spec``; returns the output image path."""
    n = len(spec.panels)
    if spec.layout is not None:
        rows, cols = spec.layout
    else:
        cols = min(n, 2)
        rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(5.2 * cols, 3.6 * rows),
                             squeeze=False)
    window = 1 if spec.raw else spec.smoothing_window

    for k, panel in enumerate(spec.panels):
        ax = axes[k // cols][k % cols]
        for gi, group in enumerate(spec.groups):
            paths = group.paths(base_dir)
            x, y_mat, mean, std = group_stats(paths, panel.column,
                                              spec.x_column, window)
            style = _style_for(group, gi)
            if spec.show_seed_curves:
                for y in y_mat:
                    ax.plot(x, y, alpha=0.25, linewidth=0.8, **style)
            ax.plot(x, mean, label=group.label, linewidth=1.8, **style)
            ax.fill_between(x, mean - std, mean + std, alpha=0.15,
                            color=style["color"])
        ax.set_xlabel(spec.x_column)
        ax.set_ylabel(panel.column)
        ax.set_title(panel.title or panel.column)
        if panel.log_scale:
            ax.set_yscale("log")
        if k == 0:
            ax.legend(fontsize=8)
    for k in range(n, rows * cols):
        axes[k // cols][k % cols].axis("off")

    fig.tight_layout()
    out = spec.output if os.path.isabs(spec.output) else os.path.join(
        base_dir, spec.output)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
