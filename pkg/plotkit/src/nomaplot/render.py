"""Aggregate simulator CSVs and render mean/error-bar sweep figures.

Rows are grouped by an optional facet column (one output image per facet
value), series columns (one line each), and the x column; each group is
reduced to the mean of the y column with a standard-error bar. Aggregation
happens here, from raw rows, so the error bars reflect the actual trial
scatter rather than anything precomputed upstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


@dataclass(frozen=True)
class FigureSpec:
    inputs: tuple[str, ...]
    x: str
    series: tuple[str, ...] = ("method",)
    facet: str | None = None
    out: str = "figure.png"
    y: str = "sum_rate"
    x_label: str | None = None
    y_label: str | None = None


@dataclass(frozen=True)
class SeriesLine:
    label: str
    x: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray


@dataclass(frozen=True)
class RenderedFigure:
    path: str
    facet_value: object
    lines: tuple[SeriesLine, ...]


def _resolve(frame: pd.DataFrame, name: str) -> str:
    """Match a requested field against the header, ignoring underscores."""
    if name in frame.columns:
        return name
    wanted = name.replace("_", "").lower()
    for col in frame.columns:
        if col.replace("_", "").lower() == wanted:
            return col
    raise ValueError(f"field {name!r} not in CSV header {list(frame.columns)}")


def load_results(paths) -> pd.DataFrame:
    frames = []
    for path in paths:
        frame = pd.read_csv(path, comment="#")
        if frame.empty:
            raise ValueError(f"{path} holds no data rows")
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def aggregate(frame: pd.DataFrame, x: str, series: tuple[str, ...],
              y: str) -> list[SeriesLine]:
    lines = []
    for key, group in frame.groupby(list(series), sort=True):
        label = ",".join(str(v) for v in (key if isinstance(key, tuple) else (key,)))
        stats = group.groupby(x, sort=True)[y].agg(["mean", "sem", "count"])
        if stats["count"].min() < 1:
            raise ValueError(f"empty group for series {label}")
        lines.append(SeriesLine(label=label,
                                x=stats.index.to_numpy(dtype=float),
                                mean=stats["mean"].to_numpy(),
                                stderr=np.nan_to_num(stats["sem"].to_numpy())))
    if not lines:
        raise ValueError("no rows matched the grouping fields")
    return lines


def _facet_path(out: str, value) -> str:
    if "." in out.rsplit("/", 1)[-1]:
        stem, ext = out.rsplit(".", 1)
        return f"{stem}_{value}.{ext}"
    return f"{out}_{value}"


def plot_sweep(spec: FigureSpec) -> list[RenderedFigure]:
    """Render one errorbar figure per facet value; returns what was drawn."""
    frame = load_results(spec.inputs)
    x = _resolve(frame, spec.x)
    y = _resolve(frame, spec.y)
    series = tuple(_resolve(frame, s) for s in spec.series)
    facet = _resolve(frame, spec.facet) if spec.facet else None

    if facet is not None:
        groups = [(value, sub) for value, sub in frame.groupby(facet, sort=True)]
    else:
        groups = [(None, frame)]

    rendered = []
    for value, sub in groups:
        lines = aggregate(sub, x, series, y)
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        for line in lines:
            ax.errorbar(line.x, line.mean, yerr=line.stderr, marker="o",
                        capsize=3, label=line.label)
        ax.set_xlabel(spec.x_label or x)
        ax.set_ylabel(spec.y_label or y)
        if value is not None:
            ax.set_title(f"{facet} = {value}")
        ax.grid(True, alpha=0.3)
        ax.legend(title=",".join(series))
        path = spec.out if value is None else _facet_path(spec.out, value)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        rendered.append(RenderedFigure(path=path, facet_value=value,
                                       lines=tuple(lines)))
    return rendered
