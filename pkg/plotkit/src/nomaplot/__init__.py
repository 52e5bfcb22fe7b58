"""Figure rendering for nfnoma result CSVs."""

from .render import FigureSpec, RenderedFigure, SeriesLine, aggregate, load_results, plot_sweep

__version__ = "0.1.0"

__all__ = ["FigureSpec", "RenderedFigure", "SeriesLine", "aggregate",
           "load_results", "plot_sweep"]
