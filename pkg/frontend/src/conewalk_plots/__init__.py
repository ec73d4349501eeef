"""Figure rendering for conewalk CSV outputs.

This package consumes the runner's CSV files and config echoes only; it
never computes statistics.  Every number drawn is either present in a CSV
or is an analytic reference curve parameterized by the config echo.
"""

__version__ = "0.1.0"

from .render import FigureSpec, PlotError, render  # noqa: F401
