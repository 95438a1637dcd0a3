"""Figure rendering for the coexistence simulator's metric tables."""

from .render import FigureSpec, render, FIGURE_KINDS
from .schema import SchemaError, read_table

__version__ = "0.1.0"
__all__ = ["FigureSpec", "render", "FIGURE_KINDS", "SchemaError",
           "read_table"]
