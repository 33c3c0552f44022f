"""Figure rendering for experiment output directories (CSV + run.json).

This package consumes only the persisted external interface of the
solver suite: the CSV tables and the `run.json` manifest.  Every figure
writes a machine-readable JSON sidecar containing exactly the plotted
series, so tests and downstream consumers compare data, not pixels.
"""

__version__ = "0.1.0"

from .render import (  # noqa: F401
    FIGURE_KINDS,
    FigureSpec,
    SchemaError,
    load_run,
    render_figures,
)
