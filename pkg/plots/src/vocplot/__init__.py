from .aggregate import (
    CurvePoint,
    PlotSpec,
    SchemaError,
    aggregate,
    emit_plot_data,
    plot_metric_curves,
    read_rows,
    write_tidy,
)

__all__ = [
    "CurvePoint",
    "PlotSpec",
    "SchemaError",
    "aggregate",
    "emit_plot_data",
    "plot_metric_curves",
    "read_rows",
    "write_tidy",
]
