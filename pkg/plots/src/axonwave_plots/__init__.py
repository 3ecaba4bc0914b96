"""Renderers for axonwave run directories.

This package never imports the simulation code: it reads the published
on-disk formats (snapshot binary, CSV series, run manifest) and writes
image files. See formats.py for the format definitions it relies on.
"""

from . import cli
from .formats import PlotInputError, read_manifest, read_series_csv, read_snapshot
from .render import (
    profile_curve_labels,
    profile_curves,
    render_cylinder_heatmap,
    render_distance_series,
    render_profile_panel,
    render_spectrum_scatter,
)

__version__ = "0.1.0"

__all__ = [
    "PlotInputError",
    "cli",
    "profile_curve_labels",
    "profile_curves",
    "read_manifest",
    "read_series_csv",
    "read_snapshot",
    "render_cylinder_heatmap",
    "render_distance_series",
    "render_profile_panel",
    "render_spectrum_scatter",
]
