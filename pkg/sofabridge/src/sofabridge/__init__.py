"""SOFA-to-bundle converter and report plotting."""

from .convert import (
    ConversionError,
    ConversionSpec,
    convert,
    magnitudes_from_hrirs,
    read_sofa,
)
from .plots import ReportFormatError, build_figure, plot_report, read_report

__all__ = [
    "ConversionError",
    "ConversionSpec",
    "ReportFormatError",
    "build_figure",
    "convert",
    "magnitudes_from_hrirs",
    "plot_report",
    "read_report",
    "read_sofa",
]

__version__ = "0.1.0"
