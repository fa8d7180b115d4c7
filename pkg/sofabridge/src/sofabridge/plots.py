"""Scatter figures from report CSVs.

The CSV schema is the one the experiment pipeline exports: one row per
evaluated direction with its LSD, ILD error, and threshold flag.  The
figure colors directions by threshold exceedance and does no computation
beyond (optional) re-thresholding on the lsd_db column.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # batch tool, never a display

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["ReportFormatError", "build_figure", "plot_report", "read_report"]

REQUIRED_COLUMNS = ("subject", "azimuth_deg", "elevation_deg", "lsd_db",
                    "ild_err_db", "exceeds_zeta")

COLOR_WITHIN = "tab:blue"
COLOR_EXCEEDS = "tab:red"


class ReportFormatError(ValueError):
    """A CSV that does not follow the report schema."""


def read_report(path) -> dict:
    """Columns of a report CSV as arrays, schema checked strictly."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REQUIRED_COLUMNS:
            raise ReportFormatError(
                f"{path.name}: columns {reader.fieldnames}, "
                f"expected {list(REQUIRED_COLUMNS)}"
            )
        rows = list(reader)
    if not rows:
        raise ReportFormatError(f"{path.name}: no data rows")
    try:
        return {
            "azimuth_deg": np.array([float(r["azimuth_deg"]) for r in rows]),
            "elevation_deg": np.array([float(r["elevation_deg"])
                                       for r in rows]),
            "lsd_db": np.array([float(r["lsd_db"]) for r in rows]),
            "exceeds_zeta": np.array([bool(int(r["exceeds_zeta"]))
                                      for r in rows]),
        }
    except ValueError as err:
        raise ReportFormatError(f"{path.name}: unparsable cell ({err})") from None


def build_figure(report: dict, zeta: float | None = None):
    """(figure, axes) scatter of the report's directions.

    With ``zeta`` the rows are re-thresholded on lsd_db; otherwise the
    stored exceeds_zeta flags pick the colors.  Every row contributes
    exactly one point.
    """
    exceeds = (report["lsd_db"] > zeta if zeta is not None
               else report["exceeds_zeta"])
    az, el = report["azimuth_deg"], report["elevation_deg"]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.scatter(az[~exceeds], el[~exceeds], s=14, c=COLOR_WITHIN,
               label="within threshold")
    ax.scatter(az[exceeds], el[exceeds], s=14, c=COLOR_EXCEEDS,
               label="exceeds threshold")
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("elevation (deg)")
    ax.set_xlim(-5.0, 365.0)
    ax.set_ylim(-95.0, 95.0)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return fig, ax


def plot_report(csv_path, out_path, zeta: float | None = None) -> None:
    """Write the scatter figure for one report CSV."""
    report = read_report(csv_path)
    fig, _ = build_figure(report, zeta)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
