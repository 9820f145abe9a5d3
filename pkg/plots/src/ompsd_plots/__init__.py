"""Batch figure rendering for the ompsd toolkit's CSV outputs.

Consumes only the documented file formats (matrix CSV and PSD-field CSV);
the simulation package is never imported.
"""

__version__ = "0.1.0"

from .io import PlotsError, read_matrix_csv, read_psd_csv
from .render import PlotJob, normalize_columns, render

__all__ = ["PlotsError", "PlotJob", "normalize_columns", "read_matrix_csv",
           "read_psd_csv", "render", "__version__"]
