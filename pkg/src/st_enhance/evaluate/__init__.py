from .heatmaps import colorize, render_ppm, write_heatmaps
from .metrics import gec_distance, gene_correlation, pcc, pearson, rmse
from .reports import LossLog, emit_report, emit_summary, load_report

__all__ = [
    "LossLog",
    "colorize",
    "emit_report",
    "emit_summary",
    "gec_distance",
    "gene_correlation",
    "load_report",
    "pcc",
    "pearson",
    "render_ppm",
    "rmse",
    "write_heatmaps",
]
