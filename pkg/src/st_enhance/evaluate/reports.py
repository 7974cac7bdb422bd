"""
Report files.

MetricReport JSON is the pydantic dump (aggregates included). The CSV form
has one row per gene with the columns in REPORT_COLUMNS; run-level values
repeat on every row. All floats carry 6 significant digits.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..core.errors import FormatError, StorageIOError
from ..core.models import AblationSummary, LossReport, MetricReport, ReportFormat

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

REPORT_COLUMNS = [
    "label",
    "fingerprint",
    "sample_count",
    "no_lr_st",
    "gene_id",
    "rmse",
    "pcc",
    "mean_rmse",
    "mean_pcc",
    "gec_distance",
]

SUMMARY_COLUMNS = ["label", "mean_rmse", "mean_pcc", "gec_distance", "fingerprint"]


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6g}"


def _opt_float(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def _write_text(path: PathLike, text: str) -> None:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    except OSError as e:
        raise StorageIOError(f"Failed to write {target}: {e}") from e


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StorageIOError(f"Failed to read {path}: {e}") from e


def report_to_csv(report: MetricReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for gene, r, p in zip(report.gene_ids, report.rmse, report.pcc):
        writer.writerow(
            [
                report.label,
                report.fingerprint,
                report.sample_count,
                "true" if report.no_lr_st else "false",
                gene,
                _fmt(r),
                _fmt(p),
                _fmt(report.mean_rmse),
                _fmt(report.mean_pcc),
                _fmt(report.gec_distance),
            ]
        )
    return buffer.getvalue()


def report_from_csv(text: str) -> MetricReport:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise FormatError("report CSV has no data rows")
    if list(rows[0].keys()) != REPORT_COLUMNS:
        raise FormatError(f"unexpected report CSV columns: {list(rows[0].keys())}")
    first = rows[0]
    return MetricReport(
        label=first["label"],
        fingerprint=first["fingerprint"],
        sample_count=int(first["sample_count"]),
        no_lr_st=first["no_lr_st"] == "true",
        gene_ids=[int(r["gene_id"]) for r in rows],
        rmse=[float(r["rmse"]) for r in rows],
        pcc=[_opt_float(r["pcc"]) for r in rows],
        gec_distance=_opt_float(first["gec_distance"]),
    )


def emit_report(report: MetricReport, path: PathLike, fmt: ReportFormat = ReportFormat.JSON) -> None:
    """Write a MetricReport as JSON or CSV with a fixed field order."""
    if fmt == ReportFormat.CSV:
        text = report_to_csv(report)
    else:
        text = json.dumps(report.model_dump(mode="json"), indent=2) + "\n"
    _write_text(path, text)
    logger.info(f"Report '{report.label}' written to {path}")


def load_report(path: PathLike, fmt: Optional[ReportFormat] = None) -> MetricReport:
    """Parse a report written by emit_report; the format defaults to the file suffix."""
    fmt = fmt or (ReportFormat.CSV if str(path).endswith(".csv") else ReportFormat.JSON)
    text = _read_text(path)
    if fmt == ReportFormat.CSV:
        return report_from_csv(text)
    try:
        return MetricReport.model_validate(json.loads(text))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid report JSON: {e}") from e


def emit_summary(summary: AblationSummary, directory: PathLike) -> List[Path]:
    """Write ablation_summary.json and ablation_summary.csv into directory."""
    base = Path(directory)
    json_path = base / "ablation_summary.json"
    csv_path = base / "ablation_summary.csv"
    _write_text(json_path, json.dumps(summary.model_dump(mode="json"), indent=2) + "\n")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in summary.rows:
        writer.writerow(
            [row.label, _fmt(row.mean_rmse), _fmt(row.mean_pcc), _fmt(row.gec_distance), row.fingerprint]
        )
    _write_text(csv_path, buffer.getvalue())
    logger.info(f"Ablation summary with {len(summary.rows)} rows written to {base}")
    return [json_path, csv_path]


class LossLog:
    """Appends LossReports to a JSON-lines file, one object per line."""

    def __init__(self, path: PathLike, fingerprint: str):
        self.path = Path(path)
        self.fingerprint = fingerprint

    def reset(self) -> None:
        _write_text(self.path, "")

    def append(self, report: LossReport) -> None:
        record: Dict[str, Any] = {"fingerprint": self.fingerprint, **report.to_record()}
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        except OSError as e:
            raise StorageIOError(f"Failed to append to {self.path}: {e}") from e

    def read(self) -> List[LossReport]:
        if not self.path.exists():
            return []
        reports = []
        for line in _read_text(self.path).splitlines():
            if line.strip():
                data = json.loads(line)
                data.pop("fingerprint", None)
                reports.append(LossReport.model_validate(data))
        return reports
