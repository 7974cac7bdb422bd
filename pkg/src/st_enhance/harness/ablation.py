import logging
import re
from pathlib import Path
from typing import Iterable, List, Optional, Union

from ..core.errors import EmptySplitError, UnknownAblationError
from ..core.models import AblationRow, AblationSummary, ImputationMode, MetricReport, RunConfig
from ..evaluate import emit_report, emit_summary, load_report
from .runner import RunData, evaluate, resolve_data, train

logger = logging.getLogger(__name__)

ABLATION_DIR = "ablation"


def slug(row: AblationRow) -> str:
    return re.sub(r"[^a-z0-9]+", "-", row.value.lower()).strip("-")


def parse_row(name: Union[str, AblationRow]) -> AblationRow:
    """Accept a row value ("w/o L_modal"), enum name (NO_MODAL) or slug (w-o-l-modal)."""
    if isinstance(name, AblationRow):
        return name
    for row in AblationRow:
        if name in (row.value, row.name, row.name.lower(), slug(row)):
            return row
    raise UnknownAblationError(
        f"Unknown ablation row '{name}'. Known rows: {', '.join(r.value for r in AblationRow)}"
    )


def ablation_config(config: RunConfig, row: Union[str, AblationRow]) -> RunConfig:
    """The baseline config with exactly one component switched off or replaced."""
    row = parse_row(row)
    ablation = config.ablation.model_copy()
    contrastive = config.contrastive.model_copy()
    if row == AblationRow.NO_AUGMENTATION:
        ablation.augmentation = False
    elif row == AblationRow.NO_MODAL:
        ablation.modal = False
        contrastive.lambda_modal = 0.0
    elif row == AblationRow.NO_CONTENT:
        ablation.content = False
        contrastive.lambda_content = 0.0
    elif row == AblationRow.NO_INTER_SPHERE:
        ablation.inter_sphere = False
        contrastive.lambda_inter = 0.0
    elif row == AblationRow.DROPOUT:
        ablation.imputation_mode = ImputationMode.DROPOUT
    elif row == AblationRow.ZERO_PADDING:
        ablation.imputation_mode = ImputationMode.ZERO_PADDING
    elif row == AblationRow.ARITHMETIC_AVERAGE:
        ablation.imputation_mode = ImputationMode.ARITHMETIC_AVERAGE
    output_dir = str(Path(config.output_dir) / ABLATION_DIR / slug(row))
    return config.model_copy(
        update={"ablation": ablation, "contrastive": contrastive, "output_dir": output_dir}
    )


def _report_path(config: RunConfig) -> Path:
    return Path(config.output_dir) / "report.json"


def run_row(config: RunConfig, row: AblationRow, data: RunData) -> MetricReport:
    """Train and evaluate one row, reusing an existing report with the same fingerprint."""
    if not data.val:
        raise EmptySplitError(
            "Ablation rows are scored on the validation split, which is empty; raise val_fraction."
        )
    variant = ablation_config(config, row)
    path = _report_path(variant)
    if path.exists():
        cached = load_report(path)
        if cached.fingerprint == variant.fingerprint():
            logger.info(f"Reusing report for '{row.value}' from {path}")
            return cached
    result = train(variant, data)
    report = evaluate(result.state.model, variant, data.context, data.val, label=row.value)
    emit_report(report, path)
    return report


def ablate(config: RunConfig, row: Union[str, AblationRow], data: Optional[RunData] = None) -> MetricReport:
    """
    Train the ablated variant with the baseline's seed and budget, evaluate it
    on the validation split and write a side-by-side summary with the baseline.
    """
    row = parse_row(row)
    data = data or resolve_data(config)
    baseline = run_row(config, AblationRow.BASELINE, data)
    report = baseline if row == AblationRow.BASELINE else run_row(config, row, data)
    rows = [baseline] if row == AblationRow.BASELINE else [baseline, report]
    emit_summary(AblationSummary.from_reports(rows), Path(config.output_dir) / ABLATION_DIR / slug(row))
    return report


def sweep(
    config: RunConfig, rows: Optional[Iterable[Union[str, AblationRow]]] = None, data: Optional[RunData] = None
) -> List[MetricReport]:
    """Run every requested row (all eight by default) and write one combined summary."""
    selected = [parse_row(r) for r in rows] if rows is not None else list(AblationRow)
    if AblationRow.BASELINE in selected:
        selected.remove(AblationRow.BASELINE)
    data = data or resolve_data(config)
    reports = [run_row(config, AblationRow.BASELINE, data)]
    reports.extend(run_row(config, row, data) for row in selected)
    emit_summary(AblationSummary.from_reports(reports), Path(config.output_dir) / ABLATION_DIR)
    return reports
