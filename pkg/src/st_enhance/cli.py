"""
Command line entry point: ``st-enhance gen-data | train | sample | eval | ablate``.

Exit codes: 0 success, 1 runtime failure, 2 unknown flag / subcommand or a
missing argument, 3 invalid value.
"""

import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Any, Callable, Dict, NoReturn, Optional, Sequence

from pydantic import ValidationError

from .core.config import settings
from .core.errors import (
    ConfigError,
    EmptySplitError,
    ManifestError,
    StEnhanceError,
    UnknownAblationError,
)
from .core.models import AblationRow, AblationSummary, ReportFormat, RunConfig
from .data import generate, parse_manifest, save_dataset
from .evaluate import emit_report
from .harness import (
    ablate,
    evaluate,
    inference_inputs,
    load_run_config,
    predict_samples,
    sweep,
    train,
    with_predicted_maps,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_INVALID_VALUE = 3

# argparse reports bad values as "invalid <type> value" or "invalid choice"
_INVALID_VALUE = re.compile(r"invalid [\w ]+ value|invalid choice")


class CliUsageError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems with distinct exit codes."""

    def error(self, message: str) -> NoReturn:
        code = EXIT_USAGE
        if _INVALID_VALUE.search(message):
            # an invalid subcommand name is an unknown subcommand, not a bad value
            code = EXIT_USAGE if message.startswith("argument command:") else EXIT_INVALID_VALUE
        self.print_usage(sys.stderr)
        raise CliUsageError(f"{self.prog}: error: {message}", code)


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"invalid positive int value: '{text}'")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"invalid float value: '{text}' (expected 0 <= value <= 1)")
    return value


def _non_negative_float(text: str) -> float:
    value = float(text)
    if value < 0.0:
        raise argparse.ArgumentTypeError(f"invalid float value: '{text}' (expected >= 0)")
    return value


def build_parser() -> _Parser:
    parser = _Parser(
        prog="st-enhance",
        description="Spatial transcriptomics super-resolution on synthetic paired histology/ST data",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level")
    commands = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    commands.required = True

    gen = commands.add_parser(
        "gen-data", help="Generate a synthetic paired dataset",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    gen.add_argument("--n", type=_positive_int, default=256, help="Number of samples")
    gen.add_argument("--height", type=_positive_int, default=40, help="HR map height")
    gen.add_argument("--width", type=_positive_int, default=40, help="HR map width")
    gen.add_argument("--genes", type=_positive_int, default=4, help="Genes per sample")
    gen.add_argument("--scale", type=_positive_int, default=5, help="Enlargement factor (HR/LR)")
    gen.add_argument("--missing", type=_fraction, default=0.25, help="Fraction of samples without LR ST")
    gen.add_argument("--regions", type=_positive_int, default=3, help="Latent tissue regions")
    gen.add_argument("--panel", type=_positive_int, default=200, help="Gene panel size")
    gen.add_argument("--seed", type=int, default=0, help="Generator seed")
    gen.add_argument("--workers", type=_positive_int, default=settings.data_workers, help="Render threads")
    gen.add_argument("--out", required=True, help="Output .c3df file")

    tr = commands.add_parser(
        "train", help="Train (or resume) a run from a config file",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    tr.add_argument("--config", required=True, help="Run config (TOML)")
    tr.add_argument("--seed", type=int, default=None, help="Override [run] seed")
    tr.add_argument("--out", default=None, help="Override [run] output_dir")
    tr.add_argument("--dataset", default=None, help="Override [run] dataset_path")
    tr.add_argument("--steps", type=int, default=None, help="Override [optimizer] steps")
    tr.add_argument("--resume", default=None, help="Checkpoint to resume from")

    sm = commands.add_parser(
        "sample", help="Sample HR maps for every record of a dataset",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_inference_flags(sm)
    sm.add_argument("--out", required=True, help="Output .c3df file holding the predicted maps")

    ev = commands.add_parser(
        "eval", help="Score sampled maps against the HR ground truth",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_inference_flags(ev)
    ev.add_argument("--out", required=True, help="Report path (.json or .csv)")
    ev.add_argument(
        "--format", choices=[f.value for f in ReportFormat], default=None,
        help="Report format (default: from the file suffix)",
    )
    ev.add_argument("--heatmaps", default=None, help="Directory for PPM heatmaps")
    ev.add_argument("--shuffle-histology", action="store_true", help="Pair every sample with another's histology")
    ev.add_argument("--label", default="baseline", help="Report label")

    ab = commands.add_parser(
        "ablate", help="Train and evaluate ablation rows against the baseline",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    ab.add_argument("--config", required=True, help="Baseline run config (TOML)")
    ab.add_argument("--seed", type=int, default=None, help="Override [run] seed")
    ab.add_argument("--out", default=None, help="Override [run] output_dir")
    ab.add_argument("--dataset", default=None, help="Override [run] dataset_path")
    ab.add_argument("--steps", type=int, default=None, help="Override [optimizer] steps")
    rows = ab.add_mutually_exclusive_group(required=True)
    rows.add_argument(
        "--row", action="append", default=None,
        help="Ablation row (repeatable): " + ", ".join(f"'{r.value}'" for r in AblationRow),
    )
    rows.add_argument("--all", action="store_true", help="Run the full sweep")
    return parser


def _add_inference_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--checkpoint", required=True, help="Trained checkpoint (.c3ck)")
    sub.add_argument("--dataset", default=None, help="Dataset file (default: the run's validation split)")
    sub.add_argument("--omega", type=_non_negative_float, default=None, help="Guidance weight")
    sub.add_argument("--steps", type=_positive_int, default=None, help="Sampler steps")
    sub.add_argument("--seed", type=int, default=None, help="Sampler seed (default: the run seed)")
    sub.add_argument("--no-lr-st", action="store_true", help="Zero the LR ST input at test time")


def _overridden(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    update: Dict[str, Any] = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.out is not None:
        update["output_dir"] = args.out
    if args.dataset is not None:
        update["dataset_path"] = args.dataset
    if args.steps is not None:
        if args.steps < 0:
            raise ConfigError(f"--steps must be >= 0, got {args.steps}")
        update["optimizer"] = config.optimizer.model_copy(update={"steps": args.steps})
    if not update:
        return config
    try:
        return RunConfig.model_validate({**config.model_dump(), **update})
    except ValidationError as e:
        raise ConfigError(f"Invalid override: {e}") from e


def cmd_gen_data(args: argparse.Namespace) -> int:
    manifest = parse_manifest(
        n_samples=args.n,
        height=args.height,
        width=args.width,
        genes=args.genes,
        scale=args.scale,
        missing_fraction=args.missing,
        regions=args.regions,
        gene_panel_size=args.panel,
        seed=args.seed,
    )
    samples = generate(manifest, workers=args.workers)
    save_dataset(samples, args.out, manifest)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _overridden(load_run_config(args.config), args)
    result = train(config, resume_from=args.resume)
    last = result.losses[-1] if result.losses else None
    summary = f"step {result.state.step}" + (f", total loss {last.total:.6f}" if last else "")
    print(f"checkpoint {result.checkpoint_path} ({summary})")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    config, context, model, samples = inference_inputs(args.checkpoint, args.dataset, args.seed)
    result = predict_samples(model, config, context, samples, args.omega, args.steps, args.no_lr_st)
    predicted = with_predicted_maps(samples, result)
    save_dataset(predicted, args.out)
    print(f"wrote {len(predicted)} predicted samples to {args.out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config, context, model, samples = inference_inputs(args.checkpoint, args.dataset, args.seed)
    report = evaluate(
        model,
        config,
        context,
        samples,
        label=args.label,
        omega=args.omega,
        steps=args.steps,
        no_lr_st=args.no_lr_st,
        shuffle_histology=args.shuffle_histology,
        heatmaps_dir=args.heatmaps,
    )
    fmt = ReportFormat(args.format) if args.format else _format_for(Path(args.out))
    emit_report(report, args.out, fmt)
    print(f"mean RMSE {report.mean_rmse}, mean PCC {report.mean_pcc}, report {args.out}")
    return EXIT_OK


def _format_for(path: Path) -> ReportFormat:
    return ReportFormat.CSV if path.suffix.lower() == ".csv" else ReportFormat.JSON


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _overridden(load_run_config(args.config), args)
    if args.all:
        reports = sweep(config)
    elif len(args.row) == 1:
        reports = [ablate(config, args.row[0])]
    else:
        reports = sweep(config, args.row)
    for line in AblationSummary.from_reports(reports).rows:
        print(f"{line.label}: RMSE {line.mean_rmse} PCC {line.mean_pcc} GEC {line.gec_distance}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUsageError as e:
        print(e, file=sys.stderr)
        return e.code
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        filename=settings.log_file if settings.log_file else None,
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, EmptySplitError, ManifestError, UnknownAblationError) as e:
        logger.error(f"Invalid value: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID_VALUE
    except (StEnhanceError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
