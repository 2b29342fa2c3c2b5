import argparse
import json
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.core.config import load_run_config, settings
from app.core.exceptions import (
    InvalidArgumentError,
    NumericFailureError,
    ReportIOError,
    StageError,
)
from app.schemas.synth import SynthSpec
from app.services.ingest_service import ingest_panel, panel_summary
from app.services.market_service import class_balance
from app.services.pipeline_service import run_pipeline
from app.services.report_service import format_report, rerender_report
from app.services.synth_service import synth_panel
from app.utils.logger import LOGGER, configure_logging

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERIC = 2


def _run_overrides(args: argparse.Namespace) -> dict:
    """
    * explicit flags only, unset flags stay None so the config file wins
    """
    return {
        "quant_csv": args.quant_csv,
        "events_csv": args.events_csv,
        "sentiment_csv": args.sentiment_csv,
        "allow_missing": args.allow_missing,
        "threshold": args.threshold,
        "eps1": getattr(args, "eps1", None),
        "eps2": getattr(args, "eps2", None),
        "corr_window": getattr(args, "corr_window", None),
        "z_source": getattr(args, "z_source", None),
        "train_months": getattr(args, "train_months", None),
        "test_months": getattr(args, "test_months", None),
        "ablate_cross_stock": getattr(args, "ablate_cross_stock", None),
        "output_dir": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
    }


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        stocks=args.stocks,
        days=args.days,
        noise=args.noise,
        seed=args.seed,
        signal_strength=args.signal_strength,
        n_clusters=args.clusters,
    )
    panel = synth_panel(spec, args.out)
    summary = {"out": args.out, "stocks": panel.shape[0], "days": panel.shape[1]}
    summary["class_balance"] = class_balance(panel, args.threshold)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_ingest_check(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, _run_overrides(args))
    panel = ingest_panel(cfg.quant_csv, cfg.events_csv, cfg.sentiment_csv, cfg.mode_dims, cfg.allow_missing)
    print(json.dumps(panel_summary(panel, cfg.threshold), indent=2))
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, _run_overrides(args))
    report = run_pipeline(cfg)
    print(format_report(report))
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    print(rerender_report(args.out))
    return EXIT_OK


def _add_input_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=str, default=None, help="JSON run config, explicit flags override it")
    p.add_argument("--quant-csv", dest="quant_csv", type=str, default=None)
    p.add_argument("--events-csv", dest="events_csv", type=str, default=None)
    p.add_argument("--sentiment-csv", dest="sentiment_csv", type=str, default=None)
    p.add_argument(
        "--allow-missing", dest="allow_missing", action="store_true", default=None, help="keep gaps, skip bad rows"
    )
    p.add_argument("--threshold", type=float, default=None, help="movement scope threshold (default 0.02)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smc-stock",
        description="Tensor-fused stock movement prediction with sub-mode coordinate alignment",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  smc-stock synth --stocks 8 --days 250 --noise 0.1 --seed 7 --out data
  smc-stock ingest-check --config run.json
  smc-stock run --config run.json --seed 7 --out runs/demo
  smc-stock report --out runs/demo
        """,
    )
    parser.add_argument("--log-level", dest="log_level", type=str, default=settings.log_level)
    parser.add_argument("--log-dir", dest="log_dir", type=str, default=settings.log_dir)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write a planted-signal panel as the three mode csvs")
    p_synth.add_argument("--stocks", type=int, default=8)
    p_synth.add_argument("--days", type=int, default=250)
    p_synth.add_argument("--noise", type=float, default=0.1)
    p_synth.add_argument("--seed", type=int, default=settings.seed)
    p_synth.add_argument("--signal-strength", dest="signal_strength", type=float, default=1.0)
    p_synth.add_argument("--clusters", type=int, default=2)
    p_synth.add_argument("--threshold", type=float, default=0.02, help="threshold for the printed class balance")
    p_synth.add_argument("--out", type=str, default="data")
    p_synth.set_defaults(func=_cmd_synth)

    p_check = sub.add_parser("ingest-check", help="validate the input csvs and print the panel summary")
    _add_input_flags(p_check)
    p_check.set_defaults(func=_cmd_ingest_check)

    p_run = sub.add_parser("run", help="run the full pipeline and write the report")
    _add_input_flags(p_run)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", type=str, default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=None, help="threads for tucker decomposition")
    p_run.add_argument("--eps1", type=float, default=None)
    p_run.add_argument("--eps2", type=float, default=None)
    p_run.add_argument("--corr-window", dest="corr_window", type=int, default=None)
    p_run.add_argument("--z-source", dest="z_source", choices=["p_change", "industry_index"], default=None)
    p_run.add_argument("--train-months", dest="train_months", type=int, default=None)
    p_run.add_argument("--test-months", dest="test_months", type=int, default=None)
    p_run.add_argument(
        "--ablate-cross-stock", dest="ablate_cross_stock", action="store_true", default=None,
        help="also report a temporal-only SMC+LSTM row",
    )
    p_run.set_defaults(func=_cmd_run)

    p_report = sub.add_parser("report", help="recount metrics of a finished run and re-render report.txt")
    p_report.add_argument("--out", type=str, required=True, help="run output directory")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    * exit 0 on success, 1 on invalid input or io failure, 2 on numeric failure
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_dir)

    try:
        return int(args.func(args))
    except StageError as e:
        LOGGER.error(f"[Abort] {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC if e.is_numeric else EXIT_INVALID
    except NumericFailureError as e:
        LOGGER.error(f"[Abort] numeric failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidArgumentError, ValidationError, ReportIOError) as e:
        LOGGER.error(f"[Abort] {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


def cli():
    raise SystemExit(main())


if __name__ == "__main__":
    cli()
