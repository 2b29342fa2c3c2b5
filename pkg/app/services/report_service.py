import json
import os
from collections import OrderedDict
from typing import Dict, List

import pandas as pd
from pydantic import ValidationError

from app.core.exceptions import InvalidArgumentError, ReportIOError
from app.schemas.report import MethodResult, RunReport
from app.services.metrics_service import accuracy, confusion_from_pairs, mcc
from app.utils.logger import LOGGER

REPORT_TXT = "report.txt"
REPORT_JSON = "report.json"
TIMINGS_JSON = "timings.json"
LOSS_CSV = "smc_loss_trace_{name}.csv"
# * recounted metrics must agree with the stored ones to this tolerance
RECOUNT_TOL = 1e-12


def format_table(methods: List[MethodResult]) -> str:
    """
    * aligned Method | ACC | MCC table
    """
    rows = [("Method", "ACC", "MCC")] + [(m.method, f"{m.acc:.4f}", f"{m.mcc:.4f}") for m in methods]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = []
    for k, (name, acc, corr) in enumerate(rows):
        lines.append(f"{name.ljust(widths[0])} | {acc.rjust(widths[1])} | {corr.rjust(widths[2])}")
        if k == 0:
            lines.append(f"{'-' * widths[0]}-+-{'-' * widths[1]}-+-{'-' * widths[2]}")
    return "\n".join(lines)


def format_report(report: RunReport) -> str:
    balance = report.class_balance
    counts = ", ".join(f"{k}={v}" for k, v in report.sample_counts.items())
    return "\n".join(
        [
            format_table(report.methods),
            "",
            f"class balance: Up={balance.up} Down={balance.down} Still={balance.still}",
            f"samples: {counts}",
            f"W density: {report.w_density:.6f}",
            f"Z density: {report.z_density:.6f}",
            "",
        ]
    )


def recount_methods(report: RunReport) -> List[MethodResult]:
    """
    * rebuild every method row from the persisted prediction list
    """
    grouped: Dict[str, list] = OrderedDict()
    for p in report.predictions:
        grouped.setdefault(p.method, []).append((p.truth, p.predicted))

    stored = {m.method: m for m in report.methods}
    rows = []
    for method, pairs in grouped.items():
        counts = confusion_from_pairs(pairs)
        n_train = stored[method].n_train if method in stored else 0
        rows.append(
            MethodResult(
                method=method,
                acc=accuracy(counts),
                mcc=mcc(counts),
                n_train=n_train,
                n_test=counts.total,
                tp=counts.tp,
                tn=counts.tn,
                fp=counts.fp,
                fn=counts.fn,
            )
        )
    return rows


def verify_report(report: RunReport) -> List[MethodResult]:
    recounted = {m.method: m for m in recount_methods(report)}
    if set(recounted) != {m.method for m in report.methods}:
        raise InvalidArgumentError("report methods do not match the methods in its prediction list")
    for m in report.methods:
        fresh = recounted[m.method]
        if abs(fresh.acc - m.acc) > RECOUNT_TOL or abs(fresh.mcc - m.mcc) > RECOUNT_TOL:
            raise InvalidArgumentError(
                f"{m.method}: stored ACC/MCC {m.acc:.6f}/{m.mcc:.6f} != recount {fresh.acc:.6f}/{fresh.mcc:.6f}"
            )
    return [recounted[m.method] for m in report.methods]


def _write(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise ReportIOError(f"cannot write {path}: {e}") from e


def ensure_output_dir(out_dir: str) -> str:
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ReportIOError(f"cannot create output directory {out_dir}: {e}") from e
    return out_dir


def report_emit(report: RunReport, out_dir: str) -> List[str]:
    """
    Write the human table, the machine document, timings and loss traces.

    report.json carries no wall-clock values and is byte-stable for a
    fixed run; timings go to timings.json.
    """
    if not report.predictions:
        raise InvalidArgumentError("report has no predictions to emit")
    ensure_output_dir(out_dir)

    paths = []
    txt = os.path.join(out_dir, REPORT_TXT)
    _write(txt, format_report(report))
    paths.append(txt)

    doc = os.path.join(out_dir, REPORT_JSON)
    _write(doc, report.model_dump_json(indent=2) + "\n")
    paths.append(doc)

    timings = os.path.join(out_dir, TIMINGS_JSON)
    _write(timings, json.dumps(report.stage_seconds, indent=2) + "\n")
    paths.append(timings)

    for name, trace in report.smc_loss_traces.items():
        path = os.path.join(out_dir, LOSS_CSV.format(name=name))
        frame = pd.DataFrame({"iteration": range(len(trace)), "loss": trace})
        _write(path, frame.to_csv(index=False, lineterminator="\n", float_format="%.17g"))
        paths.append(path)

    LOGGER.info(f"[Report] wrote {len(paths)} files to {out_dir}")
    return paths


def load_report(out_dir: str) -> RunReport:
    path = os.path.join(out_dir, REPORT_JSON)
    if not os.path.isfile(path):
        raise InvalidArgumentError(f"no report found at {path}")
    try:
        with open(path, encoding="utf-8") as f:
            return RunReport.model_validate(json.load(f))
    except (json.JSONDecodeError, ValidationError) as e:
        raise InvalidArgumentError(f"{path} is not a valid run report: {e}") from e


def rerender_report(out_dir: str) -> str:
    """
    * recount metrics of a finished run and rewrite report.txt
    """
    report = load_report(out_dir)
    verify_report(report)
    text = format_report(report)
    _write(os.path.join(out_dir, REPORT_TXT), text)
    LOGGER.info(f"[Report] re-rendered {out_dir}, metrics match the prediction list")
    return text
