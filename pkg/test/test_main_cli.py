import json
import os
from unittest.mock import patch

import pytest

from app.core.exceptions import NumericFailureError, StageError
from app.main import EXIT_INVALID, EXIT_NUMERIC, EXIT_OK, build_parser, main
from app.schemas.report import RunReport


@pytest.fixture
def log_args(tmp_path):
    return ["--log-level", "WARNING", "--log-dir", str(tmp_path / "logs")]


def _synth(tmp_path, log_args):
    out = str(tmp_path / "data")
    args = log_args + ["synth", "--stocks", "3", "--days", "60", "--seed", "2", "--out", out]
    assert main(args) == EXIT_OK
    return out


class TestParser:
    """
    * test suite for the argument surface
    """

    def test_subcommands(self):
        parser = build_parser()
        for command in ("synth", "ingest-check", "run", "report"):
            extra = ["--out", "x"] if command == "report" else []
            assert parser.parse_args([command] + extra).command == command

    def test_unset_run_flags_stay_none(self):
        args = build_parser().parse_args(["run", "--seed", "4"])
        assert args.seed == 4
        assert args.eps1 is None and args.allow_missing is None and args.out is None

    def test_report_needs_out(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["report"])


class TestMain:
    """
    * test suite for command dispatch and exit codes
    """

    def test_synth_prints_summary(self, tmp_path, log_args, capsys):
        out = _synth(tmp_path, log_args)
        summary = json.loads(capsys.readouterr().out)
        assert summary["stocks"] == 3 and summary["days"] == 60
        assert set(summary["class_balance"]) == {"Up", "Down", "Still"}
        assert os.path.isfile(os.path.join(out, "quant.csv"))

    def test_ingest_check(self, tmp_path, log_args, capsys):
        out = _synth(tmp_path, log_args)
        capsys.readouterr()
        code = main(
            log_args
            + [
                "ingest-check",
                "--quant-csv", os.path.join(out, "quant.csv"),
                "--events-csv", os.path.join(out, "events.csv"),
                "--sentiment-csv", os.path.join(out, "sentiment.csv"),
            ]
        )
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)["missing_cells"] == 0

    def test_missing_csv_is_invalid(self, tmp_path, log_args, capsys):
        code = main(log_args + ["ingest-check", "--quant-csv", str(tmp_path / "gone.csv")])
        assert code == EXIT_INVALID
        assert "gone.csv" in capsys.readouterr().err

    def test_missing_config_is_invalid(self, tmp_path, log_args, capsys):
        code = main(log_args + ["run", "--config", str(tmp_path / "run.json")])
        assert code == EXIT_INVALID
        assert "config file not found" in capsys.readouterr().err

    def test_bad_config_value_is_invalid(self, tmp_path, log_args):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"eps1": 2.0}), encoding="utf-8")
        assert main(log_args + ["run", "--config", str(path)]) == EXIT_INVALID

    def test_numeric_stage_failure(self, tmp_path, log_args):
        failure = StageError("smc", NumericFailureError("smc loss diverged", iteration=3))
        with patch("app.main.run_pipeline", side_effect=failure):
            assert main(log_args + ["run", "--out", str(tmp_path / "run")]) == EXIT_NUMERIC

    def test_invalid_stage_failure(self, tmp_path, log_args):
        failure = StageError("split", ValueError("panel too short"))
        with patch("app.main.run_pipeline", side_effect=failure):
            assert main(log_args + ["run"]) == EXIT_INVALID

    def test_flags_override_config(self, tmp_path, log_args):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 1, "eps1": 0.2}), encoding="utf-8")
        with patch("app.main.run_pipeline", return_value=RunReport()) as run:
            assert main(log_args + ["run", "--config", str(path), "--seed", "9"]) == EXIT_OK
        cfg = run.call_args.args[0]
        assert cfg.seed == 9 and cfg.smc.seed == 9
        assert cfg.eps1 == 0.2

    def test_report_without_run(self, tmp_path, log_args):
        assert main(log_args + ["report", "--out", str(tmp_path)]) == EXIT_INVALID

    def test_unwritable_output_is_invalid(self, tmp_path, log_args, capsys):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory", encoding="utf-8")
        assert main(log_args + ["run", "--out", str(blocker / "run")]) == EXIT_INVALID
        assert "cannot create output directory" in capsys.readouterr().err
