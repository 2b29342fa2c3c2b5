import pytest

from app.core.exceptions import NumericFailureError, StageError
from app.core.stage_manager import StageManager


class TestStageManager:
    """
    * test suite for stage timing and failure wrapping
    """

    def test_records_completed_stages(self):
        stages = StageManager()
        with stages.stage("ingest"):
            pass
        with stages.stage("tucker"):
            pass
        assert stages.completed == ["ingest", "tucker"]
        assert set(stages.stage_seconds) == {"ingest", "tucker"}
        assert stages.total_seconds >= 0.0

    def test_failure_carries_stage_and_cause(self):
        stages = StageManager()
        cause = NumericFailureError("did not converge", iteration=4)
        with pytest.raises(StageError, match="stage 'smc' failed") as e:
            with stages.stage("smc"):
                raise cause
        assert e.value.stage == "smc"
        assert e.value.cause is cause
        assert e.value.is_numeric
        assert "smc" not in stages.completed
        assert "smc" in stages.stage_seconds

    def test_nested_stage_error_not_rewrapped(self):
        stages = StageManager()
        with pytest.raises(StageError) as e:
            with stages.stage("outer"):
                with stages.stage("inner"):
                    raise ValueError("bad")
        assert e.value.stage == "inner"
        assert not e.value.is_numeric
