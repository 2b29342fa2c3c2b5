import numpy as np
import pytest
from pydantic import ValidationError

from app.schemas.market import Label
from app.schemas.synth import SynthSpec
from app.services.ingest_service import event_header, quant_header, sentiment_header
from app.services.market_service import class_balance, panel_labels
from app.services.synth_service import QUANT_BASE, csv_paths, synth_panel


def _header(path: str):
    with open(path, encoding="utf-8") as f:
        return f.readline().strip().split(",")


class TestSynthPanel:
    """
    * test suite for the planted-signal generator
    """

    def test_same_seed_same_bytes(self, tmp_path):
        spec = SynthSpec(stocks=4, days=80, seed=11)
        synth_panel(spec, str(tmp_path / "a"))
        synth_panel(spec, str(tmp_path / "b"))
        a, b = csv_paths(str(tmp_path / "a")), csv_paths(str(tmp_path / "b"))
        for key in a:
            with open(a[key], "rb") as fa, open(b[key], "rb") as fb:
                assert fa.read() == fb.read()

    def test_seed_changes_panel(self, tmp_path):
        a = synth_panel(SynthSpec(stocks=4, days=80, seed=1), str(tmp_path / "a"))
        b = synth_panel(SynthSpec(stocks=4, days=80, seed=2), str(tmp_path / "b"))
        assert not np.array_equal(a.p_change, b.p_change)

    def test_headers(self, tmp_path):
        synth_panel(SynthSpec(stocks=2, days=60, dims=(5, 6, 3)), str(tmp_path))
        paths = csv_paths(str(tmp_path))
        assert _header(paths["quant_csv"]) == quant_header()
        assert _header(paths["events_csv"]) == event_header(6)
        assert _header(paths["sentiment_csv"]) == sentiment_header(3)

    def test_all_classes_present(self, tmp_path):
        panel = synth_panel(SynthSpec(stocks=4, days=120, seed=5), str(tmp_path))
        balance = class_balance(panel, 0.02)
        assert all(balance[lab.value] > 0 for lab in Label)
        assert sum(balance.values()) == 4 * 120

    def test_mode_product_leads_direction(self, tmp_path):
        """
        * without noise, yesterday's turnover offset times its first event feature carries today's direction
        """
        panel = synth_panel(SynthSpec(stocks=4, days=120, noise=0.0, seed=9), str(tmp_path))
        product = (panel.quant[:, :-1, 0] - QUANT_BASE[0]) * panel.event[:, :-1, 0]
        moves = panel.p_change[:, 1:]
        np.testing.assert_array_equal(np.sign(product), np.sign(moves))

    def test_single_modes_do_not_lead_direction(self, tmp_path):
        panel = synth_panel(SynthSpec(stocks=8, days=250, noise=0.0, seed=9), str(tmp_path))
        moves = np.sign(panel.p_change[:, 1:])
        quant_hits = np.mean(np.sign(panel.quant[:, :-1, 0] - QUANT_BASE[0]) == moves)
        event_hits = np.mean(np.sign(panel.event[:, :-1, 0]) == moves)
        assert 0.3 < quant_hits < 0.7
        assert 0.3 < event_hits < 0.7

    def test_clusters_move_together(self, tmp_path):
        panel = synth_panel(SynthSpec(stocks=6, days=60, n_clusters=3, seed=4), str(tmp_path))
        labels = panel_labels(panel, 1e-9)
        for s in range(3):
            assert list(labels[s]) == list(labels[s + 3])

    def test_no_signal_still_writes_valid_panel(self, tmp_path):
        panel = synth_panel(SynthSpec(stocks=4, days=60, signal_strength=0.0), str(tmp_path))
        assert panel.present.all()
        assert np.all(panel.close > 0)

    @pytest.mark.parametrize(
        "overrides",
        [{"n_clusters": 5, "stocks": 4}, {"dims": (4, 8, 4)}, {"days": 10}, {"noise": -1.0}],
    )
    def test_invalid_spec(self, overrides):
        with pytest.raises(ValidationError):
            SynthSpec(**overrides)
