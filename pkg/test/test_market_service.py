from datetime import date

import numpy as np
import pytest

from app.core.exceptions import InvalidArgumentError
from app.schemas.market import Label, StockDayRecord
from app.services.market_service import (
    MarketPanel,
    build_tensor,
    build_w,
    build_weights,
    build_z,
    label,
    normalize_quant,
    split_panel,
)


def _record(**overrides) -> StockDayRecord:
    values = dict(
        stock_id="S000",
        date=date(2015, 1, 5),
        quant=[1.0, 0.0, 0.0, 0.0, 0.0],
        event=[1.0, 0.0, 0.0],
        sentiment=[1.0, 0.0],
        close=10.0,
        p_change=0.01,
    )
    values.update(overrides)
    return StockDayRecord(**values)


class TestBuildTensor:
    """
    * test suite for rank-1 fusion
    """

    def test_basis_record(self):
        t = build_tensor(_record())
        assert t.shape == (5, 3, 2)
        assert t[0, 0, 0] == 1.0
        assert t.sum() == 1.0

    def test_zero_sentiment_gives_zero_tensor(self):
        t = build_tensor(_record(sentiment=[0.0, 0.0]))
        assert not t.any()

    def test_entries_match_loop_oracle(self):
        rng = np.random.default_rng(0)
        q, e, s = rng.normal(size=5), rng.normal(size=3), rng.normal(size=2)
        t = build_tensor(_record(quant=q.tolist(), event=e.tolist(), sentiment=s.tolist()))
        for i in range(5):
            for j in range(3):
                for k in range(2):
                    assert t[i, j, k] == pytest.approx(q[i] * e[j] * s[k], rel=1e-15)

    def test_non_finite_names_field(self):
        with pytest.raises(InvalidArgumentError, match="event"):
            build_tensor(_record(event=[1.0, float("nan"), 0.0]))


class TestLabel:
    """
    * test suite for the movement scope rule
    """

    @pytest.mark.parametrize(
        "p_change, expected",
        [(0.025, Label.up), (-0.03, Label.down), (0.01, Label.still), (0.02, Label.still), (-0.02, Label.still)],
    )
    def test_two_percent_rule(self, p_change, expected):
        assert label(p_change, 0.02) == expected

    @pytest.mark.parametrize("p_change", [0.05, -0.05, 0.0, 0.021])
    def test_mirror(self, p_change):
        mirrored = {Label.up: Label.down, Label.down: Label.up, Label.still: Label.still}
        assert label(-p_change, 0.02) == mirrored[label(p_change, 0.02)]

    def test_threshold_must_be_positive(self):
        with pytest.raises(InvalidArgumentError, match="threshold"):
            label(0.1, 0.0)


class TestBuildW:
    """
    * test suite for temporal similarity matrices
    """

    def test_close_pair_is_similar(self, panel_factory):
        panel = panel_factory(np.array([[0.030, 0.029]]))
        w, n_zero = build_w(panel, 0, 0.05)
        assert w[0, 1] == 1
        assert w[1, 0] == 0
        assert w[0, 0] == 0 and w[1, 1] == 0
        assert n_zero == 0

    def test_far_pair_is_not_similar(self, panel_factory):
        panel = panel_factory(np.array([[0.05, 0.01]]))
        w, _ = build_w(panel, 0, 0.5)
        assert w[0, 1] == 0

    def test_zero_denominator_counted(self, panel_factory):
        panel = panel_factory(np.array([[0.0, 0.0, 0.01]]))
        w, n_zero = build_w(panel, "S000", 0.5)
        # * pairs (0, 1) divide by y_1 = 0
        assert w[0, 1] == 0
        assert n_zero == 1

    def test_only_upper_triangle(self, small_panel):
        w, _ = build_w(small_panel, 1, 0.5)
        assert not np.any(w * w.T)
        assert not np.any(np.tril(w))
        assert set(np.unique(w)) <= {0, 1}

    def test_scale_invariant(self, panel_factory):
        y = np.random.default_rng(3).uniform(0.01, 0.05, size=(1, 20))
        a, _ = build_w(panel_factory(y), 0, 0.3)
        b, _ = build_w(panel_factory(y * 0.37), 0, 0.3)
        np.testing.assert_array_equal(a, b)

    def test_missing_day_has_no_pairs(self, panel_factory):
        y = np.full((1, 4), 0.03)
        present = np.array([[True, False, True, True]])
        w, _ = build_w(panel_factory(y, present=present), 0, 0.1)
        assert not w[1].any() and not w[:, 1].any()
        assert w[0, 2] == 1

    @pytest.mark.parametrize("eps1", [0.0, 1.0])
    def test_eps1_range(self, small_panel, eps1):
        with pytest.raises(InvalidArgumentError, match="eps1"):
            build_w(small_panel, 0, eps1)


class TestBuildZ:
    """
    * test suite for cross-stock correlation matrices
    """

    def test_identical_series(self, panel_factory):
        y = np.random.default_rng(4).uniform(-0.05, 0.05, size=(1, 5))
        panel = panel_factory(np.vstack([y, y]))
        z, has_history = build_z(panel, 4, 0.9, 5)
        assert has_history
        assert z[0, 1] == 1
        assert z[1, 0] == 0 and z[0, 0] == 0

    def test_anticorrelated_series(self, panel_factory):
        panel = panel_factory(np.array([[0.01, 0.02, 0.03], [0.03, 0.02, 0.01]]))
        z, _ = build_z(panel, 2, 0.0, 3)
        assert z[0, 1] == 0

    def test_insufficient_history_flagged(self, small_panel):
        z, has_history = build_z(small_panel, 3, 0.6, 20)
        assert not has_history
        assert not z.any()

    def test_constant_window_gets_zero(self, panel_factory):
        panel = panel_factory(np.array([[0.03, 0.03, 0.03], [0.01, 0.02, 0.03]]))
        z, _ = build_z(panel, 2, -0.5, 3)
        assert z[0, 1] == 0

    def test_affine_invariance(self, panel_factory):
        rng = np.random.default_rng(5)
        y = rng.uniform(-0.05, 0.05, size=(3, 20))
        moved = y.copy()
        moved[1] = 0.5 * y[1] + 0.01
        a, _ = build_z(panel_factory(y), 19, 0.1, 20)
        b, _ = build_z(panel_factory(moved), 19, 0.1, 20)
        np.testing.assert_array_equal(a, b)

    def test_industry_source(self, panel_factory):
        y = np.random.default_rng(6).uniform(-0.05, 0.05, size=(2, 6))
        panel = panel_factory(y)
        panel.industry[1] = 2.0 * panel.industry[0] + 1.0
        z, _ = build_z(panel, 5, 0.99, 6, source="industry_index")
        assert z[0, 1] == 1


class TestWeightsAndSplit:
    """
    * test suite for weight assembly, splitting and normalization
    """

    def test_densities_in_unit_interval(self, small_panel):
        weights = build_weights(small_panel, 0.5, 0.3, 5)
        assert 0.0 <= weights.w_density <= 1.0
        assert 0.0 <= weights.z_density <= 1.0
        assert weights.w.shape == (3, 30, 30)
        assert weights.z.shape == (30, 3, 3)
        assert weights.z_history.count(False) == 4

    def test_twelve_month_split(self, panel_factory):
        y = np.random.default_rng(7).uniform(-0.06, 0.06, size=(2, 260))
        panel = panel_factory(y)
        split = split_panel(panel, 9, 3)
        last_train = panel.dates[split.train_days[-1]]
        assert (last_train.year, last_train.month) == (2015, 9)
        assert last_train == max(d for d in panel.dates if d.month == 9 and d.year == 2015)
        assert not set(split.train_days) & set(split.test_days)
        for s, t in split.train + split.test:
            assert abs(y[s, t]) > 0.02

    def test_short_panel_rejected(self, small_panel):
        with pytest.raises(InvalidArgumentError, match="months"):
            split_panel(small_panel, 9, 3)

    def test_normalize_uses_training_statistics(self, small_panel):
        train_days = np.arange(20)
        normalized = normalize_quant(small_panel, train_days)
        train_values = normalized.quant[:, train_days].reshape(-1, 5)
        np.testing.assert_allclose(train_values.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(train_values.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_array_equal(normalized.industry, small_panel.industry)

    def test_from_records_rejects_duplicates(self):
        rec = _record()
        with pytest.raises(InvalidArgumentError, match="duplicate"):
            MarketPanel.from_records([rec, rec], (5, 3, 2))


def _w_oracle(panel, s, eps1):
    y, ok = panel.p_change[s], panel.present[s]
    T = len(y)
    w = np.zeros((T, T), dtype=np.int8)
    zeros = 0
    for i in range(T):
        for j in range(i + 1, T):
            if not (ok[i] and ok[j]):
                continue
            if y[j] == 0.0:
                zeros += 1
            elif abs(y[i] - y[j]) / abs(y[j]) <= eps1:
                w[i, j] = 1
    return w, zeros


def _z_oracle(series, present, t, eps2, window):
    S = series.shape[0]
    z = np.zeros((S, S), dtype=np.int8)
    if t < window - 1:
        return z, False
    lo = t - window + 1
    for s in range(S):
        for m in range(s + 1, S):
            if not (present[s, lo : t + 1].all() and present[m, lo : t + 1].all()):
                continue
            a, b = [float(x) for x in series[s, lo : t + 1]], [float(x) for x in series[m, lo : t + 1]]
            if max(a) == min(a) or max(b) == min(b):
                continue
            mean_a, mean_b = sum(a) / window, sum(b) / window
            cov = sum((x - mean_a) * (y - mean_b) for x, y in zip(a, b))
            var_a = sum((x - mean_a) ** 2 for x in a)
            var_b = sum((y - mean_b) ** 2 for y in b)
            if cov / np.sqrt(var_a * var_b) >= eps2:
                z[s, m] = 1
    return z, True


class TestRandomizedOracles:
    """
    * test suite for W and Z against pairwise loops on random panels
    """

    @staticmethod
    def _panel(seed, panel_factory):
        rng = np.random.default_rng(300 + seed)
        S, T = int(rng.integers(2, 6)), int(rng.integers(8, 25))
        # * rounded moves give repeated values, zeros and flat windows
        y = np.round(rng.uniform(-0.05, 0.05, size=(S, T)), 3)
        y[-1] = y[0]
        present = rng.uniform(size=(S, T)) > 0.1
        return rng, panel_factory(y, present=present, seed=seed)

    @pytest.mark.parametrize("seed", range(25))
    def test_w_matches_pair_loop(self, seed, panel_factory):
        rng, panel = self._panel(seed, panel_factory)
        eps1 = float(rng.uniform(0.05, 0.5))
        for s in range(panel.shape[0]):
            w, zeros = build_w(panel, s, eps1)
            expected, expected_zeros = _w_oracle(panel, s, eps1)
            np.testing.assert_array_equal(w, expected)
            assert zeros == expected_zeros

    @pytest.mark.parametrize("seed", range(25))
    @pytest.mark.parametrize("source", ["p_change", "industry_index"])
    def test_z_matches_pair_loop(self, seed, source, panel_factory):
        rng, panel = self._panel(seed, panel_factory)
        eps2 = float(rng.uniform(-0.5, 0.9))
        window = int(rng.integers(2, 6))
        series = panel.p_change if source == "p_change" else panel.industry
        for t in range(panel.shape[1]):
            z, has_history = build_z(panel, t, eps2, window, source=source)
            expected, expected_history = _z_oracle(series, panel.present, t, eps2, window)
            assert has_history == expected_history
            np.testing.assert_array_equal(z, expected)
