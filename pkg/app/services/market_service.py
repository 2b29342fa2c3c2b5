from dataclasses import dataclass, field, replace
from datetime import date
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import InvalidArgumentError
from app.schemas.market import Label, StockDayRecord
from app.services.tensor_ops import outer_product3
from app.utils.logger import LOGGER

StockRef = Union[int, str]
ZSource = Literal["p_change", "industry_index"]


@dataclass(frozen=True, eq=False)
class MarketPanel:
    """
    * S x T grid of stock-day features; absent cells have present=False and zero values
    """

    stocks: Tuple[str, ...]
    dates: Tuple[date, ...]
    quant: np.ndarray  # (S, T, I1)
    event: np.ndarray  # (S, T, I2)
    sentiment: np.ndarray  # (S, T, I3)
    close: np.ndarray  # (S, T)
    p_change: np.ndarray  # (S, T)
    present: np.ndarray  # (S, T) bool
    industry: np.ndarray = field(default=None)  # (S, T) raw industry index

    def __post_init__(self):
        S, T = len(self.stocks), len(self.dates)
        if S == 0 or T == 0:
            raise InvalidArgumentError("panel needs at least one stock and one date")
        if len(set(self.stocks)) != S:
            raise InvalidArgumentError("stock ids must be unique")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise InvalidArgumentError("panel dates must be strictly increasing")
        for name in ("quant", "event", "sentiment"):
            arr = getattr(self, name)
            if arr.ndim != 3 or arr.shape[:2] != (S, T):
                raise InvalidArgumentError(f"{name} must have shape ({S}, {T}, I), got {arr.shape}")
        for name in ("close", "p_change", "present"):
            if getattr(self, name).shape != (S, T):
                raise InvalidArgumentError(f"{name} must have shape ({S}, {T})")
        if self.industry is None:
            object.__setattr__(self, "industry", self.quant[:, :, -1].copy())

    @property
    def dims(self) -> Tuple[int, int, int]:
        return (self.quant.shape[2], self.event.shape[2], self.sentiment.shape[2])

    @property
    def shape(self) -> Tuple[int, int]:
        return (len(self.stocks), len(self.dates))

    def stock_index(self, stock: StockRef) -> int:
        if isinstance(stock, str):
            try:
                return self.stocks.index(stock)
            except ValueError:
                raise InvalidArgumentError(f"unknown stock id: {stock}")
        if not 0 <= stock < len(self.stocks):
            raise InvalidArgumentError(f"stock index {stock} out of range")
        return int(stock)

    def record(self, s: StockRef, t: int) -> Optional[StockDayRecord]:
        s = self.stock_index(s)
        if not self.present[s, t]:
            return None
        return StockDayRecord(
            stock_id=self.stocks[s],
            date=self.dates[t],
            quant=self.quant[s, t].tolist(),
            event=self.event[s, t].tolist(),
            sentiment=self.sentiment[s, t].tolist(),
            close=float(self.close[s, t]),
            p_change=float(self.p_change[s, t]),
        )

    def subset_days(self, days: Sequence[int]) -> "MarketPanel":
        days = np.asarray(days, dtype=int)
        return MarketPanel(
            stocks=self.stocks,
            dates=tuple(self.dates[d] for d in days),
            quant=self.quant[:, days].copy(),
            event=self.event[:, days].copy(),
            sentiment=self.sentiment[:, days].copy(),
            close=self.close[:, days].copy(),
            p_change=self.p_change[:, days].copy(),
            present=self.present[:, days].copy(),
            industry=self.industry[:, days].copy(),
        )

    @classmethod
    def from_records(cls, records: Sequence[StockDayRecord], dims: Sequence[int]) -> "MarketPanel":
        """
        * build the grid from loose records, cells without a record are missing
        """
        if not records:
            raise InvalidArgumentError("no records to build a panel from")
        stocks = tuple(sorted({r.stock_id for r in records}))
        dates = tuple(sorted({r.date for r in records}))
        s_idx = {s: i for i, s in enumerate(stocks)}
        t_idx = {d: i for i, d in enumerate(dates)}
        S, T = len(stocks), len(dates)
        i1, i2, i3 = dims

        quant = np.zeros((S, T, i1))
        event = np.zeros((S, T, i2))
        sentiment = np.zeros((S, T, i3))
        close = np.zeros((S, T))
        p_change = np.zeros((S, T))
        present = np.zeros((S, T), dtype=bool)
        for r in records:
            s, t = s_idx[r.stock_id], t_idx[r.date]
            if present[s, t]:
                raise InvalidArgumentError(f"duplicate record for {r.stock_id} on {r.date}")
            for name, values, size in (("quant", r.quant, i1), ("event", r.event, i2), ("sentiment", r.sentiment, i3)):
                if len(values) != size:
                    raise InvalidArgumentError(
                        f"{name} vector of {r.stock_id} on {r.date} has length {len(values)}, expected {size}"
                    )
            quant[s, t] = r.quant
            event[s, t] = r.event
            sentiment[s, t] = r.sentiment
            close[s, t] = r.close
            p_change[s, t] = r.p_change
            present[s, t] = True

        return cls(stocks, dates, quant, event, sentiment, close, p_change, present)


@dataclass(frozen=True, eq=False)
class SimilarityWeights:
    """
    * binary strictly-upper-triangular W_s (per stock) and Z_t (per day)
    """

    w: np.ndarray  # (S, T, T)
    z: np.ndarray  # (T, S, S)
    eps1: float
    eps2: float
    corr_window: int
    zero_denominators: int = 0
    z_history: Tuple[bool, ...] = ()

    @property
    def w_density(self) -> float:
        S, T, _ = self.w.shape
        slots = S * T * (T - 1) // 2
        return float(self.w.sum()) / slots if slots else 0.0

    @property
    def z_density(self) -> float:
        T, S, _ = self.z.shape
        slots = T * S * (S - 1) // 2
        return float(self.z.sum()) / slots if slots else 0.0

    def nonzero(self) -> bool:
        return bool(self.w.any() or self.z.any())


@dataclass(frozen=True, eq=False)
class PanelSplit:
    train: List[Tuple[int, int]]
    test: List[Tuple[int, int]]
    train_days: np.ndarray
    test_days: np.ndarray


def build_tensor(rec: StockDayRecord) -> np.ndarray:
    """
    * rank-1 fusion quant o event o sentiment
    """
    vectors = []
    for name in ("quant", "event", "sentiment"):
        v = np.asarray(getattr(rec, name), dtype=np.float64)
        if v.size == 0:
            raise InvalidArgumentError(f"{name} vector of {rec.stock_id} on {rec.date} is empty")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError(f"{name} vector of {rec.stock_id} on {rec.date} has non-finite values")
        vectors.append(v)
    return outer_product3(*vectors)


def label(p_change: float, threshold: float) -> Label:
    if threshold <= 0:
        raise InvalidArgumentError(f"threshold must be positive, got {threshold}")
    if p_change > threshold:
        return Label.up
    if p_change < -threshold:
        return Label.down
    return Label.still


def panel_labels(panel: MarketPanel, threshold: float) -> np.ndarray:
    """(S, T) object array of Label, None on missing cells"""
    S, T = panel.shape
    out = np.empty((S, T), dtype=object)
    for s in range(S):
        for t in range(T):
            out[s, t] = label(float(panel.p_change[s, t]), threshold) if panel.present[s, t] else None
    return out


def class_balance(panel: MarketPanel, threshold: float) -> Dict[str, int]:
    labels = panel_labels(panel, threshold)
    return {lab.value: int(np.sum(labels == lab)) for lab in Label}


def build_w(panel: MarketPanel, s: StockRef, eps1: float) -> Tuple[np.ndarray, int]:
    """
    Temporal similarity matrix W_s.

    w[i, j] = 1 iff i < j and |y_i - y_j| / |y_j| <= eps1 where y is the
    p_change series of the stock. Pairs touching a missing day are 0. Pairs
    with y_j == 0 are 0 and counted in the returned zero-denominator total.
    """
    if not 0 < eps1 < 1:
        raise InvalidArgumentError(f"eps1 must lie in (0, 1), got {eps1}")
    s = panel.stock_index(s)
    y = panel.p_change[s]
    ok = panel.present[s]
    T = y.shape[0]

    upper = np.triu(np.ones((T, T), dtype=bool), k=1) & ok[:, None] & ok[None, :]
    denom = np.abs(y)[None, :]
    zero_denom = upper & (denom == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(y[:, None] - y[None, :]) / denom
    w = upper & ~zero_denom & (ratio <= eps1)

    n_zero = int(zero_denom.sum())
    if n_zero:
        LOGGER.warning(f"[Weights] {panel.stocks[s]}: {n_zero} W pairs with zero p_change denominator set to 0")
    return w.astype(np.int8), n_zero


def build_z(
    panel: MarketPanel,
    t: int,
    eps2: float,
    corr_window: int,
    source: ZSource = "p_change",
) -> Tuple[np.ndarray, bool]:
    """
    Cross-stock correlation matrix Z_t.

    z[s, m] = 1 iff s < m and the Pearson correlation of the two stocks'
    series over the trailing ``corr_window`` days ending at t is >= eps2.
    Returns the matrix and whether enough history existed; without history
    the matrix is all zero.
    """
    if not -1 < eps2 <= 1:
        raise InvalidArgumentError(f"eps2 must lie in (-1, 1], got {eps2}")
    if corr_window < 2:
        raise InvalidArgumentError(f"corr_window must be >= 2, got {corr_window}")
    S, T = panel.shape
    if not 0 <= t < T:
        raise InvalidArgumentError(f"day index {t} out of range [0, {T})")
    if t < corr_window - 1:
        return np.zeros((S, S), dtype=np.int8), False

    series = panel.p_change if source == "p_change" else panel.industry
    window = series[:, t - corr_window + 1 : t + 1]
    complete = panel.present[:, t - corr_window + 1 : t + 1].all(axis=1)

    centered = window - window.mean(axis=1, keepdims=True)
    ss = np.sum(centered * centered, axis=1)
    ss[np.ptp(window, axis=1) == 0.0] = 0.0  # * constant window, no correlation
    cov = centered @ centered.T
    denom = np.sqrt(np.outer(ss, ss))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(denom > 0, cov / denom, -np.inf)

    upper = np.triu(np.ones((S, S), dtype=bool), k=1)
    z = upper & complete[:, None] & complete[None, :] & (corr >= eps2)
    return z.astype(np.int8), True


def build_weights(
    panel: MarketPanel,
    eps1: float,
    eps2: float,
    corr_window: int,
    source: ZSource = "p_change",
) -> SimilarityWeights:
    """
    * all W_s and Z_t for a panel
    """
    S, T = panel.shape
    w = np.zeros((S, T, T), dtype=np.int8)
    z = np.zeros((T, S, S), dtype=np.int8)
    zero_total = 0
    history = []
    for s in range(S):
        w[s], n_zero = build_w(panel, s, eps1)
        zero_total += n_zero
    for t in range(T):
        z[t], has_history = build_z(panel, t, eps2, corr_window, source)
        history.append(has_history)

    weights = SimilarityWeights(
        w=w,
        z=z,
        eps1=eps1,
        eps2=eps2,
        corr_window=corr_window,
        zero_denominators=zero_total,
        z_history=tuple(history),
    )
    short = history.count(False)
    if short:
        LOGGER.warning(f"[Weights] {short} of {T} days lack {corr_window} days of history, Z_t left empty")
    LOGGER.info(
        f"[Weights] W density={weights.w_density:.4f} Z density={weights.z_density:.4f} "
        f"zero_denominators={zero_total}"
    )
    return weights


def split_panel(
    panel: MarketPanel, train_months: int, test_months: int, threshold: float = 0.02
) -> PanelSplit:
    """
    * chronological split on calendar-month boundaries, still samples dropped
    """
    if train_months < 1 or test_months < 1:
        raise InvalidArgumentError("train_months and test_months must be positive")
    month_keys = [(d.year, d.month) for d in panel.dates]
    months = sorted(set(month_keys))
    if len(months) < train_months + test_months:
        raise InvalidArgumentError(
            f"panel spans {len(months)} months, need {train_months + test_months}"
        )
    train_set = set(months[:train_months])
    test_set = set(months[train_months : train_months + test_months])
    train_days = np.array([t for t, k in enumerate(month_keys) if k in train_set], dtype=int)
    test_days = np.array([t for t, k in enumerate(month_keys) if k in test_set], dtype=int)

    labels = panel_labels(panel, threshold)

    def samples(days: np.ndarray) -> List[Tuple[int, int]]:
        return [
            (s, int(t))
            for s in range(len(panel.stocks))
            for t in days
            if labels[s, t] is not None and labels[s, t] != Label.still
        ]

    return PanelSplit(train=samples(train_days), test=samples(test_days), train_days=train_days, test_days=test_days)


def normalize_quant(panel: MarketPanel, train_days: Sequence[int]) -> MarketPanel:
    """
    * z-score quant features with training-period statistics only
    """
    train_days = np.asarray(train_days, dtype=int)
    mask = panel.present[:, train_days]
    if not mask.any():
        raise InvalidArgumentError("no present training records to normalize with")
    values = panel.quant[:, train_days][mask]  # (n, I1)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    std[std == 0.0] = 1.0

    quant = np.where(panel.present[:, :, None], (panel.quant - mean) / std, 0.0)
    return replace(panel, quant=quant)
