from typing import Optional, Sequence

import numpy as np
import pandas as pd
import pytest

from app.services.market_service import MarketPanel


def make_panel(
    p_change: np.ndarray,
    dims: Sequence[int] = (5, 3, 2),
    present: Optional[np.ndarray] = None,
    start: str = "2015-01-05",
    seed: int = 0,
) -> MarketPanel:
    """
    * small panel around a given p_change grid, other features random and positive
    """
    p_change = np.asarray(p_change, dtype=np.float64)
    S, T = p_change.shape
    rng = np.random.default_rng(seed)
    present = np.ones((S, T), dtype=bool) if present is None else np.asarray(present, dtype=bool)
    mask = present[:, :, None]
    quant = np.where(mask, rng.uniform(0.5, 2.0, size=(S, T, dims[0])), 0.0)
    event = np.where(mask, rng.uniform(0.5, 2.0, size=(S, T, dims[1])), 0.0)
    sentiment = np.where(mask, rng.uniform(0.5, 2.0, size=(S, T, dims[2])), 0.0)
    close = np.where(present, 10.0 * np.cumprod(1.0 + p_change, axis=1), 0.0)
    return MarketPanel(
        stocks=tuple(f"S{s:03d}" for s in range(S)),
        dates=tuple(d.date() for d in pd.bdate_range(start=start, periods=T)),
        quant=quant,
        event=event,
        sentiment=sentiment,
        close=close,
        p_change=np.where(present, p_change, 0.0),
        present=present,
    )


@pytest.fixture
def panel_factory():
    return make_panel


@pytest.fixture
def small_panel() -> MarketPanel:
    rng = np.random.default_rng(21)
    return make_panel(rng.uniform(-0.05, 0.05, size=(3, 30)))
