"""
Planted-signal market panels for end-to-end checks.

Every stock belongs to one of ``n_clusters`` clusters. Each cluster carries
two latent factors per day, a[c, t] and b[c, t], both +/-(0.5 + u) with
u ~ U(0, 1). The quant vector (industry index included) moves with a, the
event vector moves with b, and the sentiment vector carries |b| as intensity.
Day t + 1 moves in the direction sign(a * b) of day t for every cluster
member, so the direction lives in the interaction of two modes: any single
mode on its own says nothing about it, while the fused tensor holds the
product entry by entry. With ``signal_strength == 0`` the features carry no
factor and directions are drawn at random.
"""

import os
from typing import Dict

import numpy as np
import pandas as pd

from app.core.exceptions import InvalidArgumentError
from app.schemas.market import QUANT_COLUMNS
from app.schemas.synth import SynthSpec
from app.services.ingest_service import (
    event_header,
    ingest_panel,
    quant_header,
    sentiment_header,
)
from app.services.market_service import MarketPanel, class_balance
from app.utils.logger import LOGGER

QUANT_FILE = "quant.csv"
EVENTS_FILE = "events.csv"
SENTIMENT_FILE = "sentiment.csv"
FLOAT_FORMAT = "%.10g"

# * turnover, pe, pb, pcf, industry_index levels before the planted factor is added
QUANT_BASE = np.array([2.0, 15.0, 2.0, 8.0, 1000.0])
CLOSE_START = 10.0
# * move sizes straddle the 2% rule so some days are Still
MOVE_RANGE = (0.01, 0.06)


def csv_paths(out_dir: str) -> Dict[str, str]:
    return {
        "quant_csv": os.path.join(out_dir, QUANT_FILE),
        "events_csv": os.path.join(out_dir, EVENTS_FILE),
        "sentiment_csv": os.path.join(out_dir, SENTIMENT_FILE),
    }


def _factor(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=shape) * (0.5 + rng.uniform(0.0, 1.0, size=shape))


def _generate(spec: SynthSpec) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    S, T = spec.stocks, spec.days
    i1, i2, i3 = spec.dims
    C = spec.n_clusters
    cluster = np.arange(S) % C

    # * draws happen in a fixed order so a seed always gives the same panel
    quant_factor = _factor(rng, (C, T))
    event_factor = _factor(rng, (C, T))
    quant_load = rng.uniform(0.5, 1.5, size=(C, i1))
    event_load = rng.uniform(0.5, 1.5, size=(C, i2))
    sentiment_load = rng.uniform(0.0, 1.0, size=(C, i3))
    random_dir = rng.choice([-1.0, 1.0], size=(C, T))
    magnitude = rng.uniform(*MOVE_RANGE, size=(S, T))
    quant_noise = rng.standard_normal((S, T, i1))
    event_noise = rng.standard_normal((S, T, i2))
    sentiment_noise = rng.standard_normal((S, T, i3))

    strength = spec.signal_strength
    a = quant_factor[cluster][:, :, None]
    b = event_factor[cluster][:, :, None]

    if strength > 0:
        # * day t moves the way a * b pointed on day t - 1
        joint = np.sign(quant_factor * event_factor)
        direction = np.concatenate([random_dir[:, :1], joint[:, :-1]], axis=1)
    else:
        direction = random_dir
    p_change = direction[cluster] * magnitude
    close = CLOSE_START * np.cumprod(1.0 + p_change, axis=1)

    quant = QUANT_BASE + strength * a * quant_load[cluster][:, None, :] + spec.noise * quant_noise
    event = strength * b * event_load[cluster][:, None, :] + spec.noise * event_noise
    sentiment = 1.0 + strength * np.abs(b) * sentiment_load[cluster][:, None, :] + spec.noise * sentiment_noise
    return {
        "quant": quant,
        "event": event,
        "sentiment": sentiment,
        "close": close,
        "p_change": p_change,
    }


def _frame(stocks, dates, columns, values: np.ndarray) -> pd.DataFrame:
    S, T = values.shape[:2]
    frame = pd.DataFrame(values.reshape(S * T, -1), columns=columns)
    frame.insert(0, "date", [d.isoformat() for _ in range(S) for d in dates])
    frame.insert(0, "stock_id", [s for s in stocks for _ in range(T)])
    return frame


def synth_panel(spec: SynthSpec, out_dir: str) -> MarketPanel:
    """
    * generate a planted-signal panel, write the three csvs, and read them back
    """
    if spec.dims[0] != len(QUANT_COLUMNS):
        raise InvalidArgumentError(f"quant mode has {len(QUANT_COLUMNS)} features, got I1={spec.dims[0]}")
    LOGGER.info(
        f"[Synth] stocks={spec.stocks} days={spec.days} clusters={spec.n_clusters} "
        f"signal={spec.signal_strength} noise={spec.noise} seed={spec.seed}"
    )
    data = _generate(spec)
    stocks = [f"S{s:03d}" for s in range(spec.stocks)]
    dates = [d.date() for d in pd.bdate_range(start=spec.start_date, periods=spec.days)]
    _, i2, i3 = spec.dims

    quant = np.concatenate([data["quant"], data["close"][:, :, None], data["p_change"][:, :, None]], axis=2)
    frames = {
        QUANT_FILE: _frame(stocks, dates, quant_header()[2:], quant),
        EVENTS_FILE: _frame(stocks, dates, event_header(i2)[2:], data["event"]),
        SENTIMENT_FILE: _frame(stocks, dates, sentiment_header(i3)[2:], data["sentiment"]),
    }

    os.makedirs(out_dir, exist_ok=True)
    for name, frame in frames.items():
        frame.to_csv(
            os.path.join(out_dir, name), index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8"
        )

    panel = ingest_panel(dims=spec.dims, **csv_paths(out_dir))
    LOGGER.info(f"[Synth] wrote {out_dir}, class balance {class_balance(panel, 0.02)}")
    return panel
