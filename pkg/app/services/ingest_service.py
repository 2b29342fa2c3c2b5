import os
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import IngestError
from app.schemas.market import QUANT_COLUMNS, StockDayRecord
from app.services.market_service import MarketPanel, class_balance
from app.utils.logger import LOGGER

KEY_COLUMNS = ["stock_id", "date"]
PRICE_COLUMNS = ["close", "p_change"]
DATE_FORMAT = "%Y-%m-%d"
# * header is line 1, first data row is line 2
FIRST_DATA_LINE = 2


def quant_header() -> List[str]:
    return KEY_COLUMNS + QUANT_COLUMNS + PRICE_COLUMNS


def event_header(i2: int) -> List[str]:
    return KEY_COLUMNS + [f"e{k}" for k in range(1, i2 + 1)]


def sentiment_header(i3: int) -> List[str]:
    return KEY_COLUMNS + [f"s{k}" for k in range(1, i3 + 1)]


def _reject(path: str, line: int, message: str, allow_missing: bool):
    if not allow_missing:
        raise IngestError(message, path=path, line=line)
    LOGGER.warning(f"[Ingest] rejected row {path}:{line}: {message}")


def read_table(path: str, header: Sequence[str], allow_missing: bool = False) -> pd.DataFrame:
    """
    Read one mode csv and validate it row by row.

    Returns a frame with a parsed ``date`` column, float feature columns and
    a ``line`` column holding the source line of each kept row.
    """
    if not os.path.isfile(path):
        raise IngestError("file not found", path=path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=False)
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as e:
        raise IngestError(f"unreadable csv: {e}", path=path, line=1)

    if list(raw.columns) != list(header):
        raise IngestError(
            f"header mismatch, expected {','.join(header)} got {','.join(map(str, raw.columns))}",
            path=path,
            line=1,
        )

    raw["line"] = np.arange(FIRST_DATA_LINE, FIRST_DATA_LINE + len(raw))
    values = list(header[2:])
    parsed = raw[values].apply(pd.to_numeric, errors="coerce")
    dates = pd.to_datetime(raw["date"], format=DATE_FORMAT, errors="coerce")

    keep = np.ones(len(raw), dtype=bool)
    for row in range(len(raw)):
        line = int(raw["line"].iat[row])
        if not raw["stock_id"].iat[row].strip():
            _reject(path, line, "empty stock_id", allow_missing)
            keep[row] = False
            continue
        if pd.isna(dates.iat[row]):
            _reject(path, line, f"unparseable date {raw['date'].iat[row]!r}", allow_missing)
            keep[row] = False
            continue
        bad = [c for c in values if not np.isfinite(parsed[c].iat[row])]
        if bad:
            _reject(path, line, f"unparseable number in column {bad[0]}: {raw[bad[0]].iat[row]!r}", allow_missing)
            keep[row] = False

    frame = parsed[keep].astype(np.float64)
    frame.insert(0, "date", dates[keep].dt.date)
    frame.insert(0, "stock_id", raw["stock_id"][keep].str.strip())
    frame["line"] = raw["line"][keep]

    dup = frame.duplicated(subset=KEY_COLUMNS, keep="first")
    if dup.any():
        first = frame[dup].iloc[0]
        raise IngestError(
            f"duplicate row for {first['stock_id']} on {first['date']}", path=path, line=int(first["line"])
        )

    LOGGER.info(f"[Ingest] {path}: {int(keep.sum())} rows kept, {int((~keep).sum())} rejected")
    return frame.reset_index(drop=True)


def _check_prices(quant: pd.DataFrame, path: str, allow_missing: bool) -> pd.DataFrame:
    bad_close = quant["close"] <= 0
    bad_change = quant["p_change"] <= -1
    keep = ~(bad_close | bad_change)
    for _, row in quant[~keep].iterrows():
        column = "close" if row["close"] <= 0 else "p_change"
        _reject(path, int(row["line"]), f"{column} out of range: {row[column]}", allow_missing)
    return quant[keep]


def _keys(frame: pd.DataFrame) -> Dict[Tuple[str, object], int]:
    return {(s, d): int(line) for s, d, line in zip(frame["stock_id"], frame["date"], frame["line"])}


def ingest_panel(
    quant_csv: str,
    events_csv: str,
    sentiment_csv: str,
    dims: Sequence[int],
    allow_missing: bool = False,
) -> MarketPanel:
    """
    * read the three mode csvs and join them on (stock_id, date)
    """
    i1, i2, i3 = dims
    if i1 != len(QUANT_COLUMNS):
        raise IngestError(f"quant mode has {len(QUANT_COLUMNS)} features, config asks for {i1}", path=quant_csv)

    quant = _check_prices(read_table(quant_csv, quant_header(), allow_missing), quant_csv, allow_missing)
    events = read_table(events_csv, event_header(i2), allow_missing)
    sentiment = read_table(sentiment_csv, sentiment_header(i3), allow_missing)

    tables = ((quant_csv, quant), (events_csv, events), (sentiment_csv, sentiment))
    keys = [(path, _keys(frame)) for path, frame in tables]
    common = set(keys[0][1]) & set(keys[1][1]) & set(keys[2][1])
    for path, found in keys:
        orphans = sorted(set(found) - common, key=lambda k: found[k])
        if orphans and not allow_missing:
            stock_id, day = orphans[0]
            raise IngestError(
                f"{stock_id} on {day} is missing from another mode file", path=path, line=found[orphans[0]]
            )
        if orphans:
            LOGGER.warning(f"[Ingest] {path}: {len(orphans)} rows without a match in the other mode files")

    if not common:
        raise IngestError("no (stock_id, date) appears in all three files", path=quant_csv)

    merged = quant.drop(columns="line").merge(
        events.drop(columns="line"), on=KEY_COLUMNS
    ).merge(sentiment.drop(columns="line"), on=KEY_COLUMNS)
    merged = merged.sort_values(KEY_COLUMNS, kind="stable")

    e_cols, s_cols = event_header(i2)[2:], sentiment_header(i3)[2:]
    records = [
        StockDayRecord(
            stock_id=row.stock_id,
            date=row.date,
            quant=[getattr(row, c) for c in QUANT_COLUMNS],
            event=[getattr(row, c) for c in e_cols],
            sentiment=[getattr(row, c) for c in s_cols],
            close=row.close,
            p_change=row.p_change,
        )
        for row in merged.itertuples(index=False)
    ]
    panel = MarketPanel.from_records(records, dims)

    missing = int((~panel.present).sum())
    if missing and not allow_missing:
        raise IngestError(f"{missing} (stock, day) cells are missing from the panel", path=quant_csv)
    if missing:
        LOGGER.warning(f"[Ingest] {missing} (stock, day) cells missing, kept as gaps")
    LOGGER.info(f"[Ingest] panel of {panel.shape[0]} stocks x {panel.shape[1]} days, dims={panel.dims}")
    return panel


def panel_summary(panel: MarketPanel, threshold: float) -> Dict[str, object]:
    """
    * shape, gaps and label balance of an ingested panel
    """
    S, T = panel.shape
    return {
        "stocks": S,
        "days": T,
        "dims": list(panel.dims),
        "first_date": panel.dates[0].isoformat(),
        "last_date": panel.dates[-1].isoformat(),
        "missing_cells": int((~panel.present).sum()),
        "class_balance": class_balance(panel, threshold),
    }
