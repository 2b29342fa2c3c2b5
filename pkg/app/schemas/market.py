from datetime import date
from enum import StrEnum
from typing import List

from pydantic import BaseModel, Field

QUANT_COLUMNS = ["turnover", "pe", "pb", "pcf", "industry_index"]


class Label(StrEnum):
    up = "Up"
    down = "Down"
    still = "Still"


class StockDayRecord(BaseModel):
    """
    * one stock on one trading day, all three feature modes
    """

    stock_id: str
    date: date
    quant: List[float] = Field(..., min_length=1, description="turnover, pe, pb, pcf, industry")
    event: List[float] = Field(..., min_length=1, description="event-mode features")
    sentiment: List[float] = Field(..., min_length=1, description="sentiment-mode features")
    close: float = Field(..., gt=0, description="closing price")
    p_change: float = Field(..., gt=-1, description="fractional daily change")
