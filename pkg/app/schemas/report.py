from datetime import date
from typing import Dict, List

from pydantic import BaseModel, Field

from app.schemas.market import Label


class MethodResult(BaseModel):
    """
    * one row of the results table
    """

    method: str
    acc: float
    mcc: float
    n_train: int
    n_test: int
    tp: int
    tn: int
    fp: int
    fn: int


class PredictionRecord(BaseModel):
    method: str
    stock_id: str
    target_date: date
    truth: Label
    predicted: Label
    probability_up: float


class ClassBalance(BaseModel):
    up: int = 0
    down: int = 0
    still: int = 0


class RunReport(BaseModel):
    """
    * full run summary, json form is byte-stable under a fixed seed
    """

    methods: List[MethodResult] = Field(default_factory=list)
    class_balance: ClassBalance = Field(default_factory=ClassBalance)
    sample_counts: Dict[str, int] = Field(default_factory=dict)
    w_density: float = 0.0
    z_density: float = 0.0
    smc_loss_traces: Dict[str, List[float]] = Field(default_factory=dict)
    predictor_loss_traces: Dict[str, List[float]] = Field(default_factory=dict)
    predictions: List[PredictionRecord] = Field(default_factory=list)
    # * wall-clock is not reproducible, kept out of report.json
    stage_seconds: Dict[str, float] = Field(default_factory=dict, exclude=True)
