import json
import os
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import InvalidArgumentError
from app.schemas.predictor import TrainConfig
from app.schemas.smc import SmcConfig
from app.schemas.tucker import TuckerConfig


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="SMC_",
        extra="ignore",
    )

    # * logging
    log_level: str = "INFO"
    log_dir: str = "logs"

    # * run defaults
    output_dir: str = "runs/latest"
    seed: int = 7
    workers: int = 1


settings = Settings()


class RunConfig(BaseModel):
    """
    * wires ingest, fusion, smc, predictors and reporting together
    """

    # * input csvs
    quant_csv: str = "data/quant.csv"
    events_csv: str = "data/events.csv"
    sentiment_csv: str = "data/sentiment.csv"
    allow_missing: bool = False

    # * tensor shape
    mode_dims: tuple[int, int, int] = (5, 8, 4)
    tucker: TuckerConfig = Field(default_factory=TuckerConfig)

    # * similarity weights
    threshold: float = Field(0.02, gt=0, description="movement scope threshold")
    eps1: float = Field(0.1, gt=0, lt=1)
    eps2: float = Field(0.6, gt=-1, le=1)
    corr_window: int = Field(20, ge=2)
    z_source: Literal["p_change", "industry_index"] = "p_change"

    # * learners
    smc: SmcConfig = Field(default_factory=SmcConfig)
    predictor: TrainConfig = Field(default_factory=TrainConfig)
    ablate_cross_stock: bool = False

    # * split
    train_months: int = Field(9, gt=0)
    test_months: int = Field(3, gt=0)

    # * run
    output_dir: str = settings.output_dir
    seed: int = settings.seed
    workers: int = Field(settings.workers, ge=1)

    @model_validator(mode="after")
    def _consistent_dims(self):
        if self.mode_dims[0] != 5:
            raise ValueError("quant mode has exactly 5 features (I1 = 5)")
        if min(self.mode_dims) < 1:
            raise ValueError(f"mode dims must be positive, got {self.mode_dims}")
        for k in range(3):
            if self.smc.reduced_dims[k] > self.mode_dims[k]:
                raise ValueError(
                    f"reduced dim J{k + 1}={self.smc.reduced_dims[k]} exceeds I{k + 1}={self.mode_dims[k]}"
                )
            if self.tucker.ranks is not None and self.tucker.ranks[k] > self.mode_dims[k]:
                raise ValueError(
                    f"tucker rank D{k + 1}={self.tucker.ranks[k]} exceeds I{k + 1}={self.mode_dims[k]}"
                )
        # * the run seed drives every random stream
        self.smc.seed = self.seed
        self.predictor.seed = self.seed
        return self


def load_run_config(
    config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """
    * merge config file and explicit cli flags, flags win
    """
    data: Dict[str, Any] = {}
    if config_path:
        if not os.path.exists(config_path):
            raise InvalidArgumentError(f"config file not found: {config_path}")
        with open(config_path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise InvalidArgumentError(f"config file {config_path} is not valid json: {e}")
        if not isinstance(data, dict):
            raise InvalidArgumentError(f"config file {config_path} must hold a json object")

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    return RunConfig.model_validate(data)
