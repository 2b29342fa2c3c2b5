from typing import List, Literal

from pydantic import BaseModel, Field


class TrainConfig(BaseModel):
    """
    * predictor training settings (shared by lstm and logistic baseline)
    """

    learning_rate: float = Field(0.01, gt=0)
    epochs: int = Field(200, gt=0)
    batch_size: int = Field(32, gt=0, description="minibatch size")
    clip_norm: float = Field(5.0, gt=0, description="gradient-clip max global norm")
    seed: int = 7
    window: int = Field(5, gt=0, description="L, trading days per sequence")
    hidden_dim: int = Field(32, gt=0)
    cutoff: float = Field(0.5, gt=0, lt=1, description="Up iff probability > cutoff")


class WeightBlock(BaseModel):
    name: str
    rows: int
    cols: int
    row_major_values: List[float]


class LstmCheckpoint(BaseModel):
    """
    * serialized lstm weights, versioned
    """

    lstm_version: Literal[1] = 1
    input_dim: int
    hidden_dim: int
    blocks: List[WeightBlock]
