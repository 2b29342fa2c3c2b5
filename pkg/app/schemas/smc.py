from typing import Dict, List, Literal

from pydantic import BaseModel, Field, model_validator


class SmcConfig(BaseModel):
    """
    * sub-mode coordinate training settings
    """

    reduced_dims: tuple[int, int, int] = Field(
        (2, 3, 2), description="(J1, J2, J3), each J_k <= I_k"
    )
    alpha: float = Field(0.001, gt=0, description="adam step size")
    beta1: float = Field(0.9, gt=0, lt=1, description="moment decay")
    beta2: float = Field(0.999, gt=0, lt=1, description="torque decay")
    adam_eps: float = Field(1e-8, gt=0)
    iter_max: int = Field(500, gt=0)
    conv_tol: float = Field(1e-6, gt=0, description="relative loss change stop")
    conv_window: int = Field(5, ge=1, description="iterations compared by conv_tol")
    constrain_orthonormal: bool = True
    cross_weight: float = Field(
        1.0, ge=0, description="weight of the cross-stock (Z) term"
    )
    per_stock: bool = Field(False, description="one V per (stock, mode)")
    seed: int = 7

    @model_validator(mode="after")
    def _positive_dims(self):
        if any(j < 1 for j in self.reduced_dims):
            raise ValueError(f"reduced dims must be positive, got {self.reduced_dims}")
        return self


class ModeCheckpoint(BaseModel):
    mode: int = Field(..., ge=1, le=3)
    rows: int
    cols: int
    row_major_values: List[float]
    loss_trace: List[float] = Field(default_factory=list)


class SmcCheckpoint(BaseModel):
    """
    * serialized modification matrices, versioned
    """

    smc_version: Literal[1] = 1
    config: SmcConfig
    modes: List[ModeCheckpoint]
    per_stock: Dict[str, List[ModeCheckpoint]] = Field(default_factory=dict)
