from typing import Optional

from pydantic import BaseModel, Field, field_validator


class TuckerConfig(BaseModel):
    """
    * tucker factorization settings
    """

    ranks: Optional[tuple[int, int, int]] = Field(
        None, description="core dims (D1, D2, D3); None means ceil(I_k / 2)"
    )
    hooi_max_iters: int = Field(25, ge=0, description="0 keeps the plain hosvd")
    hooi_tol: float = Field(1e-6, gt=0, description="relative fit-change stop")

    @field_validator("ranks")
    @classmethod
    def _positive_ranks(cls, value):
        if value is not None and any(r < 1 for r in value):
            raise ValueError(f"tucker ranks must be positive, got {value}")
        return value
