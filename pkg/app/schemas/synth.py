from pydantic import BaseModel, Field, model_validator


class SynthSpec(BaseModel):
    """
    * planted-signal panel generator settings
    """

    stocks: int = Field(8, ge=2, description="S")
    days: int = Field(250, ge=60, description="T, trading days")
    dims: tuple[int, int, int] = Field((5, 8, 4), description="(I1, I2, I3)")
    n_clusters: int = Field(2, ge=1)
    signal_strength: float = Field(1.0, ge=0)
    noise: float = Field(0.1, ge=0)
    seed: int = 7
    start_date: str = Field("2015-01-05", description="first trading day, ISO-8601")

    @model_validator(mode="after")
    def _check(self):
        if self.dims[0] != 5:
            raise ValueError("quant mode is fixed at 5 features")
        if min(self.dims) < 1:
            raise ValueError(f"mode dims must be positive, got {self.dims}")
        if self.n_clusters > self.stocks:
            raise ValueError("n_clusters cannot exceed the number of stocks")
        return self
