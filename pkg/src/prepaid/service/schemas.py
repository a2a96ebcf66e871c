"""Request and response bodies of the HTTP service."""
from __future__ import annotations

from pydantic import BaseModel, Field, model_validator


class PriorSpec(BaseModel):
    kind: str = "uniform"
    alpha: list[float] | None = None
    beta: list[float] | None = None


class EstimateOptions(BaseModel):
    n_neighbors: int = Field(default=100, ge=2)
    seed: int = 0
    bootstrap_b: int = Field(default=0, ge=0)
    ci_level: float = Field(default=0.95, gt=0.0, lt=1.0)
    prior: PriorSpec | None = None


class EstimateRequest(BaseModel):
    model: str
    method: str = "grid-ml"
    data: str | None = None
    statistics: list[float] | None = None
    t_obs: int | None = Field(default=None, ge=1)
    options: EstimateOptions = Field(default_factory=EstimateOptions)
    include_posterior: bool = False

    @model_validator(mode="after")
    def _exactly_one_payload(self):
        if (self.data is None) == (self.statistics is None):
            raise ValueError("provide exactly one of data and statistics")
        if self.statistics is not None and self.t_obs is None:
            raise ValueError("statistics requests need t_obs")
        return self


class IntervalOut(BaseModel):
    level: float
    low: dict[str, float]
    high: dict[str, float]


class EstimateResponse(BaseModel):
    model: str
    method: str
    theta: dict[str, float]
    objective: float | None
    t_prepaid: int | None
    t_obs: int
    neighbors: list[int] | None
    ci: IntervalOut | None = None
    posterior: dict | None = None
    wall_time: float
    flags: list[str]


class SpaceOut(BaseModel):
    names: list[str]
    lower: list[float]
    upper: list[float]
    transforms: list[str]


class ModelOut(BaseModel):
    key: str
    model_id: str
    omega: int
    t_sim: int
    t_prepaid: list[int]
    m_samples: int
    failed_points: int
    space: SpaceOut
    schema_names: list[str]


class HealthOut(BaseModel):
    status: str
    models: list[str]
