"""Request/response models for the quantile-forest service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from ..forest import ForestConfig
from ..wnw import WnwConfig

ModelName = Literal["a", "b", "c", "d"]
ErrorName = Literal["normal", "laplace"]
MethodName = Literal["tsqrf", "wnw"]
BenchMethodName = Literal["tsqrf", "wnw", "oracle"]


class ForestParams(BaseModel):
    num_trees: int = Field(default=2000, ge=1)
    subsample_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    omega: float = Field(default=0.05, gt=0.0, le=0.2)
    min_leaf_k: int = Field(default=5, ge=1)
    mtry_mean: int | None = Field(default=None, ge=1)
    tau_levels: list[float] = Field(default=[0.1, 0.5, 0.9])
    seed: int = 0
    threads: int = Field(default=1, ge=1)

    def to_config(self) -> ForestConfig:
        return ForestConfig(
            num_trees=self.num_trees,
            subsample_fraction=self.subsample_fraction,
            omega=self.omega,
            min_leaf_k=self.min_leaf_k,
            mtry_mean=self.mtry_mean,
            tau_levels=tuple(self.tau_levels),
            seed=self.seed,
        )


class WnwParams(BaseModel):
    bandwidth: Literal["rule_of_thumb", "cv"] | list[float] = "rule_of_thumb"
    cv_taus: list[float] = Field(default=[0.1, 0.5, 0.9])

    def to_config(self) -> WnwConfig:
        bw = self.bandwidth if isinstance(self.bandwidth, str) else tuple(self.bandwidth)
        return WnwConfig(bandwidth=bw, cv_taus=tuple(self.cv_taus))


class SimulateRequest(BaseModel):
    model: ModelName
    error: ErrorName = "normal"
    length: int = Field(ge=1)
    burn_in: int = Field(default=200, ge=0)
    seed: int = 0
    taus: list[float] = Field(default=[])


class SimulateResponse(BaseModel):
    values: list[float]
    p: int
    first_t: int
    true_quantiles: dict[float, list[float]]


class FitRequest(BaseModel):
    series: list[float]
    p: int = Field(ge=1)
    method: MethodName = "tsqrf"
    log_returns: bool = False
    forest: ForestParams = ForestParams()
    wnw: WnwParams = WnwParams()


class FitResponse(BaseModel):
    model: dict


class PredictRequest(BaseModel):
    model: dict
    queries: list[list[float]]
    taus: list[float]


class PredictResponse(BaseModel):
    predictions: list[list[float]]


class ModelInfo(BaseModel):
    model_id: int
    method: str
    p: int
    n_train: int


class RegistryPredictRequest(BaseModel):
    queries: list[list[float]]
    taus: list[float]


class BenchRequest(BaseModel):
    models: list[ModelName] = Field(default=["a", "b", "c", "d"])
    errors: list[ErrorName] = Field(default=["normal", "laplace"])
    t_train: list[int] = Field(default=[1000])
    t_test: int = Field(default=500, ge=1)
    replicates: int = Field(default=20, ge=1)
    taus: list[float] = Field(default=[0.1, 0.5, 0.9])
    methods: list[BenchMethodName] = Field(default=["tsqrf", "wnw"])
    seed: int = 0
    burn_in: int = Field(default=200, ge=0)
    threads: int = Field(default=1, ge=1)
    forest: ForestParams = ForestParams(num_trees=200)
    wnw: WnwParams = WnwParams()


class BenchResponse(BaseModel):
    report_train: list[dict]
    report_test: list[dict]
    bias_samples: list[dict]


class CoverageRequest(BaseModel):
    values: list[float]
    prices: bool = False  # when set, apply the log-return transform first
    p: int = Field(default=2, ge=1)
    train_frac: float = Field(default=0.666, gt=0.0, lt=1.0)
    n_train: int | None = Field(default=None, ge=2)
    taus: list[float] = Field(default=[0.025, 0.1, 0.5, 0.9, 0.975])
    methods: list[MethodName] = Field(default=["tsqrf", "wnw"])
    forest: ForestParams = ForestParams(num_trees=200)
    wnw: WnwParams = WnwParams()


class CoverageResponse(BaseModel):
    rows: list[dict]
    n_train: int


class PlotBandsRequest(BaseModel):
    t: list[float]
    quantiles: dict[float, list[float]]
    series: list[float] | None = None
    title: str = ""


class PlotHistogramRequest(BaseModel):
    values: list[float]
    bins: int = Field(default=20, ge=1)
    title: str = ""


class PlotResponse(BaseModel):
    svg: str


class HealthResponse(BaseModel):
    status: str
    name: str
    version: str
