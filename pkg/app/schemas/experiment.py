from enum import Enum
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from schemas.cumulant import CumulantEstimate
from schemas.perturbation import ExpansionInfo
from schemas.prediction import Prediction
from schemas.sampling import SampleConfig


class Regime(str, Enum):
    """The six limit regimes, in the order of the classification theorem."""

    CLT_D3 = "clt_d3"
    CLT_D2_BOUNDED = "clt_d2_bounded"
    CLT_D2_SUBSEQUENCE = "clt_d2_subsequence"
    REGULAR_VARIATION = "regular_variation"
    CLASS_TWO = "class_two"
    STABLE = "stable"

    @property
    def item(self) -> int:
        return list(Regime).index(self) + 1

    @classmethod
    def from_item(cls, item: int) -> "Regime":
        if not 1 <= item <= 6:
            raise ValueError(f"regime item must be 1..6, got {item}")
        return list(cls)[item - 1]

    @property
    def label(self) -> str:
        return f"regime item {self.item} ({self.value})"


REGIME_CONDITIONS = {
    Regime.CLT_D3: "d ≥ 3",
    Regime.CLT_D2_BOUNDED: "d = 2 and E|ξ|² < ∞",
    Regime.CLT_D2_SUBSEQUENCE: "d = 2 and E|ξ|^ν = ∞ for some ν < 2",
    Regime.REGULAR_VARIATION: "d ≥ 2, or d = 1 with α < 1, or d = 1 with α = 1 and c = ∞",
    Regime.CLASS_TWO: "d = α = 1 and c ∈ (0,∞)",
    Regime.STABLE: "d = 1, 1 < α ≤ 2 and c ∈ (0,∞)",
}


def default_ecf_grid() -> list[float]:
    return [float(t) for t in np.geomspace(0.05, 3.0, 24)]


class GaussianLimit(BaseModel):
    target: Literal["gaussian"] = "gaussian"
    variance: float = Field(..., gt=0)


class StableLimit(BaseModel):
    target: Literal["stable"] = "stable"
    alpha: float = Field(..., gt=1, le=2)
    scale: float = Field(..., gt=0)


class ClassIILimit(BaseModel):
    target: Literal["class_ii"] = "class_ii"
    # κ₂, κ₃, … of the limit law
    cumulants: list[float] = Field(..., min_length=1)


LimitTarget = Annotated[
    Union[GaussianLimit, StableLimit, ClassIILimit],
    Field(discriminator="target"),
]


class GofConfig(BaseModel):
    ks_enabled: bool = True
    ecf_grid: list[float] = Field(default_factory=default_ecf_grid, min_length=1)
    # derived from the regime's prediction when absent
    ecf_target: Optional[LimitTarget] = None

    @field_validator("ecf_grid")
    @classmethod
    def _grid_positive(cls, grid: list[float]) -> list[float]:
        if any(t <= 0 for t in grid):
            raise ValueError("ecf_grid points must be strictly positive")
        return grid


class ExperimentConfig(BaseModel):
    name: Optional[str] = None
    sample: SampleConfig
    regime: Regime
    replicates: int = Field(..., ge=2)
    master_seed: int = Field(0, ge=0, lt=2**64)
    gof: GofConfig = GofConfig()
    max_order: int = Field(4, ge=1, le=6)
    # metadata for user laws whose 1 - φ carries a log-power factor
    declared_expansion: Optional[ExpansionInfo] = None
    # radii for the variance scan diagnostic
    scan_r: Optional[list[float]] = None

    @field_validator("regime", mode="before")
    @classmethod
    def _regime_from_item(cls, value):
        if isinstance(value, int) and not isinstance(value, bool):
            return Regime.from_item(value)
        return value

    @field_validator("scan_r")
    @classmethod
    def _scan_increasing(cls, radii):
        if radii is not None:
            if not radii or any(r <= 0 for r in radii):
                raise ValueError("scan_r must be a nonempty list of positive radii")
            if any(b <= a for a, b in zip(radii, radii[1:])):
                raise ValueError("scan_r must be strictly increasing")
        return radii

    @model_validator(mode="after")
    def _regime_matches_hypotheses(self):
        from api.services.theory_engine import check_regime

        check_regime(
            self.regime,
            self.sample.perturbation,
            self.sample.dimension,
            declared=self.declared_expansion,
        )
        if self.sample.function.f == "tabulated" and self.sample.function.null:
            raise ValueError("test function must be non-null")
        return self


class ScanRow(BaseModel):
    r: float
    empirical_variance: float
    std_error: float
    exact_variance: float
    tail_proxy: float


class ExperimentResult(BaseModel):
    name: Optional[str] = None
    config: dict
    count: int
    mean: float
    variance: float
    center: float
    scale: float
    cumulants: list[CumulantEstimate]
    predictions: list[Prediction]
    ks_distance: Optional[float] = Field(None, ge=0, le=1)
    ecf_sup_distance: Optional[float] = Field(None, ge=0)
    tail_bound: Optional[float] = None
    histogram_mode: bool = False
    variance_scan: Optional[list[ScanRow]] = None
    samples: Optional[Any] = Field(None, exclude=True)

    class Config:
        arbitrary_types_allowed = True
