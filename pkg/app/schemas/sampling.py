from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

from core.config import settings
from schemas.perturbation import PerturbationSpec, with_dimension
from schemas.test_function import TestFunction


class TruncationPolicy(BaseModel):
    """
    Sup-norm window |x|_∞ ≤ R around the origin.

    fixed_multiple: R = K·r.  power_law: R = K·r^gamma (gamma > 1).
    """

    mode: Literal["fixed_multiple", "power_law"] = "fixed_multiple"
    K: float = Field(8.0, gt=0)
    gamma: Optional[float] = Field(None, gt=1)
    tail_tol: float = Field(default_factory=lambda: settings.TAIL_TOL, gt=0)
    # heavy-tailed d ≥ 2 windows cannot meet tail_tol; run anyway and report the bias
    enforce_tail: bool = True

    class Config:
        frozen = True

    @model_validator(mode="after")
    def _power_law_needs_gamma(self):
        if self.mode == "power_law" and self.gamma is None:
            raise ValueError("power_law truncation requires gamma > 1")
        if self.mode == "fixed_multiple" and self.gamma is not None:
            raise ValueError("fixed_multiple truncation takes no gamma")
        return self

    def radius(self, r: float) -> float:
        if self.mode == "power_law":
            return self.K * r ** self.gamma
        return self.K * r


class SampleConfig(BaseModel):
    dimension: int = Field(1, ge=1)
    r: float = Field(..., gt=0)
    perturbation: PerturbationSpec
    function: TestFunction
    stationary: bool = False
    truncation: Optional[TruncationPolicy] = None
    # deterministic mean of a non-centered law, added to every point
    shift: Optional[list[float]] = None

    class Config:
        frozen = True

    @model_validator(mode="before")
    @classmethod
    def _inject_dimension(cls, data):
        if not isinstance(data, dict):
            return data
        dimension = data.get("dimension", 1)
        data = dict(data)
        for key in ("perturbation", "function"):
            nested = data.get(key)
            if isinstance(nested, dict) and "dimension" not in nested:
                data[key] = {**nested, "dimension": dimension}
            elif isinstance(nested, BaseModel):
                data[key] = with_dimension(nested, dimension)
        return data

    @model_validator(mode="after")
    def _dimensions_agree(self):
        d = self.dimension
        if self.perturbation.dimension != d:
            raise ValueError(
                f"perturbation dimension {self.perturbation.dimension} != sample dimension {d}"
            )
        if self.function.dimension != d:
            raise ValueError(
                f"test function dimension {self.function.dimension} != sample dimension {d}"
            )
        if self.perturbation.family == "isotropic_stable" and d < 2:
            raise ValueError("isotropic_stable requires dimension ≥ 2 (use sym_stable in d = 1)")
        if self.shift is not None and len(self.shift) != d:
            raise ValueError(f"shift has {len(self.shift)} coordinates, dimension is {d}")
        return self
