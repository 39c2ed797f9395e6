from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, model_validator


class PredictionKind(str, Enum):
    MEAN = "mean"
    VARIANCE_EXACT = "variance_exact"
    VARIANCE_ASYMPTOTIC = "variance_asymptotic"
    LIMIT_VARIANCE_D2 = "limit_variance_d2"
    STABLE_SCALE = "stable_scale"
    CLASS_II_CUMULANT = "class_ii_cumulant"


class Prediction(BaseModel):
    kind: PredictionKind
    value: float
    method: str
    tolerance: float = Field(0.0, ge=0)
    requested_tolerance: Optional[float] = Field(None, gt=0)
    r: Optional[float] = None
    order: Optional[int] = None

    @model_validator(mode="after")
    def _tolerance_met(self):
        if self.requested_tolerance is not None and self.tolerance > self.requested_tolerance:
            raise ValueError(
                f"{self.kind.value}: achieved tolerance {self.tolerance:.3g} "
                f"exceeds requested {self.requested_tolerance:.3g}"
            )
        return self
