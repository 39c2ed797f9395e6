import math
from typing import Annotated, Literal, Union

from pydantic import AfterValidator, BaseModel, Field, model_validator


def _check_alpha(value: float) -> float:
    if value > 2:
        raise ValueError(
            f"alpha={value} > 2: a law with 1 - φ(x) = O(|x|^α), α > 2, "
            "is degenerate (X ≡ 0 a.s.)"
        )
    return value


Alpha = Annotated[float, Field(gt=0), AfterValidator(_check_alpha)]


class LFamily(BaseModel):
    """Slowly varying factor L(t): constant 1 or |log t|^p."""

    kind: Literal["const", "log_power"] = "const"
    p: float = 0.0

    class Config:
        frozen = True

    @model_validator(mode="after")
    def _const_has_no_power(self):
        if self.kind == "const" and self.p != 0.0:
            raise ValueError("const L family takes no power p")
        return self

    @property
    def diverges(self) -> bool:
        return self.kind == "log_power" and self.p > 0


class ExpansionInfo(BaseModel):
    alpha: Alpha
    c: float = Field(..., ge=0)
    c2: float = Field(..., ge=0)
    l_family: LFamily = LFamily()

    class Config:
        frozen = True


class _PerturbationBase(BaseModel):
    dimension: int = Field(1, ge=1)

    class Config:
        frozen = True


class GaussianSpec(_PerturbationBase):
    family: Literal["gaussian"] = "gaussian"
    sigma: float = Field(1.0, gt=0)


class UniformCubeSpec(_PerturbationBase):
    family: Literal["uniform_cube"] = "uniform_cube"
    half_width: float = Field(0.5, gt=0)


class LaplaceSpec(_PerturbationBase):
    family: Literal["laplace"] = "laplace"
    scale: float = Field(1.0, gt=0)


class CauchySpec(_PerturbationBase):
    family: Literal["cauchy"] = "cauchy"
    # 1/(2π) makes the expansion coefficient c = 1
    scale: float = Field(1.0 / (2.0 * math.pi), gt=0)


class SymStableSpec(_PerturbationBase):
    family: Literal["sym_stable"] = "sym_stable"
    alpha: Alpha
    gamma: float = Field(1.0, gt=0)


class IsotropicStableSpec(_PerturbationBase):
    family: Literal["isotropic_stable"] = "isotropic_stable"
    alpha: Alpha
    gamma: float = Field(1.0, gt=0)


class PointMassSpec(_PerturbationBase):
    family: Literal["point_mass"] = "point_mass"
    value: list[float] = Field(default_factory=lambda: [0.0])

    @model_validator(mode="before")
    @classmethod
    def _broadcast_scalar_value(cls, data):
        if isinstance(data, dict):
            value = data.get("value")
            dimension = data.get("dimension", 1)
            if isinstance(value, (int, float)):
                value = [float(value)]
            if value is None:
                value = [0.0]
            if len(value) == 1 and dimension > 1:
                value = list(value) * dimension
            data = {**data, "value": value}
        return data

    @model_validator(mode="after")
    def _value_matches_dimension(self):
        if len(self.value) != self.dimension:
            raise ValueError(
                f"point_mass value has {len(self.value)} coordinates, dimension is {self.dimension}"
            )
        return self


PerturbationSpec = Annotated[
    Union[
        GaussianSpec,
        UniformCubeSpec,
        LaplaceSpec,
        CauchySpec,
        SymStableSpec,
        IsotropicStableSpec,
        PointMassSpec,
    ],
    Field(discriminator="family"),
]

# Families whose coordinates are i.i.d. copies of a one-dimensional law
IID_FAMILIES = frozenset({"gaussian", "uniform_cube", "laplace", "cauchy", "sym_stable", "point_mass"})


def is_heavy_tailed(spec) -> bool:
    """True when E|ξ|² = ∞ (stable laws with α < 2)."""
    if spec.family == "cauchy":
        return True
    if spec.family in ("sym_stable", "isotropic_stable"):
        return spec.alpha < 2
    return False


def with_dimension(model, dimension: int):
    """Return `model` carrying `dimension` unless the caller set one explicitly."""
    if model.dimension == dimension or "dimension" in model.model_fields_set:
        return model
    update = {"dimension": dimension}
    if getattr(model, "family", None) == "point_mass" and len(model.value) == 1:
        update["value"] = model.value * dimension
    return model.model_copy(update=update)


class ShiftedPerturbation(BaseModel):
    """A non-centered law: centered spec plus a deterministic mean vector."""

    spec: PerturbationSpec
    mean: list[float]

    class Config:
        frozen = True

    @model_validator(mode="after")
    def _mean_matches_dimension(self):
        if len(self.mean) != self.spec.dimension:
            raise ValueError(
                f"mean has {len(self.mean)} coordinates, dimension is {self.spec.dimension}"
            )
        return self
