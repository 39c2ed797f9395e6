from typing import Any

from pydantic import BaseModel, Field

from schemas.experiment import ExperimentResult


class SuiteCheck(BaseModel):
    criterion: int
    name: str
    passed: bool
    details: dict[str, Any] = {}


class RunManifest(BaseModel):
    version: str
    config_digest: str = Field(..., pattern=r"^[0-9a-f]{64}$")
    seed: int
    duration_seconds: float = Field(..., ge=0)
    # False when the run was interrupted and the manifest holds partial results
    complete: bool = True
    experiments: list[ExperimentResult] = []
    checks: list[SuiteCheck] = []
