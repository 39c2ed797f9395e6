import math

import numpy as np
import pytest


@pytest.fixture
def stream():
    """Deterministic counter-based stream for direct sampler calls."""
    from api.services.rng import replicate_stream

    return replicate_stream(20240601, 0)


# ── Factory Fixtures ──────────────────────────────────────────────────────────


@pytest.fixture
def make_spec():
    """Factory for perturbation specs from a family name and parameters."""
    from pydantic import TypeAdapter

    from schemas.perturbation import PerturbationSpec

    adapter = TypeAdapter(PerturbationSpec)

    def _make(family="gaussian", dimension=1, **params):
        return adapter.validate_python({"family": family, "dimension": dimension, **params})

    return _make


@pytest.fixture
def make_function():
    """Factory for built-in test functions."""
    from schemas.test_function import GaussianBump, HermiteGaussian

    def _make(kind="gaussian_bump", dimension=1, **params):
        if kind == "gaussian_bump":
            return GaussianBump(dimension=dimension, **params)
        if kind == "hermite_gaussian":
            return HermiteGaussian(dimension=dimension, **params)
        raise ValueError(kind)

    return _make


@pytest.fixture
def make_sample_config():
    """Factory for SampleConfig with a Gaussian bump and Gaussian perturbations by default."""
    from schemas.sampling import SampleConfig

    def _make(dimension=1, r=10.0, perturbation=None, function=None, **kwargs):
        return SampleConfig.model_validate(
            {
                "dimension": dimension,
                "r": r,
                "perturbation": perturbation or {"family": "gaussian", "sigma": 1.0},
                "function": function or {"f": "gaussian_bump", "a": 1.0},
                **kwargs,
            }
        )

    return _make


@pytest.fixture
def make_experiment():
    """Factory for ExperimentConfig from JSON-shaped pieces."""
    from schemas.experiment import ExperimentConfig

    def _make(regime, sample, replicates=200, master_seed=7, **kwargs):
        return ExperimentConfig.model_validate(
            {"regime": regime, "sample": sample, "replicates": replicates, "master_seed": master_seed, **kwargs}
        )

    return _make


@pytest.fixture
def cauchy_unit():
    """Cauchy record with expansion coefficient c = 1."""
    return {"family": "cauchy", "scale": 1.0 / (2.0 * math.pi)}


@pytest.fixture
def standard_normal_draws():
    return np.random.Generator(np.random.Philox(12345)).standard_normal(200_000)
