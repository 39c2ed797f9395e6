"""
Acceptance and identities suite tables.

Each entry is plain JSON-shaped data; api/services/acceptance_suite.py turns it
into ExperimentConfig / SampleConfig objects and evaluates the checks.

Format:
    criterion: number of the acceptance criterion
    name: short label used in logs and the manifest
    experiment / sample: config records exactly as in an experiment file
    thresholds: the pass/fail constants of the criterion

Oracle values use the 2π Fourier convention:
    d = 2 limit variance for Gaussian(σ=1) and GaussianBump(1) is π;
    the d = α = 1 limit has κ₂ = c/π and κ₄ = c(2√3 - 3)/π.
"""

import math

GAUSSIAN_BUMP = {"f": "gaussian_bump", "a": 1.0}
STANDARD_GAUSSIAN = {"family": "gaussian", "sigma": 1.0}
UNIT_CAUCHY = {"family": "cauchy", "scale": 1.0 / (2.0 * math.pi)}
STABLE_1_5 = {"family": "sym_stable", "alpha": 1.5, "gamma": 1.0}
ORIGIN = {"family": "point_mass", "value": [0.0]}

KAPPA4_CLASS_TWO = (2.0 * math.sqrt(3.0) - 3.0) / math.pi
LIMIT_VARIANCE_D2 = math.pi

IDENTITY_ORDERS = list(range(3, 11))
BELL_ORDERS = list(range(1, 11))

ACCEPTANCE_SUITE: list[dict] = [
    # ── exact and deterministic ──────────────────────────────────────────────
    {
        "criterion": 1,
        "name": "partition identities",
        "orders": IDENTITY_ORDERS,
    },
    {
        "criterion": 2,
        "name": "class-II kappa4 constant",
        "c": 1.0,
        "m": 4,
        "expected": KAPPA4_CLASS_TWO,
        "thresholds": {"closed_form": 1e-6, "quadrature": 1e-4},
    },
    {
        "criterion": 9,
        "name": "poisson summation",
        "radii": [5.0, 10.0, 20.0],
        "dimensions": [1, 2],
        "thresholds": {"abs": 1e-8},
    },
    {
        "criterion": 10,
        "name": "riemann sum",
        "p": 1.5,
        "r": 100.0,
        "thresholds": {"rel": 0.01},
    },
    # ── Monte Carlo ──────────────────────────────────────────────────────────
    {
        "criterion": 3,
        "name": "variance vs monte carlo",
        "replicates": 10_000,
        "rows": [
            {"sample": {"dimension": 1, "r": 20.0, "perturbation": STANDARD_GAUSSIAN, "function": GAUSSIAN_BUMP}},
            {
                "sample": {
                    "dimension": 2, "r": 50.0, "perturbation": STANDARD_GAUSSIAN, "function": GAUSSIAN_BUMP,
                    "truncation": {"mode": "fixed_multiple", "K": 5.0},
                },
            },
            {"sample": {"dimension": 1, "r": 100.0, "perturbation": UNIT_CAUCHY, "function": GAUSSIAN_BUMP}, "heavy": True},
            {"sample": {"dimension": 1, "r": 100.0, "perturbation": STABLE_1_5, "function": GAUSSIAN_BUMP}, "heavy": True},
        ],
        "thresholds": {"std_errors": 3.0, "asymptotic_rel": 0.05},
    },
    {
        "criterion": 4,
        "name": "clt d=2 bounded",
        "experiment": {
            "name": "clt_d2_bounded",
            "regime": 2,
            "replicates": 10_000,
            "master_seed": 4,
            "sample": {
                "dimension": 2, "r": 50.0, "perturbation": STANDARD_GAUSSIAN, "function": GAUSSIAN_BUMP,
                "truncation": {"mode": "fixed_multiple", "K": 5.0},
            },
        },
        "thresholds": {"ks": 0.03},
    },
    {
        "criterion": 5,
        "name": "clt d=3",
        "experiment": {
            "name": "clt_d3",
            "regime": 1,
            "replicates": 4000,
            "master_seed": 5,
            "sample": {
                "dimension": 3, "r": 16.0, "perturbation": STANDARD_GAUSSIAN, "function": GAUSSIAN_BUMP,
                "truncation": {"mode": "fixed_multiple", "K": 4.5, "tail_tol": 1e-2},
            },
        },
        "doubling_radii": [8.0, 16.0, 32.0],
        "thresholds": {"ks": 0.04, "doubling_ratio": 1.9},
    },
    {
        "criterion": 6,
        "name": "stable alpha=1.5",
        "experiment": {
            "name": "stable_1_5",
            "regime": 6,
            "replicates": 10_000,
            "master_seed": 6,
            "sample": {"dimension": 1, "r": 200.0, "perturbation": STABLE_1_5, "function": GAUSSIAN_BUMP},
        },
        "thresholds": {"ecf": 0.05},
    },
    {
        "criterion": 7,
        "name": "class-II witness",
        "experiment": {
            "name": "class_two",
            "regime": 5,
            "replicates": 100_000,
            "master_seed": 7,
            "max_order": 4,
            "sample": {"dimension": 1, "r": 200.0, "perturbation": UNIT_CAUCHY, "function": GAUSSIAN_BUMP},
        },
        "expected_kappa4": KAPPA4_CLASS_TWO,
        "thresholds": {"std_errors": 3.0},
    },
    {
        "criterion": 8,
        "name": "stationary reduction",
        "experiment": {
            "name": "stationary",
            "regime": 2,
            "replicates": 2000,
            "master_seed": 8,
            "sample": {
                "dimension": 2, "r": 50.0, "perturbation": STANDARD_GAUSSIAN, "function": GAUSSIAN_BUMP,
                "truncation": {"mode": "fixed_multiple", "K": 5.0},
            },
        },
        "thresholds": {"proximity": 0.1, "z": 3.0},
    },
]

# criteria that need no Monte Carlo
IDENTITY_CRITERIA = frozenset({1, 2, 9, 10})
