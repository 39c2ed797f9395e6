"""
Evaluation of the acceptance and identities suites defined in config/acceptance.py.

Every check returns a SuiteCheck; Monte Carlo checks also return the
ExperimentResult they ran so the CLI can record it in the manifest.
"""

import logging
from typing import Optional

import numpy as np

from api.services import cumulant_engine, experiment_harness, lattice_sampler, test_functions, theory_engine
from api.services.rng import replicate_stream
from config.acceptance import ACCEPTANCE_SUITE, BELL_ORDERS, IDENTITY_CRITERIA
from schemas.experiment import ExperimentConfig, ExperimentResult
from schemas.manifest import SuiteCheck
from schemas.perturbation import PointMassSpec
from schemas.sampling import SampleConfig
from schemas.test_function import GaussianBump

logger = logging.getLogger(__name__)


def _experiment(entry: dict, seed: Optional[int]) -> ExperimentConfig:
    data = dict(entry["experiment"])
    if seed is not None:
        data["master_seed"] = seed
    return ExperimentConfig.model_validate(data)


def _report(check: SuiteCheck) -> SuiteCheck:
    level = logging.INFO if check.passed else logging.WARNING
    logger.log(level, f"[CLI] criterion {check.criterion} ({check.name}): {'pass' if check.passed else 'FAIL'}")
    return check


# ── exact and deterministic ───────────────────────────────────────────────────

def check_identities(entry: dict) -> SuiteCheck:
    sums = {m: cumulant_engine.cmb_identity_sums(m) for m in entry["orders"]}
    bell = {m: len(cumulant_engine.partitions(m)) == cumulant_engine.bell_number(m) for m in BELL_ORDERS}
    stirling = {m: cumulant_engine.stirling_bound_holds(m) for m in entry["orders"]}
    passed = all(s == (0, 0, 0) for s in sums.values()) and all(bell.values()) and all(stirling.values())
    return SuiteCheck(
        criterion=entry["criterion"], name=entry["name"], passed=passed,
        details={"identity_sums": {str(m): list(s) for m, s in sums.items()},
                 "bell_counts_match": all(bell.values()), "stirling_bound": all(stirling.values())},
    )


def check_class_two_constant(entry: dict) -> SuiteCheck:
    f = GaussianBump(a=1.0)
    closed = theory_engine.class2_limit_cumulant(f, entry["c"], entry["m"], method="closed_form")
    nested = theory_engine.class2_limit_cumulant(f, entry["c"], entry["m"], method="quadrature")
    expected = entry["c"] * entry["expected"]
    t = entry["thresholds"]
    passed = abs(closed - expected) < t["closed_form"] and abs(nested - expected) < t["quadrature"]
    return SuiteCheck(
        criterion=entry["criterion"], name=entry["name"], passed=passed,
        details={"closed_form": closed, "quadrature": nested, "expected": expected},
    )


def check_poisson(entry: dict) -> SuiteCheck:
    worst = 0.0
    for d in entry["dimensions"]:
        for r in entry["radii"]:
            cfg = SampleConfig(
                dimension=d, r=r, perturbation=PointMassSpec(dimension=d, value=[0.0] * d),
                function=GaussianBump(dimension=d),
            )
            value = lattice_sampler.sample_statistic(cfg, replicate_stream(0, 0))
            worst = max(worst, abs(value - theory_engine.mean_prediction(cfg.function, r, d)))
    return SuiteCheck(
        criterion=entry["criterion"], name=entry["name"], passed=worst < entry["thresholds"]["abs"],
        details={"max_abs_error": worst, "poisson_defects": poisson_defects()},
    )


def check_riemann(entry: dict) -> SuiteCheck:
    f = GaussianBump(a=1.0)
    riemann = theory_engine.riemann_lp_sum(f, entry["p"], entry["r"])
    exact = test_functions.lp_norm_of_deriv(f, entry["p"])
    rel = abs(riemann - exact) / exact
    return SuiteCheck(
        criterion=entry["criterion"], name=entry["name"], passed=rel < entry["thresholds"]["rel"],
        details={"riemann_sum": riemann, "integral": exact, "relative_error": rel},
    )


# ── Monte Carlo ───────────────────────────────────────────────────────────────

def check_variance(entry: dict, seed: Optional[int], threads: Optional[int]) -> SuiteCheck:
    t = entry["thresholds"]
    rows, passed = [], True
    for index, row in enumerate(entry["rows"]):
        cfg = SampleConfig.model_validate(row["sample"])
        raw = experiment_harness.sample_replicates(
            cfg, seed if seed is not None else 3 + index, entry["replicates"], threads
        )
        k2 = cumulant_engine.empirical_cumulants(raw, 2)[1]
        exact = theory_engine.variance_exact(cfg.function, cfg.perturbation, cfg.r)
        ok = abs(k2.value - exact) <= t["std_errors"] * k2.std_error
        detail = {"r": cfg.r, "empirical": k2.value, "std_error": k2.std_error, "exact": exact}
        if row.get("heavy"):
            asym = theory_engine.variance_asymptotic(cfg.function, cfg.perturbation, cfg.r)
            detail["asymptotic"] = asym
            ok = ok and abs(exact / asym - 1.0) < t["asymptotic_rel"]
        detail["passed"] = ok
        rows.append(detail)
        passed = passed and ok
    return SuiteCheck(criterion=entry["criterion"], name=entry["name"], passed=passed, details={"rows": rows})


def check_clt_d2(entry: dict, seed, threads) -> tuple[SuiteCheck, ExperimentResult]:
    result = experiment_harness.run_experiment(_experiment(entry, seed), threads)
    ks = result.ks_distance
    passed = ks is not None and ks < entry["thresholds"]["ks"]
    return SuiteCheck(criterion=entry["criterion"], name=entry["name"], passed=passed, details={"ks": ks}), result


def check_clt_d3(entry: dict, seed, threads) -> tuple[SuiteCheck, ExperimentResult]:
    cfg = _experiment(entry, seed)
    result = experiment_harness.run_experiment(cfg, threads)
    samples = result.samples
    standardized = (samples - np.mean(samples)) / np.std(samples, ddof=1)
    ks = experiment_harness.ks_distance(standardized)
    f, spec = cfg.sample.function, cfg.sample.perturbation
    radii = entry["doubling_radii"]
    variances = [theory_engine.variance_exact(f, spec, r) for r in radii]
    ratios = [b / a for a, b in zip(variances, variances[1:])]
    t = entry["thresholds"]
    passed = ks < t["ks"] and all(q >= t["doubling_ratio"] for q in ratios)
    return SuiteCheck(
        criterion=entry["criterion"], name=entry["name"], passed=passed,
        details={"ks_standardized": ks, "doubling_ratios": ratios},
    ), result


def check_stable(entry: dict, seed, threads) -> tuple[SuiteCheck, ExperimentResult]:
    result = experiment_harness.run_experiment(_experiment(entry, seed), threads)
    ecf = result.ecf_sup_distance
    passed = ecf is not None and ecf < entry["thresholds"]["ecf"]
    return SuiteCheck(criterion=entry["criterion"], name=entry["name"], passed=passed, details={"ecf": ecf}), result


def check_class_two(entry: dict, seed, threads) -> tuple[SuiteCheck, ExperimentResult]:
    cfg = _experiment(entry, seed)
    result = experiment_harness.run_experiment(cfg, threads)
    k = entry["thresholds"]["std_errors"]
    kappa2, kappa4 = result.cumulants[1], result.cumulants[3]
    c = theory_engine.resolve_expansion(cfg.sample.perturbation).c
    expected2 = theory_engine.class2_limit_cumulant(cfg.sample.function, c, 2)
    expected4 = c * entry["expected_kappa4"]
    ok2 = abs(kappa2.value - expected2) <= k * kappa2.std_error
    ok4 = kappa4.value > 0 and abs(kappa4.value - expected4) <= k * kappa4.std_error
    gaussian_rejected = kappa4.value > k * kappa4.std_error
    return SuiteCheck(
        criterion=entry["criterion"], name=entry["name"], passed=ok2 and ok4 and gaussian_rejected,
        details={
            "kappa2": kappa2.value, "kappa2_se": kappa2.std_error, "expected_kappa2": expected2,
            "kappa4": kappa4.value, "kappa4_se": kappa4.std_error, "expected_kappa4": expected4,
        },
    ), result


def check_stationary(entry: dict, seed, threads) -> SuiteCheck:
    cfg = _experiment(entry, seed)
    gap, var0, z = experiment_harness.stationary_proximity(cfg, threads)
    t = entry["thresholds"]
    passed = gap <= t["proximity"] * var0 and abs(z) <= t["z"]
    return SuiteCheck(
        criterion=entry["criterion"], name=entry["name"], passed=passed,
        details={"mean_squared_gap": gap, "variance_plain": var0, "stationary_mean_z": z},
    )


_DETERMINISTIC = {1: check_identities, 2: check_class_two_constant, 9: check_poisson, 10: check_riemann}
_MONTE_CARLO = {4: check_clt_d2, 5: check_clt_d3, 6: check_stable, 7: check_class_two}


def run_criterion(
    entry: dict, seed: Optional[int] = None, threads: Optional[int] = None
) -> tuple[SuiteCheck, Optional[ExperimentResult]]:
    criterion = entry["criterion"]
    if criterion in _DETERMINISTIC:
        return _report(_DETERMINISTIC[criterion](entry)), None
    if criterion == 3:
        return _report(check_variance(entry, seed, threads)), None
    if criterion == 8:
        return _report(check_stationary(entry, seed, threads)), None
    check, result = _MONTE_CARLO[criterion](entry, seed, threads)
    return _report(check), result


def suite_entries(suite: str) -> list[dict]:
    if suite == "acceptance":
        return list(ACCEPTANCE_SUITE)
    if suite == "identities":
        return [e for e in ACCEPTANCE_SUITE if e["criterion"] in IDENTITY_CRITERIA]
    raise ValueError(f"unknown suite '{suite}' (expected 'acceptance' or 'identities')")


def criterion_entry(criterion: int) -> dict:
    for entry in ACCEPTANCE_SUITE:
        if entry["criterion"] == criterion:
            return entry
    raise KeyError(f"no acceptance criterion {criterion}")


def poisson_defects(radii=(1.0, 2.0, 5.0), dimensions=(1, 2)) -> dict[str, float]:
    """|direct - dual| lattice sums for GaussianBump(1)."""
    out = {}
    for d in dimensions:
        f = GaussianBump(dimension=d)
        for r in radii:
            out[f"d={d},r={r:g}"] = theory_engine.poisson_defect(f, r, d)
    return out
