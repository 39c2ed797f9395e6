"""
Replicated Monte Carlo runs of T_r(f): per-replicate streams, normalization
per regime, streaming cumulants and goodness of fit against the predicted limit.

Replicates are processed in fixed-size chunks folded in index order, so a run
is bit-identical for every thread count.
"""

import asyncio
import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from api.services import perturbations, theory_engine
from api.services.cumulant_engine import (
    PowerSums,
    cumulants_from_blocks,
    empirical_cumulants,
)
from api.services.lattice_sampler import (
    check_budget,
    sample_pair,
    sample_statistic,
    validate_truncation,
    with_resolved_truncation,
)
from api.services.rng import auxiliary_stream, replicate_stream
from core.config import settings
from schemas.experiment import (
    ClassIILimit,
    ExperimentConfig,
    ExperimentResult,
    GaussianLimit,
    ScanRow,
    StableLimit,
)
from schemas.prediction import PredictionKind
from schemas.sampling import SampleConfig

logger = logging.getLogger(__name__)

REPLICATE_CHUNK = 256
PROXY_DRAWS = 100_000
PROXIMITY_THRESHOLD = 0.1
# tabulated test functions carry callables, which have no JSON form
_CALLABLE_FIELDS = {"sample": {"function": {"func", "gradient", "hessian", "transform"}}}


# ── goodness of fit ───────────────────────────────────────────────────────────

def ks_distance(samples, mean: float = 0.0, variance: float = 1.0) -> float:
    """One-sample Kolmogorov–Smirnov statistic against N(mean, variance)."""
    if not variance > 0:
        raise ValueError(f"KS target needs a positive variance, got {variance}")
    x = np.asarray(samples, dtype=float).ravel()
    return float(stats.kstest(x, "norm", args=(mean, math.sqrt(variance))).statistic)


def ks_distance_binned(
    edges: np.ndarray, counts: np.ndarray, under: int, over: int, mean: float = 0.0, variance: float = 1.0
) -> float:
    """
    KS distance from a histogram: the sup over each bin of the largest gap the
    empirical CDF can have inside it, so never below the exact statistic.
    """
    if not variance > 0:
        raise ValueError(f"KS target needs a positive variance, got {variance}")
    n = under + over + int(np.sum(counts))
    cdf = stats.norm.cdf(edges, loc=mean, scale=math.sqrt(variance))
    ecdf = (under + np.concatenate([[0], np.cumsum(counts)])) / n
    inside = np.maximum(ecdf[1:] - cdf[:-1], cdf[1:] - ecdf[:-1])
    # outside the edges both CDFs lie in [0, max] on the left and [min, 1] on the right
    outer = max(ecdf[0], cdf[0], 1.0 - ecdf[-1], 1.0 - cdf[-1])
    return float(min(1.0, max(float(np.max(inside)), outer)))


def _ecf_sums(samples, grid) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    t = np.asarray(grid, dtype=float)
    return np.exp(2j * math.pi * np.outer(t, x)).sum(axis=1)


def ecf_sup_distance(samples, target_cf: Callable[[np.ndarray], np.ndarray], grid: Sequence[float]) -> float:
    """max_t |mean exp(2πi t X) - target_cf(t)| over the grid."""
    if len(grid) == 0:
        raise ValueError("ecf grid must be nonempty")
    x = np.asarray(samples, dtype=float).ravel()
    empirical = _ecf_sums(x, grid) / x.size
    return float(np.max(np.abs(empirical - target_cf(np.asarray(grid, dtype=float)))))


def target_cf(target) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    if isinstance(target, GaussianLimit):
        return theory_engine.gaussian_target_cf(target.variance)
    if isinstance(target, StableLimit):
        return theory_engine.stable_target_cf(target.alpha, target.scale)
    # the class-II law is known only through its cumulants
    return None


# ── streaming accumulation ────────────────────────────────────────────────────

class _Accumulator:
    """Folds normalized replicate chunks, in index order, into everything the result needs."""

    def __init__(self, replicates: int, blocks: int, grid: Sequence[float], cap: int, bins: int):
        self.replicates = replicates
        sizes = [len(b) for b in np.array_split(np.arange(replicates), blocks)]
        self.block_edges = np.concatenate([[0], np.cumsum(sizes)])
        self.grid = np.asarray(grid, dtype=float)
        self.ecf = np.zeros(len(grid), dtype=complex)
        self.histogram_mode = replicates > cap
        self.bins = bins
        self.samples: list[np.ndarray] = []
        self.block_sums: list[PowerSums] = []
        self.shift: Optional[float] = None
        self.edges: Optional[np.ndarray] = None
        self.counts = np.zeros(bins, dtype=np.int64)
        self.under = self.over = 0
        self.seen = 0

    def _init_from(self, chunk: np.ndarray) -> None:
        self.shift = float(np.median(chunk))
        self.block_sums = [PowerSums(self.shift) for _ in range(len(self.block_edges) - 1)]
        if self.histogram_mode:
            lo, hi = float(np.min(chunk)), float(np.max(chunk))
            width = max(hi - lo, 1e-12)
            self.edges = np.linspace(lo - width, hi + width, self.bins + 1)
            logger.warning(
                f"[RUN] {self.replicates} replicates exceed the sample cap; "
                f"histogram mode on [{self.edges[0]:.4g}, {self.edges[-1]:.4g}]"
            )

    def add(self, chunk: np.ndarray) -> None:
        if self.shift is None:
            self._init_from(chunk)
        start = self.seen
        stop = start + chunk.size
        for b in range(len(self.block_sums)):
            lo, hi = max(start, self.block_edges[b]), min(stop, self.block_edges[b + 1])
            if lo < hi:
                part = PowerSums.from_samples(chunk[lo - start:hi - start], self.shift)
                self.block_sums[b] = self.block_sums[b] + part
        self.ecf += _ecf_sums(chunk, self.grid)
        if self.histogram_mode:
            self.counts += np.histogram(chunk, bins=self.edges)[0]
            self.under += int(np.sum(chunk < self.edges[0]))
            self.over += int(np.sum(chunk > self.edges[-1]))
        else:
            self.samples.append(chunk)
        self.seen = stop

    def total(self) -> PowerSums:
        out = self.block_sums[0]
        for part in self.block_sums[1:]:
            out = out + part
        return out

    def all_samples(self) -> Optional[np.ndarray]:
        return None if self.histogram_mode else np.concatenate(self.samples)


# ── replicate scheduling ──────────────────────────────────────────────────────

def _chunks(replicates: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + REPLICATE_CHUNK, replicates)) for lo in range(0, replicates, REPLICATE_CHUNK)]


def _sample_range(sample: SampleConfig, seed: int, lo: int, hi: int) -> np.ndarray:
    return np.array([sample_statistic(sample, replicate_stream(seed, i)) for i in range(lo, hi)])


def _pair_range(sample: SampleConfig, seed: int, lo: int, hi: int) -> np.ndarray:
    return np.array([sample_pair(sample, replicate_stream(seed, i)) for i in range(lo, hi)])


async def _waves(worker, sample: SampleConfig, seed: int, replicates: int, threads: int):
    """Yield chunk results in index order, `threads` chunks at a time."""
    sample = with_resolved_truncation(sample)
    ranges = _chunks(replicates)
    for w in range(0, len(ranges), threads):
        wave = ranges[w:w + threads]
        results = await asyncio.gather(
            *(asyncio.to_thread(worker, sample, seed, lo, hi) for lo, hi in wave)
        )
        logger.debug(f"[SAMPLE] replicates {wave[0][0]}..{wave[-1][1] - 1} done")
        for chunk in results:
            yield chunk


async def sample_replicates_async(
    sample: SampleConfig, seed: int, replicates: int, threads: Optional[int] = None
) -> np.ndarray:
    """Raw T_r for replicates 0..replicates-1."""
    threads = threads or settings.THREADS
    out = [chunk async for chunk in _waves(_sample_range, sample, seed, replicates, threads)]
    return np.concatenate(out)


def sample_replicates(sample: SampleConfig, seed: int, replicates: int, threads: Optional[int] = None) -> np.ndarray:
    return asyncio.run(sample_replicates_async(sample, seed, replicates, threads))


# ── experiments ───────────────────────────────────────────────────────────────

def _normalization(cfg: ExperimentConfig, predictions) -> tuple[float, float]:
    sample = cfg.sample
    variance = next(
        (p.value for p in predictions if p.kind == PredictionKind.VARIANCE_EXACT), None
    )
    info = None
    if sample.perturbation.family != "point_mass":
        try:
            info = theory_engine.resolve_expansion(sample.perturbation, cfg.declared_expansion)
        except ValueError:
            info = None
    return theory_engine.normalizer(
        cfg.regime, info, sample.r, sample.dimension, sample.function, variance
    )


def _resolve_target(cfg: ExperimentConfig, derived: Optional[dict]):
    if cfg.gof.ecf_target is not None:
        return cfg.gof.ecf_target
    if derived is None:
        return None
    kind = derived["target"]
    if kind == "gaussian":
        return GaussianLimit(**derived)
    if kind == "stable":
        return StableLimit(**derived)
    return ClassIILimit(**derived)


async def run_experiment_async(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """Sample, normalize and test one experiment; deterministic given cfg.master_seed."""
    threads = threads or settings.THREADS
    sample = cfg.sample
    check_budget(sample)
    tail_bound = validate_truncation(sample)
    predictions, derived = theory_engine.regime_predictions(cfg)
    center, scale = _normalization(cfg, predictions)
    target = _resolve_target(cfg, derived)
    logger.info(
        f"[RUN] {cfg.name or cfg.regime.value}: {cfg.replicates} replicates, "
        f"center {center:.10g}, scale {scale:.6g}"
    )

    acc = _Accumulator(
        cfg.replicates, settings.JACKKNIFE_BLOCKS, cfg.gof.ecf_grid,
        settings.SAMPLE_CAP, settings.HISTOGRAM_BINS,
    )
    async for chunk in _waves(_sample_range, sample, cfg.master_seed, cfg.replicates, threads):
        acc.add(scale * (chunk - center))

    samples = acc.all_samples()
    if samples is not None:
        cumulants = empirical_cumulants(samples, cfg.max_order)
    else:
        needed = 10 * 2**cfg.max_order
        if cfg.replicates < needed:
            raise ValueError(f"insufficient samples: {cfg.replicates} < {needed} for order {cfg.max_order}")
        cumulants = cumulants_from_blocks(acc.block_sums, cfg.max_order)
    total = acc.total()
    n = total.n
    s1, s2 = total.sums[1], total.sums[2]
    mean = s1 / n + total.shift
    variance = (n * s2 - s1**2) / (n * (n - 1))

    ks = ecf = None
    if isinstance(target, GaussianLimit) and cfg.gof.ks_enabled:
        if samples is not None:
            ks = ks_distance(samples, 0.0, target.variance)
        else:
            ks = ks_distance_binned(acc.edges, acc.counts, acc.under, acc.over, 0.0, target.variance)
    cf = target_cf(target) if target is not None else None
    if cf is not None:
        ecf = float(np.max(np.abs(acc.ecf / n - cf(acc.grid))))
    if ks is not None or ecf is not None:
        logger.info(f"[GOF] {cfg.regime.label}: ks={ks}, ecf={ecf}")

    scan = None
    if cfg.scan_r:
        scan = await variance_scan_async(cfg, cfg.scan_r, threads)

    return ExperimentResult(
        name=cfg.name,
        config=cfg.model_dump(mode="json", exclude=_CALLABLE_FIELDS),
        count=n,
        mean=float(mean),
        variance=float(variance),
        center=center,
        scale=scale,
        cumulants=cumulants,
        predictions=predictions,
        ks_distance=ks,
        ecf_sup_distance=ecf,
        tail_bound=tail_bound,
        histogram_mode=acc.histogram_mode,
        variance_scan=scan,
        samples=samples,
    )


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    return asyncio.run(run_experiment_async(cfg, threads))


# ── diagnostics ───────────────────────────────────────────────────────────────

async def variance_scan_async(
    cfg: ExperimentConfig, r_list: Sequence[float], threads: Optional[int] = None
) -> list[ScanRow]:
    """
    Per r: empirical Var T_r with its jackknife error, the exact quadrature and
    the tail proxy r² P̂(|ξ| ≥ η r).
    """
    if any(b <= a for a, b in zip(r_list, r_list[1:])):
        raise ValueError("r_list must be strictly increasing")
    f = cfg.sample.function
    eta = theory_engine.tail_proxy_eta(f)
    draws = None
    if cfg.sample.perturbation.family != "point_mass":
        xi = perturbations.sample(cfg.sample.perturbation, PROXY_DRAWS, auxiliary_stream(cfg.master_seed, 0))
        draws = np.linalg.norm(xi, axis=1)
    rows = []
    for r in r_list:
        sample = cfg.sample.model_copy(update={"r": float(r)})
        check_budget(sample)
        raw = await sample_replicates_async(sample, cfg.master_seed, cfg.replicates, threads)
        if np.ptp(raw) == 0:
            empirical, error = 0.0, 0.0
        else:
            k2 = empirical_cumulants(raw, 2)[1]
            empirical, error = k2.value, k2.std_error
        exact = theory_engine.variance_exact(f, sample.perturbation, r)
        proxy = 0.0 if draws is None else float(r**2 * np.mean(draws >= eta * r))
        logger.info(f"[SCAN] r={r}: empirical {empirical:.6g} ± {error:.2g}, exact {exact:.6g}, proxy {proxy:.3g}")
        rows.append(ScanRow(r=r, empirical_variance=empirical, std_error=error, exact_variance=exact, tail_proxy=proxy))
    return rows


def variance_scan(cfg: ExperimentConfig, r_list: Sequence[float], threads: Optional[int] = None) -> list[ScanRow]:
    return asyncio.run(variance_scan_async(cfg, r_list, threads))


async def stationary_proximity_async(cfg: ExperimentConfig, threads: Optional[int] = None) -> tuple[float, float, float]:
    """
    (mean (T⁰ - T¹)², Var T⁰, z-score of the stationary mean against r^d ∫ f)
    from matched replicates.
    """
    threads = threads or settings.THREADS
    sample = cfg.sample
    check_budget(sample)
    chunks = [c async for c in _waves(_pair_range, sample, cfg.master_seed, cfg.replicates, threads)]
    pairs = np.concatenate(chunks)
    plain, shifted = pairs[:, 0], pairs[:, 1]
    gap = float(np.mean((plain - shifted) ** 2))
    var0 = float(np.var(plain, ddof=1))
    center = theory_engine.mean_prediction(sample.function, sample.r, sample.dimension)
    spread = float(np.std(shifted, ddof=1))
    z = 0.0 if spread == 0 else float((np.mean(shifted) - center) / (spread / math.sqrt(len(shifted))))
    logger.info(
        f"[RUN] stationary proximity: E(T⁰-T¹)²={gap:.4g}, Var T⁰={var0:.4g}, "
        f"ratio {gap / var0 if var0 else math.inf:.3g} (threshold {PROXIMITY_THRESHOLD}), z={z:.2f}"
    )
    return gap, var0, z


def stationary_proximity(cfg: ExperimentConfig, threads: Optional[int] = None) -> tuple[float, float, float]:
    return asyncio.run(stationary_proximity_async(cfg, threads))
