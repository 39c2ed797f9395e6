"""
One realization of the perturbed lattice {x + ξ_x [+ U]} restricted to a
sup-norm window |x|_∞ ≤ R, and the statistic T_r(f) = Σ f((x + ξ_x [+ U]) / r).

Perturbations are drawn only inside the window, shell by shell in |x|_∞, so a
larger window extends a realization instead of replacing it; what the window
leaves out is bounded by estimate_tail.
"""

import logging
import math
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import special

from api.services import perturbations, test_functions
from api.services.quadrature import integrate_real_line
from core.config import settings
from schemas.perturbation import is_heavy_tailed
from schemas.sampling import SampleConfig, TruncationPolicy

logger = logging.getLogger(__name__)

SHELL_BATCH_SITES = 1024
SHELL_CACHE_SITES = 16384
HEAVY_TAIL_K_1D = 2.0
HEAVY_TAIL_K_ND = 32.0
MAX_DEFAULT_GAMMA = 1.5
# K tried, in order, for d ≥ 3 light-tailed default windows
LIGHT_TAIL_K_LADDER = tuple(2.0 + 0.25 * i for i in range(25))

# per-site tail bounds: split |ξ| ≤ θ|x| against |ξ| > θ|x|
_SPLITS = np.linspace(0.02, 0.5, 25)
_BLOCK_RATIO = 1.05
_EXACT_SITES = 4096
_TABLE = np.concatenate([[0.0], np.geomspace(1e-3, 1e13, 760)])


class PointBudgetError(ValueError):
    def __init__(self, requirement: int, budget: int):
        super().__init__(f"window needs {requirement} sites per replicate, budget is {budget}")
        self.requirement = requirement
        self.budget = budget


class TailToleranceError(ValueError):
    def __init__(self, bound: float, tolerance: float):
        super().__init__(f"estimated truncation tail {bound:.3g} exceeds tail_tol {tolerance:.3g}")
        self.bound = bound
        self.tolerance = tolerance


# ── truncation policy ─────────────────────────────────────────────────────────

def choose_gamma(alpha: float) -> tuple[float, float, float]:
    """
    (gamma, p, beta) with 1 + 1/p < α, γ + (α-1)/α < 1 + 1/p, 1 < β < α and
    (α-1)/α < γ(β-1); ε, γ and β are midpoints of their admissible intervals.
    """
    if not 1 < alpha <= 2:
        raise ValueError(f"choose_gamma requires 1 < α ≤ 2, got α={alpha}")
    eps = (1.0 / alpha + 1.0) / 2.0
    p = 1.0 / (eps * (alpha - 1.0))
    gamma = (1.0 + 1.0 / alpha + eps * (alpha - 1.0)) / 2.0
    beta = (1.0 + (alpha - 1.0) / (alpha * gamma) + alpha) / 2.0
    return gamma, p, beta


def default_truncation(spec, d: int) -> TruncationPolicy:
    if not is_heavy_tailed(spec):
        return TruncationPolicy(mode="fixed_multiple", K=8.0)
    if d >= 2:
        return TruncationPolicy(mode="fixed_multiple", K=HEAVY_TAIL_K_ND, enforce_tail=False)
    alpha = perturbations._stable_exponent(spec)
    gamma = min(choose_gamma(alpha)[0], MAX_DEFAULT_GAMMA) if alpha > 1 else MAX_DEFAULT_GAMMA
    # the remainder decays only polynomially in r; the bound is reported, not enforced
    return TruncationPolicy(mode="power_law", K=HEAVY_TAIL_K_1D, gamma=gamma, enforce_tail=False)


def resolve_truncation(cfg: SampleConfig) -> TruncationPolicy:
    if cfg.truncation is not None:
        return cfg.truncation
    policy = default_truncation(cfg.perturbation, cfg.dimension)
    if cfg.dimension >= 3 and not is_heavy_tailed(cfg.perturbation):
        policy = _shortest_light_tail_window(cfg, policy)
    return policy


def _shortest_light_tail_window(cfg: SampleConfig, policy: TruncationPolicy) -> TruncationPolicy:
    """
    Smallest K on LIGHT_TAIL_K_LADDER whose tail bound meets tail_tol, among
    the windows that fit the point budget; the widest fitting one otherwise.
    """
    fitting = []
    for K in LIGHT_TAIL_K_LADDER:
        candidate = policy.model_copy(update={"K": K})
        radius = int(math.floor(candidate.radius(cfg.r)))
        if (2 * radius + 1) ** cfg.dimension > settings.POINT_BUDGET:
            break
        fitting.append(candidate)
        if estimate_tail(cfg.model_copy(update={"truncation": candidate})) <= candidate.tail_tol:
            logger.debug(f"[TAIL] d={cfg.dimension} r={cfg.r}: default window K={K}")
            return candidate
    return fitting[-1] if fitting else policy


def with_resolved_truncation(cfg: SampleConfig) -> SampleConfig:
    """cfg with its window fixed, so per-replicate calls skip the resolution."""
    if cfg.truncation is not None:
        return cfg
    return cfg.model_copy(update={"truncation": resolve_truncation(cfg)})


def window_radius(cfg: SampleConfig, policy: Optional[TruncationPolicy] = None) -> int:
    policy = policy or resolve_truncation(cfg)
    return int(math.floor(policy.radius(cfg.r)))


def point_requirement(cfg: SampleConfig) -> int:
    return (2 * window_radius(cfg) + 1) ** cfg.dimension


def check_budget(cfg: SampleConfig, budget: Optional[int] = None) -> int:
    budget = settings.POINT_BUDGET if budget is None else budget
    requirement = point_requirement(cfg)
    if requirement > budget:
        raise PointBudgetError(requirement, budget)
    return requirement


# ── windows ───────────────────────────────────────────────────────────────────

@lru_cache(maxsize=8)
def window_sites(d: int, radius: int) -> np.ndarray:
    """All x ∈ Z^d with |x|_∞ ≤ radius, lexicographic, shape (N, d); read-only."""
    axis = np.arange(-radius, radius + 1, dtype=float)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    sites = np.stack([g.ravel() for g in grids], axis=-1)
    sites.flags.writeable = False
    return sites


def _cube(d: int, k: int) -> int:
    """Number of sites with |x|_∞ ≤ k (0 for k < 0)."""
    return (2 * k + 1) ** d if k >= 0 else 0


@lru_cache(maxsize=64)
def shell_batches(d: int, radius: int) -> tuple[tuple[int, int], ...]:
    """
    Shell ranges (first, last) covering |x|_∞ ≤ radius, in order.

    Each range is the shortest run of shells holding SHELL_BATCH_SITES sites,
    so the boundaries depend on d alone; the last range may reach past radius.
    """
    batches = []
    first = 0
    while first <= radius:
        last = first
        while _cube(d, last) - _cube(d, first - 1) < SHELL_BATCH_SITES:
            last += 1
        batches.append((first, last))
        first = last + 1
    return tuple(batches)


def _build_shell_sites(d: int, first: int, last: int) -> np.ndarray:
    if first == 0:
        full = np.arange(-last, last + 1, dtype=float)
        grids = np.meshgrid(*([full] * d), indexing="ij")
        sites = np.stack([g.ravel() for g in grids], axis=-1)
    else:
        # split by the first axis reaching |x_j| ≥ first
        inner = np.arange(-(first - 1), first, dtype=float)
        outer = np.concatenate([np.arange(-last, -first + 1), np.arange(first, last + 1)]).astype(float)
        full = np.arange(-last, last + 1, dtype=float)
        parts = []
        for j in range(d):
            grids = np.meshgrid(*([inner] * j + [outer] + [full] * (d - j - 1)), indexing="ij")
            parts.append(np.stack([g.ravel() for g in grids], axis=-1))
        sites = np.concatenate(parts)
    if last > first:
        sites = sites[np.argsort(np.max(np.abs(sites), axis=1), kind="stable")]
    sites.flags.writeable = False
    return sites


_cached_shell_sites = lru_cache(maxsize=256)(_build_shell_sites)


def shell_sites(d: int, first: int, last: int) -> np.ndarray:
    """Sites with first ≤ |x|_∞ ≤ last ordered by |x|_∞, shape (N, d); read-only."""
    if _cube(d, last) - _cube(d, first - 1) <= SHELL_CACHE_SITES:
        return _cached_shell_sites(d, first, last)
    return _build_shell_sites(d, first, last)


def _window_draws(cfg: SampleConfig, radius: int, stream: np.random.Generator):
    """
    (sites, ξ, shell offsets) per shell batch inside |x|_∞ ≤ radius.

    ξ is drawn for whole batches in shell order, so every site keeps its draw
    when the window grows; draws past the radius are discarded.
    """
    for first, last in shell_batches(cfg.dimension, radius):
        sites = shell_sites(cfg.dimension, first, last)
        xi = perturbations.sample(cfg.perturbation, len(sites), stream)
        top = min(last, radius)
        base = _cube(cfg.dimension, first - 1)
        keep = _cube(cfg.dimension, top) - base
        shells = np.arange(first, top + 1)
        offsets = np.where(shells > 0, (2 * shells - 1) ** cfg.dimension, 0) - base
        yield sites[:keep], xi[:keep], offsets


def perturbed_terms(sites: np.ndarray, xi: np.ndarray, shift, r: float, f) -> np.ndarray:
    """f((sites + xi + shift) / r), one term per site."""
    return np.asarray(test_functions.evaluate(f, (sites + xi + shift) / r), dtype=float)


def perturbed_sum(sites: np.ndarray, xi: np.ndarray, shift, r: float, f) -> float:
    """Σ f((sites + xi + shift) / r)."""
    return float(np.sum(perturbed_terms(sites, xi, shift, r, f)))


def _add_shells(total: float, terms: np.ndarray, offsets: np.ndarray) -> float:
    # shell by shell, left to right: a larger window only appends terms
    shell_sums = np.add.reduceat(terms, offsets)
    return float(np.cumsum(np.concatenate(([total], shell_sums)))[-1])


def _base_shift(cfg: SampleConfig) -> np.ndarray:
    if cfg.shift is None:
        return np.zeros(cfg.dimension)
    return np.asarray(cfg.shift, dtype=float)


def _prepare(cfg: SampleConfig) -> int:
    radius = window_radius(cfg)
    check_budget(cfg)
    return radius


def sample_statistic(cfg: SampleConfig, stream: np.random.Generator) -> float:
    """
    T_r over the window for one realization.

    The stationary shift U is drawn first, then ξ shell by shell outward from
    the origin. Callers validate the truncation once with validate_truncation.
    """
    if test_functions.is_null(cfg.function):
        return 0.0
    radius = _prepare(cfg)
    shift = _base_shift(cfg)
    if cfg.stationary:
        shift = shift + stream.uniform(-0.5, 0.5, cfg.dimension)
    total = 0.0
    for sites, xi, offsets in _window_draws(cfg, radius, stream):
        total = _add_shells(total, perturbed_terms(sites, xi, shift, cfg.r, cfg.function), offsets)
    return total


def sample_pair(cfg: SampleConfig, stream: np.random.Generator) -> tuple[float, float]:
    """(T⁰, T¹) from the same ξ; T¹ adds one uniform shift U, drawn first."""
    if test_functions.is_null(cfg.function):
        return 0.0, 0.0
    radius = _prepare(cfg)
    base = _base_shift(cfg)
    u = stream.uniform(-0.5, 0.5, cfg.dimension)
    plain = stationary = 0.0
    for sites, xi, offsets in _window_draws(cfg, radius, stream):
        plain = _add_shells(plain, perturbed_terms(sites, xi, base, cfg.r, cfg.function), offsets)
        stationary = _add_shells(stationary, perturbed_terms(sites, xi, base + u, cfg.r, cfg.function), offsets)
    return plain, stationary


# ── tail bounds ───────────────────────────────────────────────────────────────

def _tail_exponent(spec) -> float:
    """Fractional moment order β < α for the Markov term."""
    alpha = perturbations._stable_exponent(spec)
    if alpha > 1:
        return choose_gamma(alpha)[2]
    return alpha / 2.0


@lru_cache(maxsize=32)
def _marginal_tables(spec) -> tuple[np.ndarray, np.ndarray]:
    """P(|ξ₁| > t) and sup_{|z|≥t} p₁(z) on the fixed grid _TABLE."""
    survival = np.asarray(perturbations.marginal_survival(spec, _TABLE), dtype=float)
    density = np.asarray(perturbations.marginal_density_sup(spec, _TABLE), dtype=float)
    return survival, density


def _floor_lookup(table: np.ndarray, t: np.ndarray) -> np.ndarray:
    # monotone nonincreasing table: evaluate at the grid point just below t
    idx = np.searchsorted(_TABLE, t, side="right") - 1
    return table[np.clip(idx, 0, len(_TABLE) - 1)]


def _site_bound(spec, axis_env, r: float, slack: float):
    """x ↦ upper bound on E g((x + s + ξ₁)/r) for |s| ≤ slack, nonincreasing in |x|."""
    g_sup, g_l1, g_tail = axis_env
    survival, density = _marginal_tables(spec)
    beta = _tail_exponent(spec) if is_heavy_tailed(spec) else None
    markov = (
        g_sup * 2.0**beta * perturbations.moment_abs_exact(spec, beta)
        if beta is not None else math.inf
    )

    def bound(x: np.ndarray) -> np.ndarray:
        x = np.maximum(np.abs(np.asarray(x, dtype=float)) - slack, 0.0)
        near = x[None, :] * (1.0 - _SPLITS[:, None])
        far = x[None, :] * _SPLITS[:, None]
        with np.errstate(divide="ignore"):
            jump = np.minimum(
                g_sup * _floor_lookup(survival, far),
                r * g_l1 * _floor_lookup(density, far),
            )
            if beta is not None:
                jump = np.minimum(jump, np.where(far > 0, markov * far ** (-beta), np.inf))
        best = np.min(g_tail(near / r) + jump, axis=0)
        return np.minimum(best, g_sup)

    return bound


def _point_mass_bound(axis_env, r: float, slack: float):
    _, _, g_tail = axis_env
    return lambda x: g_tail(np.maximum(np.abs(np.asarray(x, dtype=float)) - slack, 0.0) / r)


def _half_line_sum(bound, start: int) -> float:
    """
    Upper bound on Σ_{x ≥ start} bound(x): the first _EXACT_SITES terms one by
    one, then monotone blocks of ratio 1.05, geometrically extrapolated.
    """
    edges = list(range(max(start, 0), max(start, 0) + _EXACT_SITES + 1))
    while edges[-1] < 1e13:
        edges.append(max(edges[-1] + 1, int(math.ceil(edges[-1] * _BLOCK_RATIO))))
    edges = np.array(edges, dtype=float)
    heads = bound(edges[:-1])
    blocks = heads * np.diff(edges)
    if not np.all(np.isfinite(blocks)):
        return math.inf
    total = float(np.sum(blocks))
    last, prev = blocks[-1], blocks[-2]
    if last == 0:
        return total
    ratio = last / prev if prev > 0 else math.inf
    if ratio >= 1:
        return math.inf
    return total + float(last * ratio / (1.0 - ratio))


def _axis_sums(bound, radius: int) -> tuple[float, float]:
    """(Σ_{|x|≤R} bound, Σ_{|x|>R} bound) over Z."""
    inside_x = np.arange(-radius, radius + 1, dtype=float)
    inside = float(np.sum(bound(inside_x)))
    outside = 2.0 * _half_line_sum(bound, radius + 1)
    return inside, outside


def estimate_tail(cfg: SampleConfig) -> float:
    """
    Upper bound on E|Σ_{x outside the window} f((x + ξ_x [+ U]) / r)|.

    Built-in f only: |f| ≤ ∏ g_i with even envelopes, so the tail is
    ∏ A_i - ∏ I_i with A_i, I_i the full and in-window sums of the
    per-coordinate bounds. INFINITE when no bound is available.
    """
    spec, f, r, d = cfg.perturbation, cfg.function, cfg.r, cfg.dimension
    if test_functions.is_null(f):
        return 0.0
    if f.f == "tabulated":
        logger.warning("[TAIL] no envelope for tabulated test functions; tail bound is infinite")
        return math.inf
    if spec.family == "isotropic_stable":
        logger.warning("[TAIL] isotropic_stable has no product envelope; tail bound is infinite")
        return math.inf

    radius = window_radius(cfg)
    env = test_functions.envelope(f)
    base = _base_shift(cfg)
    inside, outside = [], []
    for i in range(d):
        slack = abs(base[i]) + (0.5 if cfg.stationary else 0.0)
        if spec.family == "point_mass":
            slack += abs(spec.value[i])
            bound = _point_mass_bound(env.axis(i), r, slack)
        else:
            bound = _site_bound(spec, env.axis(i), r, slack)
        a, b = _axis_sums(bound, radius)
        inside.append(a)
        outside.append(b)

    total = 0.0
    for j in range(d):
        if outside[j] == 0:
            continue
        full_after = math.prod(inside[i] + outside[i] for i in range(j + 1, d))
        total += math.prod(inside[:j]) * outside[j] * full_after
    logger.debug(f"[TAIL] {spec.family} d={d} r={r} R={radius}: bound {total:.3g}")
    return total


def validate_truncation(cfg: SampleConfig) -> float:
    """estimate_tail(cfg), raising TailToleranceError when an enforced policy misses tail_tol."""
    policy = resolve_truncation(cfg)
    bound = estimate_tail(cfg)
    if bound > policy.tail_tol:
        if policy.enforce_tail:
            raise TailToleranceError(bound, policy.tail_tol)
        logger.warning(
            f"[TAIL] {cfg.perturbation.family} window R={window_radius(cfg, policy)}: "
            f"tail bound {bound:.3g} above tail_tol {policy.tail_tol:.3g}, reported as bias"
        )
    return bound


# ── explicit remainder constants (d = 1 heavy tails) ──────────────────────────

def _weighted_sup(f, k: float) -> float:
    """sup_y |y^k f(y)| for built-in f in d = 1."""
    if f.f == "gaussian_bump":
        return (k / (2.0 * f.a)) ** (k / 2.0) * math.exp(-k / 2.0)
    if f.f == "hermite_gaussian":
        m = k + f.k
        return (m / 2.0) ** (m / 2.0) * math.exp(-m / 2.0)
    raise ValueError("explicit remainder constants need a built-in test function")


def _power_tail(s: float, n: float) -> float:
    """Σ_{x ∈ Z, |x| > n} |x|^{-s}."""
    return 2.0 * float(special.zeta(s, math.floor(n) + 1.0))


def remainder_bound(f, spec, r: float, gamma: float, beta: float) -> float:
    """
    r^{(α-1)/α} Σ_{|x|>r^γ} [sup|y^k f(y)| 2^k r^k |x|^{-k} + ‖f‖∞ 2^β E|ξ|^β |x|^{-β}],
    k = γβ/(γ-1), with both lattice sums evaluated exactly.
    """
    if f.dimension != 1:
        raise ValueError("remainder_bound is defined for d = 1")
    if not gamma > 1:
        raise ValueError(f"gamma must be > 1, got {gamma}")
    if not beta > 1:
        raise ValueError(f"beta must be > 1 for a summable Markov term, got {beta}")
    alpha = perturbations.expansion(spec).alpha
    moment = perturbations.moment_abs_exact(spec, beta)
    if math.isinf(moment):
        return math.inf
    k = gamma * beta / (gamma - 1.0)
    cutoff = r**gamma
    decay = _weighted_sup(f, k) * 2.0**k * r**k * _power_tail(k, cutoff)
    markov = test_functions.sup_norm(f) * 2.0**beta * moment * _power_tail(beta, cutoff)
    return r ** ((alpha - 1.0) / alpha) * (decay + markov)


def main_term_bound(f, spec, r: float, gamma: float, p: float, t: float) -> float:
    """
    C r^{γ+(α-1)/α} / r^{1+1/p} with C = |t| E|ξ|^{1+1/p} (p+1)^{-1/p} ‖f''‖_{p/(p-1)}.
    """
    if f.dimension != 1:
        raise ValueError("main_term_bound is defined for d = 1")
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    alpha = perturbations.expansion(spec).alpha
    q = p / (p - 1.0)
    moment = perturbations.moment_abs_exact(spec, 1.0 + 1.0 / p)
    if math.isinf(moment):
        return math.inf
    norm = integrate_real_line(lambda x: float(abs(test_functions.deriv2(f, x)) ** q), 1e-10).value ** (1.0 / q)
    const = abs(t) * moment * (p + 1.0) ** (-1.0 / p) * norm
    return const * r ** (gamma + (alpha - 1.0) / alpha) / r ** (1.0 + 1.0 / p)
