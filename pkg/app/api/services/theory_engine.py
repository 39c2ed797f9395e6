"""
Theoretical predictions for T_r(f): mean, exact variance
Var T_r = r^d ∫ |F[f](x)|² (1 - |φ(x/r)|²) dx, its regular-variation
asymptotics, the d = 2 limit variance, the stable scale, and the limiting
cumulants of the d = α = 1 regime. Also the regime/hypothesis table.
"""

import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.optimize import brentq

from api.services import perturbations, test_functions
from api.services.cumulant_engine import block_size_profile, partition_weight
from api.services.lattice_sampler import window_sites
from api.services.quadrature import (
    QuadResult,
    integrate_half_line,
    integrate_nd,
    integrate_real_line,
)
from schemas.experiment import REGIME_CONDITIONS, Regime
from schemas.perturbation import IID_FAMILIES, ExpansionInfo, is_heavy_tailed
from schemas.prediction import Prediction, PredictionKind

logger = logging.getLogger(__name__)

CLASS2_MAX_ORDER = 6
CLASS2_BOX = 6.0
CLASS2_TOL = 1e-6


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)


def _separable(f) -> bool:
    return f.f in ("gaussian_bump", "hermite_gaussian")


def _axis_transform(f, axis: int) -> Callable[[float], complex]:
    """1-D factor F_axis of a separable F[f] = ∏ F_axis(k_axis)."""
    if f.f == "gaussian_bump":
        return lambda x: test_functions._hermite_fourier(0, f.a, x)
    if axis == 0:
        return lambda x: test_functions._hermite_fourier(f.k, 1.0, x)
    return lambda x: test_functions._hermite_fourier(0, 1.0, x)


def _axis_energy(f, axis: int) -> float:
    """∫ |F_axis|² = ∫ f_axis² (Plancherel), closed form."""
    if f.f == "gaussian_bump":
        return math.sqrt(math.pi / (2.0 * f.a))
    if axis == 0:
        return special.gamma(f.k + 0.5) * 2.0 ** (-(f.k + 0.5))
    return math.sqrt(math.pi / 2.0)


def _fourier_width(f) -> float:
    return math.sqrt(f.a) if f.f == "gaussian_bump" else 1.0


def _dimension(f, d: Optional[int]) -> int:
    if d is not None and d != f.dimension:
        raise ValueError(f"dimension {d} does not match test function dimension {f.dimension}")
    return f.dimension


# ── mean and exact variance ───────────────────────────────────────────────────

def mean_prediction(f, r: float, d: Optional[int] = None) -> float:
    """E T_r = r^d ∫ f (exact for the stationary lattice)."""
    d = _dimension(f, d)
    return r**d * test_functions.integral(f)


def _variance_integral(f, spec, r: float, tol: float) -> QuadResult:
    """∫ |F[f](x)|² (1 - |φ(x/r)|²) dx."""
    d = f.dimension
    if spec.family == "point_mass":
        return QuadResult(0.0, 0.0)

    if _separable(f) and spec.family in IID_FAMILIES:
        # ∏A - ∏B telescoped, with A_j - B_j integrated directly
        width = _fourier_width(f)
        energies = [_axis_energy(f, i) for i in range(d)]
        defects, errors = [], []
        for i in range(d):
            F_i = _axis_transform(f, i)
            res = integrate_real_line(
                lambda x: float(abs(F_i(x)) ** 2 * perturbations.marginal_structure(spec, x / r)),
                tol / (2.0 * d), width, even=True,
            )
            defects.append(res.value)
            errors.append(res.error)
        kept = [a - dd for a, dd in zip(energies, defects)]
        value = error = 0.0
        for j in range(d):
            weight = math.prod(kept[:j]) * math.prod(energies[j + 1:])
            value += weight * defects[j]
            error += weight * errors[j]
        return QuadResult(value, error)

    if f.f == "gaussian_bump" and spec.family == "isotropic_stable":
        a, alpha, gamma = f.a, spec.alpha, spec.gamma
        area = _sphere_area(d)
        radial = lambda rho: (
            area * rho ** (d - 1) * (math.pi / a) ** d * math.exp(-2.0 * math.pi**2 * rho**2 / a)
            * -math.expm1(-2.0 * gamma * (2.0 * math.pi * rho / r) ** alpha)
        )
        return integrate_half_line(radial, tol, math.sqrt(a))

    integrand = lambda *x: float(
        abs(test_functions.fourier(f, np.array(x))) ** 2
        * (1.0 - abs(perturbations.char_fn(spec, np.array(x) / r)) ** 2)
    )
    if d == 1:
        return integrate_real_line(lambda x: integrand(x), tol)
    logger.info(f"[QUAD] variance by {d}-dimensional nquad ({spec.family}, {f.f})")
    return integrate_nd(integrand, [[-CLASS2_BOX, CLASS2_BOX]] * d, tol)


def variance_exact_result(f, spec, r: float, tol: Optional[float] = None) -> QuadResult:
    tol = 1e-8 * r ** f.dimension if tol is None else tol
    res = _variance_integral(f, spec, r, tol / r ** f.dimension)
    scale = r ** f.dimension
    return QuadResult(max(res.value, 0.0) * scale, res.error * scale)


def variance_exact(f, spec, r: float, d: Optional[int] = None, tol: Optional[float] = None) -> float:
    """Var T_r = r^d ∫ |F[f]|² (1 - |φ(·/r)|²), by quadrature to absolute tolerance tol."""
    _dimension(f, d)
    if spec.dimension != f.dimension:
        raise ValueError(f"perturbation dimension {spec.dimension} != test function dimension {f.dimension}")
    return variance_exact_result(f, spec, r, tol).value


# ── asymptotic and limiting variances ─────────────────────────────────────────

def weighted_fourier_moment(f, power: float, tol: float = 1e-10) -> QuadResult:
    """∫ |F[f](x)|² |x|^power dx."""
    d = f.dimension
    if d == 1:
        even = _separable(f)
        return integrate_real_line(
            lambda x: float(abs(test_functions.fourier(f, x)) ** 2 * abs(x) ** power),
            tol, _fourier_width(f), even=even,
        )
    if f.f == "gaussian_bump":
        a = f.a
        area = _sphere_area(d)
        return integrate_half_line(
            lambda rho: area * rho ** (d - 1 + power) * (math.pi / a) ** d * math.exp(-2.0 * math.pi**2 * rho**2 / a),
            tol, math.sqrt(a),
        )
    integrand = lambda *x: float(
        abs(test_functions.fourier(f, np.array(x))) ** 2 * np.linalg.norm(x) ** power
    )
    return integrate_nd(integrand, [[-CLASS2_BOX, CLASS2_BOX]] * d, max(tol, 1e-8))


def _as_expansion(info) -> ExpansionInfo:
    if isinstance(info, ExpansionInfo):
        return info
    return perturbations.expansion(info)


def variance_asymptotic(
    f, expansion, r: float, d: Optional[int] = None, convention: str = "structure_factor"
) -> float:
    """
    L(1/r) r^{d-α} ∫ |F[f]|² |x|^α times c2 (structure_factor, from 1 - |φ|²)
    or c (stated, from 1 - φ). Only the ℓ part of L enters; its limit is in c.
    """
    d = _dimension(f, d)
    info = _as_expansion(expansion)
    if convention == "structure_factor":
        coef = info.c2
    elif convention == "stated":
        coef = info.c
    else:
        raise ValueError(f"unknown convention '{convention}'")
    ell = float(perturbations.slowly_varying(info.l_family, 1.0 / r)) if r > 1 else 1.0
    return coef * ell * r ** (d - info.alpha) * weighted_fourier_moment(f, info.alpha).value


def limit_variance_d2(f, spec) -> float:
    """
    ½ ∫ |F[f](x)|² E|2π(ξ - ξ')·x|² dx = 4π² v ∫ |F[f](x)|² |x|² dx, v the per-coordinate variance.
    """
    if f.dimension != 2 or spec.dimension != 2:
        raise ValueError("limit_variance_d2 requires d = 2")
    v = perturbations.per_coordinate_variance(spec)
    if math.isinf(v):
        raise ValueError(
            f"{spec.family}: bounded limit variance requires E|ξ|² < ∞ (variance is bounded iff E|ξ₀|² < ∞)"
        )
    if v == 0:
        return 0.0
    return 4.0 * math.pi**2 * v * weighted_fourier_moment(f, 2.0).value


def stable_scale(f, alpha: float, c: float) -> float:
    """(c ∫ |f'|^α)^{1/α}."""
    if f.dimension != 1:
        raise ValueError("stable_scale is defined for d = 1")
    if not 1 < alpha <= 2:
        raise ValueError(f"stable limit requires 1 < α ≤ 2, got α={alpha}")
    if c == 0:
        return 0.0
    return (c * test_functions.lp_norm_of_deriv(f, alpha)) ** (1.0 / alpha)


def stable_target_cf(alpha: float, scale: float) -> Callable[[np.ndarray], np.ndarray]:
    """t ↦ exp(-(scale |t|)^α), the cf of scale·S_α under the 2π convention."""
    return lambda t: np.exp(-((scale * np.abs(np.asarray(t, dtype=float))) ** alpha)).astype(complex)


def gaussian_target_cf(variance: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: np.exp(-2.0 * math.pi**2 * variance * np.asarray(t, dtype=float) ** 2).astype(complex)


# ── d = α = 1 limiting cumulants ──────────────────────────────────────────────

def _block_integral_closed_form(b: int, m: int) -> float:
    # F[f^b] is the N(0, a b / 2π²) density for f = exp(-a x²)
    return math.sqrt(b * (m - b)) / (math.pi * m)


def _block_integral_convolution(f, b: int, m: int) -> float:
    # ∫ |k| F[f^b](k) F[f^{m-b}](-k) dk
    integrand = lambda k: float(
        (abs(k) * test_functions.fourier_power(f, b, k) * test_functions.fourier_power(f, m - b, -k)).real
    )
    return integrate_real_line(integrand, CLASS2_TOL / 10.0, _fourier_width(f)).value


def _block_integral_nested(f, sizes: tuple[int, ...], first: int) -> float:
    # ∫ |k₁| ∏_j F[f^{b_j}](k_j) over k₁..k_{n-1}, k_n = -(k₁ + … + k_{n-1}), block `first` at k₁
    order = [sizes[first]] + [b for i, b in enumerate(sizes) if i != first]
    n = len(order)

    def integrand(*k):
        last = -sum(k)
        value = abs(k[0]) * test_functions.fourier_power(f, order[-1], last)
        for b, kk in zip(order[:-1], k):
            value = value * test_functions.fourier_power(f, b, kk)
        return float(np.real(value))

    return integrate_nd(
        integrand, [[-CLASS2_BOX, CLASS2_BOX]] * (n - 1), CLASS2_TOL, limit=100, inner_points=[0.0]
    ).value


def class2_limit_cumulant(f, c: float, m: int, method: Optional[str] = None) -> float:
    """
    lim κ_m(T_r) for d = α = 1: -c Σ_n (-1)^{n-1}(n-1)! Σ_{B₁..B_n} Σ_i I_i.

    method: "closed_form" (Gaussian bumps), "convolution" (1-D per block, any f),
    "quadrature" (nested (n-1)-dimensional quadrature); default picks the first that applies.
    """
    if f.dimension != 1:
        raise ValueError("class-II cumulants are defined for d = 1")
    if not 2 <= m <= CLASS2_MAX_ORDER:
        raise ValueError(f"m must be in 2..{CLASS2_MAX_ORDER}, got {m}")
    if method is None:
        method = "closed_form" if f.f == "gaussian_bump" else "convolution"
    if method == "closed_form" and f.f != "gaussian_bump":
        raise ValueError("closed-form block integrals need a gaussian_bump test function")
    if method not in ("closed_form", "convolution", "quadrature"):
        raise ValueError(f"unknown method '{method}'")

    cache: dict[tuple, float] = {}

    def block_integral(sizes: tuple[int, ...], i: int) -> float:
        b = sizes[i]
        others = tuple(sorted(s for j, s in enumerate(sizes) if j != i))
        key = (b, others)
        if key not in cache:
            if method == "closed_form":
                cache[key] = _block_integral_closed_form(b, m)
            elif method == "convolution":
                cache[key] = _block_integral_convolution(f, b, m)
            else:
                cache[key] = _block_integral_nested(f, sizes, i)
        return cache[key]

    total = 0.0
    for sizes, count in block_size_profile(m).items():
        if len(sizes) == 1:
            continue
        inner = sum(block_integral(sizes, i) for i in range(len(sizes)))
        total += partition_weight(len(sizes)) * count * inner
    value = -c * total
    logger.info(f"[THEORY] class-II κ{m} = {value:.10g} (c={c}, {method})")
    return value


def class2_cumulants(f, c: float, m_max: int = 4, method: Optional[str] = None) -> list[float]:
    """[κ₂, …, κ_m_max] of the d = α = 1 limit law."""
    return [class2_limit_cumulant(f, c, m, method) for m in range(2, m_max + 1)]


# ── regime table and normalization ────────────────────────────────────────────

def _reject(regime: Regime, detail: str):
    raise ValueError(f"{regime.label} requires {REGIME_CONDITIONS[regime]}: {detail}")


def resolve_expansion(spec, declared: Optional[ExpansionInfo] = None) -> ExpansionInfo:
    return declared if declared is not None else perturbations.expansion(spec)


def check_regime(regime: Regime, spec, d: int, declared: Optional[ExpansionInfo] = None) -> None:
    """Raise ValueError naming the violated hypothesis when `regime` does not apply."""
    if spec.family == "point_mass":
        if regime == Regime.CLT_D2_BOUNDED and d == 2:
            return
        if regime == Regime.CLASS_TWO and d == 1:
            return
        _reject(regime, "perturbations must not be a.s. constant")

    if regime == Regime.CLT_D3:
        if d < 3:
            _reject(regime, f"dimension mismatch (d={d})")
        return
    if regime in (Regime.CLT_D2_BOUNDED, Regime.CLT_D2_SUBSEQUENCE):
        if d != 2:
            _reject(regime, f"dimension mismatch (d={d})")
        heavy = is_heavy_tailed(spec)
        if regime == Regime.CLT_D2_BOUNDED and heavy:
            _reject(regime, f"{spec.family} has E|ξ|² = ∞")
        if regime == Regime.CLT_D2_SUBSEQUENCE and not heavy:
            _reject(regime, f"{spec.family} has E|ξ|² < ∞")
        return

    info = resolve_expansion(spec, declared)
    alpha, diverges = info.alpha, info.l_family.diverges
    if regime == Regime.REGULAR_VARIATION:
        if d == 1 and not (alpha < 1 or (alpha == 1 and diverges)):
            _reject(regime, f"d=1 with α={alpha}")
        return
    if d != 1:
        _reject(regime, f"dimension mismatch (d={d})")
    if regime == Regime.CLASS_TWO:
        if alpha != 1 or diverges or info.c <= 0:
            _reject(regime, f"α={alpha}, c={'∞' if diverges else info.c}")
        return
    if regime == Regime.STABLE:
        if not 1 < alpha <= 2 or diverges or info.c <= 0:
            _reject(regime, f"α={alpha}, c={'∞' if diverges else info.c}")
        return


def normalizer(
    regime: Regime,
    expansion: Optional[ExpansionInfo],
    r: float,
    d: int,
    f=None,
    variance: Optional[float] = None,
) -> tuple[float, float]:
    """
    (center, scale) with normalized sample = scale·(T_r - center).

    center = r^d ∫ f; scale per regime: Var^{-1/2} (items 1, 3), 1 (items 2, 5),
    ℓ(1/r)^{-1/2} r^{(α-d)/2} (item 4), r^{(α-1)/α} (item 6).
    """
    center = mean_prediction(f, r, d) if f is not None else 0.0
    if regime in (Regime.CLT_D3, Regime.CLT_D2_SUBSEQUENCE):
        if variance is None or variance <= 0:
            raise ValueError(f"{regime.label}: normalization needs a positive variance")
        return center, variance**-0.5
    if regime in (Regime.CLT_D2_BOUNDED, Regime.CLASS_TWO):
        return center, 1.0
    if expansion is None:
        raise ValueError(f"{regime.label}: normalization needs expansion metadata")
    alpha = expansion.alpha
    if regime == Regime.REGULAR_VARIATION:
        if d == 1 and not (alpha < 1 or (alpha == 1 and expansion.l_family.diverges)):
            _reject(regime, f"d=1 with α={alpha}")
        ell = float(perturbations.slowly_varying(expansion.l_family, 1.0 / r)) if r > 1 else 1.0
        return center, ell**-0.5 * r ** ((alpha - d) / 2.0)
    if not 1 < alpha <= 2 or d != 1:
        _reject(regime, f"d={d}, α={alpha}")
    return center, r ** ((alpha - 1.0) / alpha)


# ── lattice identities ────────────────────────────────────────────────────────

def direct_lattice_sum(f, r: float, multiple: float = 12.0) -> float:
    """Σ_{x ∈ Z^d, |x|_∞ ≤ multiple·r} f(x/r)."""
    sites = window_sites(f.dimension, int(math.ceil(multiple * r)))
    return float(math.fsum(test_functions.evaluate(f, sites / r)))


def fourier_lattice_sum(f, r: float, d: Optional[int] = None, n_dual: int = 3) -> float:
    """r^d Σ_{k ∈ Z^d, |k|_∞ ≤ n_dual} F[f](r k), the dual side of Poisson summation."""
    d = _dimension(f, d)
    dual = window_sites(d, n_dual)
    return float(r**d * math.fsum(np.real(test_functions.fourier(f, r * dual))))


def poisson_defect(f, r: float, d: Optional[int] = None) -> float:
    return abs(direct_lattice_sum(f, r) - fourier_lattice_sum(f, r, d))


def riemann_lp_sum(f, p: float, r: float, multiple: float = 12.0) -> float:
    """r^{-1} Σ_{x ∈ Z} |f'(x/r)|^p."""
    if f.dimension != 1:
        raise ValueError("riemann_lp_sum is defined for d = 1")
    x = np.arange(-math.ceil(multiple * r), math.ceil(multiple * r) + 1) / r
    return float(math.fsum(np.abs(test_functions.deriv(f, x)) ** p) / r)


def tail_proxy_eta(f, reach: float = 20.0) -> float:
    """
    Smallest η with A(0) - A(x) ≥ A(0)/2 for |x| ≥ η/2, A = F[|F[f]|²].

    Searched along the coordinate axes and the main diagonal.
    """
    d = f.dimension
    directions = [np.eye(d)[i] for i in range(d)]
    if d > 1:
        directions.append(np.ones(d) / math.sqrt(d))
    peak = float(test_functions.autocorrelation(f, np.zeros(d)))
    grid = np.linspace(0.0, reach, 2001)
    radius = 0.0
    for u in directions:
        excess = lambda s, u=u: float(test_functions.autocorrelation(f, s * u)) - peak / 2.0
        values = np.array([excess(s) for s in grid])
        above = np.nonzero(values > 0)[0]
        if above.size == 0:
            continue
        last = above[-1]
        if last == grid.size - 1:
            raise ValueError(f"autocorrelation above half its peak beyond |x| = {reach}")
        radius = max(radius, brentq(excess, grid[last], grid[last + 1]))
    return 2.0 * radius


# ── per-experiment predictions ────────────────────────────────────────────────

def _quad_prediction(kind: PredictionKind, res: QuadResult, method: str, requested: float, **extra) -> Prediction:
    return Prediction(
        kind=kind, value=res.value, method=method, tolerance=res.error,
        requested_tolerance=requested, **extra,
    )


def regime_predictions(cfg) -> tuple[list[Prediction], Optional[dict]]:
    """
    Predictions for an ExperimentConfig and the limit law of its normalized samples.

    The limit is returned as a dict for schemas.experiment.LimitTarget, or None
    when the normalized statistic has no nondegenerate limit to test.
    """
    sample = cfg.sample
    f, spec, r, d = sample.function, sample.perturbation, sample.r, sample.dimension
    regime = cfg.regime
    predictions = [
        Prediction(kind=PredictionKind.MEAN, value=mean_prediction(f, r, d), method="closed_form", r=r)
    ]
    target = None

    var_tol = 1e-8 * r**d
    try:
        var_res = variance_exact_result(f, spec, r, var_tol)
        predictions.append(
            _quad_prediction(PredictionKind.VARIANCE_EXACT, var_res, "quadrature", var_tol, r=r)
        )
    except (ValueError, RuntimeError) as e:
        logger.warning(f"[THEORY] exact variance unavailable: {e}")

    info = None
    if spec.family != "point_mass":
        try:
            info = resolve_expansion(spec, cfg.declared_expansion)
        except ValueError as e:
            logger.info(f"[THEORY] no isotropic expansion: {e}")
    if info is not None:
        value = variance_asymptotic(f, info, r, d)
        predictions.append(
            Prediction(kind=PredictionKind.VARIANCE_ASYMPTOTIC, value=value, method="quadrature", r=r)
        )

    if regime in (Regime.CLT_D3, Regime.CLT_D2_SUBSEQUENCE):
        target = {"target": "gaussian", "variance": 1.0}
    elif regime == Regime.CLT_D2_BOUNDED:
        limit = limit_variance_d2(f, spec)
        predictions.append(Prediction(kind=PredictionKind.LIMIT_VARIANCE_D2, value=limit, method="quadrature"))
        if limit > 0:
            target = {"target": "gaussian", "variance": limit}
    elif regime == Regime.REGULAR_VARIATION:
        limit = info.c2 * weighted_fourier_moment(f, info.alpha).value
        target = {"target": "gaussian", "variance": limit}
    elif regime == Regime.CLASS_TWO and info is not None:
        orders = range(2, max(cfg.max_order, 2) + 1)
        kappas = [class2_limit_cumulant(f, info.c, m) for m in orders]
        predictions.extend(
            Prediction(kind=PredictionKind.CLASS_II_CUMULANT, value=k, method="partition_sum", order=m)
            for m, k in zip(orders, kappas)
        )
        target = {"target": "class_ii", "cumulants": kappas}
    elif regime == Regime.STABLE:
        scale = stable_scale(f, info.alpha, info.c)
        predictions.append(Prediction(kind=PredictionKind.STABLE_SCALE, value=scale, method="quadrature"))
        if info.alpha == 2:
            target = {"target": "gaussian", "variance": scale**2 / (2.0 * math.pi**2)}
        else:
            target = {"target": "stable", "alpha": info.alpha, "scale": scale}

    logger.info(
        f"[THEORY] {regime.label}: "
        + ", ".join(f"{p.kind.value}={p.value:.6g}" for p in predictions)
    )
    return predictions, target
