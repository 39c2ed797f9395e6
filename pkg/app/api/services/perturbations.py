"""
Perturbation laws ξ: exact samplers, characteristic functions under the
φ(t) = E[exp(2πi t·ξ)] convention, and the small-argument expansion
1 - φ(t) ≈ c·L(|t|)·|t|^α that decides every regime.
"""

import logging
import math

import numpy as np
from scipy import special, stats

from schemas.perturbation import (
    ExpansionInfo,
    LFamily,
    ShiftedPerturbation,
    is_heavy_tailed,
)

logger = logging.getLogger(__name__)

INFINITE = math.inf
TWO_PI = 2.0 * math.pi


class AnisotropicExpansionError(ValueError):
    pass


def as_points(t, dimension: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if dimension == 1 and (t.ndim == 0 or t.shape[-1] != 1):
        t = t[..., None]
    if t.shape[-1] != dimension:
        raise ValueError(f"expected points of dimension {dimension}, got shape {t.shape}")
    return t


def _stable_exponent(spec) -> float:
    return 1.0 if spec.family == "cauchy" else spec.alpha


# ── sampling ──────────────────────────────────────────────────────────────────

def _symmetric_stable(alpha: float, size, stream: np.random.Generator) -> np.ndarray:
    """Chambers–Mallows–Stuck draw with E exp(iuX) = exp(-|u|^alpha)."""
    phi = (stream.random(size) - 0.5) * np.pi
    if alpha == 1:
        return np.tan(phi)
    w = stream.exponential(1.0, size)
    if alpha == 2:
        return 2.0 * np.sqrt(w) * np.sin(phi)
    return (
        np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha)
    )


def _positive_stable(beta: float, size, stream: np.random.Generator) -> np.ndarray:
    """Kanter's draw of A > 0 with E exp(-sA) = exp(-s^beta), 0 < beta ≤ 1."""
    if beta == 1:
        return np.ones(size)
    u = stream.random(size) * np.pi
    e = stream.exponential(1.0, size)
    return (
        np.sin(beta * u) / np.sin(u) ** (1.0 / beta)
        * (np.sin((1.0 - beta) * u) / e) ** ((1.0 - beta) / beta)
    )


def sample(spec, n: int, stream: np.random.Generator) -> np.ndarray:
    """n independent draws, shape (n, d)."""
    if n < 1:
        raise ValueError(f"n must be ≥ 1, got {n}")
    if isinstance(spec, ShiftedPerturbation):
        return sample(spec.spec, n, stream) + np.asarray(spec.mean)

    d = spec.dimension
    family = spec.family
    if family == "gaussian":
        return stream.normal(0.0, spec.sigma, (n, d))
    if family == "uniform_cube":
        return stream.uniform(-spec.half_width, spec.half_width, (n, d))
    if family == "laplace":
        return stream.laplace(0.0, spec.scale, (n, d))
    if family == "cauchy":
        return spec.scale * _symmetric_stable(1.0, (n, d), stream)
    if family == "sym_stable":
        return spec.gamma ** (1.0 / spec.alpha) * _symmetric_stable(spec.alpha, (n, d), stream)
    if family == "isotropic_stable":
        if d < 2:
            raise ValueError("isotropic_stable requires dimension ≥ 2 (use sym_stable in d = 1)")
        a = _positive_stable(spec.alpha / 2.0, (n, 1), stream)
        g = stream.standard_normal((n, d))
        return spec.gamma ** (1.0 / spec.alpha) * np.sqrt(2.0 * a) * g
    if family == "point_mass":
        return np.tile(np.asarray(spec.value, dtype=float), (n, 1))
    raise ValueError(f"unknown perturbation family '{family}'")


# ── characteristic functions ──────────────────────────────────────────────────

def marginal_char_fn(spec, t) -> np.ndarray:
    """Characteristic function of one coordinate ξ₁ at real t (any shape)."""
    t = np.asarray(t, dtype=float)
    family = spec.family
    if family == "gaussian":
        return np.exp(-2.0 * math.pi**2 * spec.sigma**2 * t**2)
    if family == "uniform_cube":
        return np.sinc(2.0 * spec.half_width * t)
    if family == "laplace":
        return 1.0 / (1.0 + (TWO_PI * spec.scale * t) ** 2)
    if family == "cauchy":
        return np.exp(-TWO_PI * spec.scale * np.abs(t))
    if family in ("sym_stable", "isotropic_stable"):
        return np.exp(-spec.gamma * (TWO_PI * np.abs(t)) ** spec.alpha)
    if family == "point_mass":
        return np.exp(1j * TWO_PI * t * spec.value[0])
    raise ValueError(f"unknown perturbation family '{family}'")


def marginal_structure(spec, t) -> np.ndarray:
    """1 - |φ₁(t)|² of one coordinate, without cancellation near t = 0."""
    t = np.asarray(t, dtype=float)
    family = spec.family
    if family == "gaussian":
        return -np.expm1(-4.0 * math.pi**2 * spec.sigma**2 * t**2)
    if family == "cauchy":
        return -np.expm1(-2.0 * TWO_PI * spec.scale * np.abs(t))
    if family in ("sym_stable", "isotropic_stable"):
        return -np.expm1(-2.0 * spec.gamma * (TWO_PI * np.abs(t)) ** spec.alpha)
    if family == "point_mass":
        return np.zeros_like(t)
    return 1.0 - np.abs(marginal_char_fn(spec, t)) ** 2


def char_fn(spec, t):
    """φ(t) = E exp(2πi t·ξ); t of shape (d,) or (..., d)."""
    if isinstance(spec, ShiftedPerturbation):
        pts = as_points(t, spec.spec.dimension)
        return char_fn(spec.spec, pts) * np.exp(1j * TWO_PI * (pts @ np.asarray(spec.mean)))

    pts = as_points(t, spec.dimension)
    family = spec.family
    if family == "gaussian":
        out = np.exp(-2.0 * math.pi**2 * spec.sigma**2 * np.sum(pts**2, axis=-1))
    elif family in ("uniform_cube", "laplace"):
        out = np.prod(marginal_char_fn(spec, pts), axis=-1)
    elif family == "cauchy":
        out = np.exp(-TWO_PI * spec.scale * np.sum(np.abs(pts), axis=-1))
    elif family == "sym_stable":
        out = np.exp(-spec.gamma * np.sum((TWO_PI * np.abs(pts)) ** spec.alpha, axis=-1))
    elif family == "isotropic_stable":
        out = np.exp(-spec.gamma * (TWO_PI * np.linalg.norm(pts, axis=-1)) ** spec.alpha)
    elif family == "point_mass":
        return np.exp(1j * TWO_PI * (pts @ np.asarray(spec.value)))
    else:
        raise ValueError(f"unknown perturbation family '{family}'")
    return out.astype(complex)


# ── expansion metadata ────────────────────────────────────────────────────────

def expansion(spec) -> ExpansionInfo:
    """(α, c, c2, L) with 1 - φ(t) ≈ c L |t|^α and 1 - |φ(t)|² ≈ c2 L |t|^α."""
    d = spec.dimension
    family = spec.family
    if family == "point_mass":
        raise ValueError("point_mass is degenerate: 1 - φ has no nontrivial expansion")
    if family == "isotropic_stable" and d < 2:
        raise ValueError("isotropic_stable requires dimension ≥ 2 (use sym_stable in d = 1)")

    if family in ("gaussian", "uniform_cube", "laplace"):
        alpha, c = 2.0, 2.0 * math.pi**2 * per_coordinate_variance(spec)
    elif family == "cauchy":
        alpha, c = 1.0, TWO_PI * spec.scale
    else:
        alpha, c = spec.alpha, spec.gamma * TWO_PI**spec.alpha

    if family in ("cauchy", "sym_stable") and d >= 2 and alpha < 2:
        raise AnisotropicExpansionError(
            f"{family} in d={d}: anisotropic: expansion not of the form c|x|^α "
            "(1 - φ ~ c Σ|x_i|^α)"
        )
    # φ is real for every built-in law, so 1 - φ² = 2(1 - φ) - (1 - φ)²
    return ExpansionInfo(alpha=alpha, c=c, c2=2.0 * c, l_family=LFamily())


def slowly_varying(l_family: LFamily, t) -> np.ndarray:
    """L(t) for 0 < t < 1."""
    t = np.asarray(t, dtype=float)
    if l_family.kind == "const":
        return np.ones_like(t)
    return np.abs(np.log(t)) ** l_family.p


def potter_constant(l_family: LFamily, q: float, r_grid, b: float = 0.5, points: int = 200) -> float:
    """
    Smallest C on the grid with L(|x|/r) ≤ C |x|^q L(1/r) for 1 ≤ |x| ≤ b r.

    Finite for every q > 0 when L is constant or a log power.
    """
    worst = 0.0
    for r in r_grid:
        if b * r <= 1:
            continue
        x = np.geomspace(1.0, b * r, points)
        ratio = slowly_varying(l_family, x / r) / (x**q * slowly_varying(l_family, 1.0 / r))
        worst = max(worst, float(np.max(ratio)))
    return worst


# ── moments and marginal tails ────────────────────────────────────────────────

def moment_abs(spec, mu: float, n: int, stream: np.random.Generator) -> float:
    """Monte Carlo E|ξ|^μ (Euclidean norm); INFINITE when μ ≥ α for heavy tails."""
    if mu <= 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    base = spec.spec if isinstance(spec, ShiftedPerturbation) else spec
    if is_heavy_tailed(base) and mu >= _stable_exponent(base):
        logger.debug(f"[SAMPLE] E|ξ|^{mu} infinite for {base.family}")
        return INFINITE
    draws = sample(spec, n, stream)
    return float(np.mean(np.linalg.norm(draws, axis=1) ** mu))


def _stable_abs_moment(alpha: float, gamma: float, mu: float) -> float:
    # E|X|^μ for E exp(iuX) = exp(-γ|u|^α)
    return (
        gamma ** (mu / alpha) * 2.0**mu * special.gamma((1.0 + mu) / 2.0)
        * special.gamma(1.0 - mu / alpha)
        / (math.sqrt(math.pi) * special.gamma(1.0 - mu / 2.0))
    )


def _gaussian_abs_moment(sigma: float, mu: float) -> float:
    return 2.0 ** (mu / 2.0) * sigma**mu * special.gamma((1.0 + mu) / 2.0) / math.sqrt(math.pi)


def moment_abs_exact(spec, mu: float) -> float:
    """Closed-form E|ξ₁|^μ of one coordinate; INFINITE when it diverges."""
    family = spec.family
    if family == "gaussian":
        return _gaussian_abs_moment(spec.sigma, mu)
    if family == "uniform_cube":
        return spec.half_width**mu / (1.0 + mu)
    if family == "laplace":
        return spec.scale**mu * special.gamma(1.0 + mu)
    if family == "point_mass":
        return abs(spec.value[0]) ** mu
    alpha = _stable_exponent(spec)
    gamma = spec.scale if family == "cauchy" else spec.gamma
    if alpha == 2:
        return _gaussian_abs_moment(math.sqrt(2.0 * gamma), mu)
    if mu >= alpha:
        return INFINITE
    return _stable_abs_moment(alpha, gamma, mu)


def per_coordinate_variance(spec) -> float:
    family = spec.family
    if family == "gaussian":
        return spec.sigma**2
    if family == "uniform_cube":
        return spec.half_width**2 / 3.0
    if family == "laplace":
        return 2.0 * spec.scale**2
    if family == "point_mass":
        return 0.0
    if is_heavy_tailed(spec):
        return INFINITE
    return 2.0 * spec.gamma


def _stable_marginal(spec):
    alpha = _stable_exponent(spec)
    gamma = spec.scale if spec.family == "cauchy" else spec.gamma
    return alpha, gamma ** (1.0 / alpha)


def marginal_survival(spec, t, axis: int = 0) -> np.ndarray:
    """P(|ξ_axis| > t) for t ≥ 0."""
    t = np.abs(np.asarray(t, dtype=float))
    family = spec.family
    if family == "gaussian":
        return 2.0 * stats.norm.sf(t / spec.sigma)
    if family == "uniform_cube":
        return np.clip(1.0 - t / spec.half_width, 0.0, 1.0)
    if family == "laplace":
        return np.exp(-t / spec.scale)
    if family == "cauchy":
        return 2.0 * stats.cauchy.sf(t / spec.scale)
    if family == "point_mass":
        return (abs(spec.value[axis]) > t).astype(float)
    alpha, scale = _stable_marginal(spec)
    if alpha == 2:
        return 2.0 * stats.norm.sf(t / (math.sqrt(2.0) * scale))
    return 2.0 * stats.levy_stable.sf(t, alpha, 0.0, scale=scale)


def marginal_density_sup(spec, t) -> np.ndarray:
    """sup_{|z| ≥ t} p₁(z); marginals are symmetric unimodal, so this is p₁(t)."""
    t = np.abs(np.asarray(t, dtype=float))
    family = spec.family
    if family == "gaussian":
        return stats.norm.pdf(t / spec.sigma) / spec.sigma
    if family == "uniform_cube":
        return np.where(t < spec.half_width, 0.5 / spec.half_width, 0.0)
    if family == "laplace":
        return np.exp(-t / spec.scale) / (2.0 * spec.scale)
    if family == "cauchy":
        return stats.cauchy.pdf(t / spec.scale) / spec.scale
    if family == "point_mass":
        raise ValueError("point_mass has no density")
    alpha, scale = _stable_marginal(spec)
    if alpha == 2:
        s = math.sqrt(2.0) * scale
        return stats.norm.pdf(t / s) / s
    return stats.levy_stable.pdf(t, alpha, 0.0, scale=scale)


def shifted(spec, mean) -> ShiftedPerturbation:
    """Non-centered law ξ + mean; the lattice sampler applies `mean` as a deterministic shift."""
    return ShiftedPerturbation(spec=spec, mean=[float(m) for m in np.atleast_1d(mean)])
