"""
Adaptive Gauss–Kronrod quadrature (scipy.integrate.quad / nquad) with an
explicit achieved-tolerance report.

Half-line integrals are computed on doubling intervals [w, 2w], … until a
piece falls below the tolerance, so integrands with Gaussian or power decay
never rely on quad's infinite-range transform.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from scipy.integrate import nquad, quad

from core.config import settings

logger = logging.getLogger(__name__)

_MAX_DOUBLINGS = 60


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float, requested: float):
        super().__init__(f"{message} (achieved {achieved:.3g}, requested {requested:.3g})")
        self.achieved = achieved
        self.requested = requested


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float


def integrate(
    func: Callable[[float], float],
    lower: float,
    upper: float,
    tol: Optional[float] = None,
    points: Optional[Sequence[float]] = None,
    limit: int = 2048,
) -> QuadResult:
    """∫_lower^upper func on a finite interval; raises QuadratureError when tol is not reached."""
    tol = settings.QUAD_TOL if tol is None else tol
    out = quad(func, lower, upper, epsabs=tol, epsrel=0.0, limit=limit, points=points, full_output=1)
    value, error = float(out[0]), float(out[1])
    if len(out) > 3:
        logger.warning(f"[QUAD] [{lower:.4g}, {upper:.4g}]: {out[3].splitlines()[0]}")
    if error > tol:
        raise QuadratureError(f"quadrature on [{lower:.4g}, {upper:.4g}] did not converge", error, tol)
    return QuadResult(value, error)


def integrate_half_line(
    func: Callable[[float], float],
    tol: Optional[float] = None,
    width: float = 1.0,
    start: float = 0.0,
) -> QuadResult:
    """∫_start^∞ func by interval doubling: [start, start+w], then pieces of doubling length."""
    tol = settings.QUAD_TOL if tol is None else tol
    piece_tol = tol / 8.0
    first = integrate(func, start, start + width, piece_tol)
    total, error = first.value, first.error
    lo, length = start + width, width
    for _ in range(_MAX_DOUBLINGS):
        piece = integrate(func, lo, lo + length, piece_tol)
        total += piece.value
        error += piece.error
        lo += length
        length *= 2.0
        if abs(piece.value) < piece_tol:
            return QuadResult(total, error + abs(piece.value))
    raise QuadratureError(f"half-line integral from {start} does not decay", abs(piece.value), tol)


def integrate_real_line(
    func: Callable[[float], float],
    tol: Optional[float] = None,
    width: float = 1.0,
    even: bool = False,
) -> QuadResult:
    """∫_R func, split at 0 so a kink there sits on an interval end."""
    tol = settings.QUAD_TOL if tol is None else tol
    right = integrate_half_line(func, tol / 2.0, width)
    if even:
        return QuadResult(2.0 * right.value, 2.0 * right.error)
    left = integrate_half_line(lambda x: func(-x), tol / 2.0, width)
    return QuadResult(right.value + left.value, right.error + left.error)


def integrate_nd(
    func: Callable[..., float],
    ranges: Sequence[Sequence[float]],
    tol: Optional[float] = None,
    limit: int = 200,
    inner_points: Optional[Sequence[float]] = None,
) -> QuadResult:
    """Iterated adaptive quadrature over a box (scipy nquad); `inner_points` marks kinks of the first variable."""
    tol = settings.QUAD_TOL if tol is None else tol
    opts = [{"epsabs": tol / 10.0, "epsrel": 0.0, "limit": limit} for _ in ranges]
    if inner_points is not None:
        opts[0]["points"] = list(inner_points)
    value, error = nquad(func, ranges, opts=opts)
    value, error = float(value), float(error)
    if error > tol:
        raise QuadratureError(f"{len(ranges)}-dimensional quadrature did not converge", error, tol)
    logger.debug(f"[QUAD] nquad over {len(ranges)} dims: {value:.10g} ± {error:.2g}")
    return QuadResult(value, error)
