"""
Set-partition combinatorics and cumulant estimation.

The partition sum κ = Σ_π (-1)^{n-1}(n-1)! ∏_{B∈π} E[∏_{b∈B} X_b] is evaluated
over restricted-growth strings. Sums run in the caller's number type, so
integer or Fraction inputs give exact results.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from core.config import settings
from schemas.cumulant import CumulantEstimate, SetPartition

logger = logging.getLogger(__name__)

MAX_PARTITION_ORDER = 12
MAX_EMPIRICAL_ORDER = 6


def _check_order(m: int, low: int = 1) -> None:
    if not low <= m <= MAX_PARTITION_ORDER:
        raise ValueError(
            f"m must be in {low}..{MAX_PARTITION_ORDER}, got {m} "
            f"(Bell({MAX_PARTITION_ORDER + 1}) partitions exceed the enumeration budget)"
        )


def partition_weight(n: int) -> int:
    """(-1)^{n-1}(n-1)!, the weight of an n-block partition."""
    return (-1) ** (n - 1) * math.factorial(n - 1)


# ── enumeration ───────────────────────────────────────────────────────────────

def restricted_growth_strings(m: int) -> Iterator[list[int]]:
    """
    All a[0..m-1] with a[0] = 0 and a[i] ≤ 1 + max(a[:i]), in lexicographic order.

    Each string labels element i+1 with block a[i].
    """
    if m == 0:
        return
    a = [0] * m
    b = [1] * m  # b[i] = 1 + max(a[:i])
    while True:
        yield list(a)
        i = m - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, m):
            a[j] = 0
            b[j] = max(b[i], a[i] + 1)


def _blocks(rgs: list[int]) -> tuple[tuple[int, ...], ...]:
    blocks: list[list[int]] = []
    for element, label in enumerate(rgs, start=1):
        if label == len(blocks):
            blocks.append([])
        blocks[label].append(element)
    return tuple(tuple(b) for b in blocks)


def partitions(m: int) -> list[SetPartition]:
    """Every partition of {1,…,m} exactly once, in restricted-growth order."""
    _check_order(m)
    return [SetPartition(_blocks(rgs)) for rgs in restricted_growth_strings(m)]


@lru_cache(maxsize=None)
def block_size_profile(m: int) -> dict[tuple[int, ...], int]:
    """Number of partitions of {1,…,m} per sorted block-size tuple."""
    _check_order(m)
    counts: Counter = Counter()
    for rgs in restricted_growth_strings(m):
        sizes = Counter(rgs)
        counts[tuple(sorted(sizes.values(), reverse=True))] += 1
    logger.debug(f"[CUMULANT] m={m}: {sum(counts.values())} partitions, {len(counts)} size profiles")
    return dict(counts)


@lru_cache(maxsize=None)
def bell_number(m: int) -> int:
    """Bell numbers by the Bell triangle."""
    if m < 0:
        raise ValueError(f"m must be ≥ 0, got {m}")
    row = [1]
    for _ in range(m):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


@lru_cache(maxsize=None)
def stirling2(m: int, n: int) -> int:
    """Partitions of {1,…,m} into exactly n blocks."""
    if m == n:
        return 1
    if n == 0 or n > m:
        return 0
    return n * stirling2(m - 1, n) + stirling2(m - 1, n - 1)


def stirling_bound_holds(m: int) -> bool:
    """S(m, n) ≤ C(m, n) n^{m-n} for every 1 ≤ n ≤ m."""
    return all(stirling2(m, n) <= math.comb(m, n) * n ** (m - n) for n in range(1, m + 1))


# ── partition sums ────────────────────────────────────────────────────────────

def cumulant_from_moments(moments: Sequence):
    """κ_m from raw moments μ₁..μ_m through the partition sum."""
    m = len(moments)
    _check_order(m)
    total = 0
    for sizes, count in block_size_profile(m).items():
        term = math.prod(moments[b - 1] for b in sizes)
        total += partition_weight(len(sizes)) * count * term
    return total


def cumulant_by_recursion(moments: Sequence):
    """κ_m = μ_m - Σ_{k<m} C(m-1, k-1) κ_k μ_{m-k}."""
    kappas: list = []
    for m in range(1, len(moments) + 1):
        value = moments[m - 1]
        for k in range(1, m):
            value -= math.comb(m - 1, k - 1) * kappas[k - 1] * moments[m - k - 1]
        kappas.append(value)
    return kappas[-1]


def cmb_identity_sums(m: int) -> tuple[int, int, int]:
    """
    Weighted partition sums of 1, Σ|B_i|² and Σ_{i≠j}|B_i||B_j|.

    All three vanish for m ≥ 3; smaller m are evaluated but carry no identity.
    """
    _check_order(m)
    if m < 3:
        logger.info(f"[CUMULANT] m={m}: identity sums evaluated outside their range m ≥ 3")
    plain = squares = cross = 0
    for sizes, count in block_size_profile(m).items():
        w = partition_weight(len(sizes)) * count
        sq = sum(b * b for b in sizes)
        plain += w
        squares += w * sq
        cross += w * (m * m - sq)
    return plain, squares, cross


# ── empirical cumulants ───────────────────────────────────────────────────────

@dataclass
class PowerSums:
    """Mergeable n, Σ(x - shift)^j for j = 1..6."""

    shift: float
    n: int = 0
    sums: np.ndarray = field(default_factory=lambda: np.zeros(MAX_EMPIRICAL_ORDER + 1))

    @classmethod
    def from_samples(cls, samples, shift: float) -> "PowerSums":
        x = np.asarray(samples, dtype=float) - shift
        sums = np.empty(MAX_EMPIRICAL_ORDER + 1)
        sums[0] = x.size
        power = np.ones_like(x)
        for j in range(1, MAX_EMPIRICAL_ORDER + 1):
            power = power * x
            sums[j] = power.sum()
        return cls(shift=shift, n=int(x.size), sums=sums)

    def _check_shift(self, other: "PowerSums") -> None:
        if other.shift != self.shift:
            raise ValueError(f"cannot merge power sums with shifts {self.shift} and {other.shift}")

    def __add__(self, other: "PowerSums") -> "PowerSums":
        self._check_shift(other)
        return PowerSums(self.shift, self.n + other.n, self.sums + other.sums)

    def __sub__(self, other: "PowerSums") -> "PowerSums":
        self._check_shift(other)
        return PowerSums(self.shift, self.n - other.n, self.sums - other.sums)

    def central_moments(self) -> np.ndarray:
        """Plug-in central moments m_0..m_6 (divisor n)."""
        n = self.n
        raw = self.sums / n
        mean = raw[1]
        central = np.zeros(MAX_EMPIRICAL_ORDER + 1)
        for j in range(MAX_EMPIRICAL_ORDER + 1):
            central[j] = sum(math.comb(j, i) * raw[i] * (-mean) ** (j - i) for i in range(j + 1))
        central[1] = 0.0
        return central


def k_statistics(ps: PowerSums, max_order: int) -> list[float]:
    """Fisher k-statistics for orders 1-4, central-moment plug-in for 5-6."""
    n = ps.n
    s1, s2, s3, s4 = ps.sums[1:5]
    out = [s1 / n + ps.shift]
    if max_order >= 2:
        out.append((n * s2 - s1**2) / (n * (n - 1)))
    if max_order >= 3:
        out.append((2 * s1**3 - 3 * n * s1 * s2 + n**2 * s3) / (n * (n - 1) * (n - 2)))
    if max_order >= 4:
        out.append(
            (
                -6 * s1**4 + 12 * n * s1**2 * s2 - 3 * n * (n - 1) * s2**2
                - 4 * n * (n + 1) * s1 * s3 + n**2 * (n + 1) * s4
            )
            / (n * (n - 1) * (n - 2) * (n - 3))
        )
    if max_order >= 5:
        m = ps.central_moments()
        out.append(m[5] - 10 * m[3] * m[2])
        if max_order >= 6:
            out.append(m[6] - 15 * m[4] * m[2] - 10 * m[3] ** 2 + 30 * m[2] ** 3)
    return out


def cumulants_from_blocks(blocks: Sequence[PowerSums], max_order: int) -> list[CumulantEstimate]:
    """Cumulants of the pooled sample with delete-one-block jackknife errors."""
    total = blocks[0]
    for b in blocks[1:]:
        total = total + b
    values = k_statistics(total, max_order)
    count = len(blocks)
    if count < 2:
        errors = [0.0] * max_order
    else:
        leave_out = np.array([k_statistics(total - b, max_order) for b in blocks])
        centered = leave_out - leave_out.mean(axis=0)
        errors = np.sqrt((count - 1) / count * np.sum(centered**2, axis=0)).tolist()
    return [
        CumulantEstimate(order=j + 1, value=float(values[j]), std_error=float(errors[j]), biased=j >= 4)
        for j in range(max_order)
    ]


def empirical_cumulants(samples, max_order: int = 4, blocks: int | None = None) -> list[CumulantEstimate]:
    """κ₁..κ_max_order of `samples` with jackknife standard errors."""
    if not 1 <= max_order <= MAX_EMPIRICAL_ORDER:
        raise ValueError(f"max_order must be in 1..{MAX_EMPIRICAL_ORDER}, got {max_order}")
    x = np.asarray(samples, dtype=float).ravel()
    needed = 10 * 2**max_order
    if x.size < needed:
        raise ValueError(f"insufficient samples: {x.size} < {needed} for order {max_order}")
    blocks = settings.JACKKNIFE_BLOCKS if blocks is None else blocks
    shift = float(np.median(x))
    parts = [PowerSums.from_samples(chunk, shift) for chunk in np.array_split(x, blocks)]
    estimates = cumulants_from_blocks(parts, max_order)
    logger.debug(
        "[CUMULANT] " + ", ".join(f"κ{e.order}={e.value:.6g}±{e.std_error:.2g}" for e in estimates)
    )
    return estimates
