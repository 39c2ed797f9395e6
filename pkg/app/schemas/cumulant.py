from dataclasses import dataclass

from pydantic import BaseModel, Field


@dataclass(frozen=True, slots=True)
class SetPartition:
    """Blocks of a partition of {1,…,m}, each block sorted, blocks ordered by least element."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        for block in self.blocks:
            if not block:
                raise ValueError("empty block in set partition")
            overlap = seen.intersection(block)
            if overlap:
                raise ValueError(f"blocks overlap on {sorted(overlap)}")
            seen.update(block)
        if seen != set(range(1, len(seen) + 1)):
            raise ValueError(f"blocks do not cover {{1,…,{len(seen)}}}")

    @property
    def m(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)


class CumulantEstimate(BaseModel):
    order: int = Field(..., ge=1)
    value: float
    std_error: float = Field(..., ge=0)
    # plug-in central-moment estimate (orders 5-6), not bias-corrected
    biased: bool = False
