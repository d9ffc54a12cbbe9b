"""Resolution tiers and the exact token budget.

Ranks 1..K go to the high tier at the base resolution, the next M to
mid at half the side length, the last N to low at a quarter. Token
weights are 1, 1/4, 1/16, matching the area ratios 16:4:1.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .core import Tier, token_cost
from .errors import (
    BaseTooSmall,
    ConfigError,
    LengthMismatch,
    NoExactSolution,
    PresetUnavailable,
)
from .sampling import RankedSelection

__all__ = [
    "STANDARD_ALLOCATIONS",
    "DEFAULT_ALLOCATION",
    "BudgetStrategy",
    "TierAssignment",
    "TierResolutions",
    "assign_tiers",
    "tier_resolution",
    "tier_resolutions",
    "token_cost",
    "solve_budget",
    "clamp_to_candidates",
]

# The six standard budget-8 allocations; the last wins on accuracy and
# is the package default.
STANDARD_ALLOCATIONS: tuple[tuple[int, int, int], ...] = (
    (8, 0, 0),
    (6, 6, 8),
    (6, 4, 16),
    (4, 8, 32),
    (4, 6, 40),
    (4, 4, 48),
)
DEFAULT_ALLOCATION = (4, 8, 32)

_TIER_DIVISOR = {Tier.HIGH: 1, Tier.MID: 2, Tier.LOW: 4}


class BudgetStrategy(Enum):
    PRESET = "preset"
    MAX_COVERAGE = "max-coverage"


@dataclass(frozen=True)
class TierAssignment:
    """Rank-ordered candidate positions split into the three tiers."""

    high: tuple[int, ...]
    mid: tuple[int, ...]
    low: tuple[int, ...]

    def all_positions(self) -> tuple[int, ...]:
        return self.high + self.mid + self.low


@dataclass(frozen=True)
class TierResolutions:
    high: tuple[int, int]
    mid: tuple[int, int]
    low: tuple[int, int]


def assign_tiers(ranked: RankedSelection, high: int, mid: int, low: int) -> TierAssignment:
    """First K ranks to high, next M to mid, last N to low."""
    if high < 0 or mid < 0 or low < 0:
        raise ConfigError("tier counts must be non-negative")
    if len(ranked) != high + mid + low:
        raise LengthMismatch(
            f"ranked selection has {len(ranked)} entries, tiers need {high + mid + low}"
        )
    idx = ranked.ordered_indices
    return TierAssignment(
        high=idx[:high],
        mid=idx[high : high + mid],
        low=idx[high + mid :],
    )


def _even_floor(side: int) -> int:
    return max(2, (side // 2) * 2)


def tier_resolution(tier: Tier, base: tuple[int, int]) -> tuple[int, int]:
    """Output (w, h) for one tier: base, half, or quarter per side,
    each side floored to an even pixel count with a minimum of 2."""
    w, h = int(base[0]), int(base[1])
    if w < 4 or h < 4:
        raise BaseTooSmall(f"base resolution must be at least 4x4, got {w}x{h}")
    d = _TIER_DIVISOR[tier]
    return _even_floor(w // d), _even_floor(h // d)


def tier_resolutions(base: tuple[int, int]) -> TierResolutions:
    return TierResolutions(
        high=tier_resolution(Tier.HIGH, base),
        mid=tier_resolution(Tier.MID, base),
        low=tier_resolution(Tier.LOW, base),
    )


def solve_budget(
    budget: Fraction | int, strategy: BudgetStrategy = BudgetStrategy.PRESET
) -> tuple[int, int, int]:
    """Produce a (K, M, N) allocation whose token cost equals budget exactly.

    PRESET hands out the standard best allocation and only exists for
    budget 8. MAX_COVERAGE takes the smallest K >= 1 and then the
    largest N, which pins M; feasible exactly when 16*budget is an
    integer and budget >= 1.
    """
    budget = Fraction(budget)
    if budget <= 0:
        raise ConfigError(f"budget must be positive, got {budget}")
    if strategy is BudgetStrategy.PRESET:
        if budget != 8:
            raise PresetUnavailable(f"no preset allocation for budget {budget}")
        return DEFAULT_ALLOCATION
    sixteenths = budget * 16
    if sixteenths.denominator != 1:
        raise NoExactSolution(
            f"budget {budget} is not an integer number of sixteenths; "
            "no integer tier counts can meet it exactly"
        )
    if budget < 1:
        raise NoExactSolution(f"budget {budget} cannot fund the minimum one high frame")
    low = int((budget - 1) * 16)
    allocation = (1, 0, low)
    assert token_cost(*allocation) == budget
    return allocation


def clamp_to_candidates(high: int, mid: int, low: int, candidates: int) -> tuple[int, int, int]:
    """Shrink an allocation to fit the candidate pool, dropping low
    first, then mid, then high. Identity when it already fits."""
    if candidates < 1:
        raise ConfigError(f"candidate count must be >= 1, got {candidates}")
    if high < 0 or mid < 0 or low < 0:
        raise ConfigError("tier counts must be non-negative")
    low = min(low, max(0, candidates - high - mid))
    mid = min(mid, max(0, candidates - high))
    high = min(high, candidates)
    return high, mid, low
