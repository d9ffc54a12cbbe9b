"""Shared domain types, configuration, and validation.

All types here are frozen dataclasses; arrays they carry are marked
read-only, so instances are safe to share between threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    BudgetViolation,
    CandidateUnderflow,
    ConfigError,
    NonPositiveTemperature,
)

DEFAULT_CANDIDATES = 128
DEFAULT_TIER_COUNTS = (4, 8, 32)
DEFAULT_BUDGET = Fraction(8)
DEFAULT_TEMPERATURE = 0.8
DEFAULT_BASE_RESOLUTION = (448, 448)

_MAX_SEED = 2**64 - 1


class Tier(Enum):
    HIGH = "high"
    MID = "mid"
    LOW = "low"


def token_cost(high: int, mid: int, low: int) -> Fraction:
    """Token budget consumed by a tier allocation, in high-resolution
    frame equivalents: one mid frame costs 1/4, one low frame 1/16.

    Exact rational arithmetic, so the budget identity can be checked
    without float drift.
    """
    if high < 0 or mid < 0 or low < 0:
        raise ConfigError("tier counts must be non-negative")
    return Fraction(high) + Fraction(mid, 4) + Fraction(low, 16)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class VideoMeta:
    """Probed container facts. duration_s is derived, never stored."""

    path: str
    total_frames: int
    fps: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.total_frames < 1:
            raise ConfigError(f"total_frames must be >= 1, got {self.total_frames}")
        if not (self.fps > 0):
            raise ConfigError(f"fps must be positive, got {self.fps}")
        if self.width < 1 or self.height < 1:
            raise ConfigError("frame dimensions must be >= 1 pixel")

    @property
    def duration_s(self) -> float:
        return self.total_frames / self.fps


@dataclass(frozen=True)
class SelectionConfig:
    """Every tunable of one selection run.

    tier_counts is (high, mid, low) = (K, M, N). budget is expressed in
    high-resolution-frame equivalents and kept as an exact rational.
    deterministic_mode skips the Gumbel noise entirely (pure top-K).
    """

    candidates: int = DEFAULT_CANDIDATES
    tier_counts: tuple[int, int, int] = DEFAULT_TIER_COUNTS
    budget: Fraction = DEFAULT_BUDGET
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = 0
    base_resolution: tuple[int, int] = DEFAULT_BASE_RESOLUTION
    deterministic_mode: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "budget", Fraction(self.budget))
        object.__setattr__(self, "tier_counts", tuple(int(c) for c in self.tier_counts))
        object.__setattr__(
            self, "base_resolution", tuple(int(s) for s in self.base_resolution)
        )
        if len(self.tier_counts) != 3:
            raise ConfigError("tier_counts must be a (high, mid, low) triple")

    @property
    def selected_total(self) -> int:
        return sum(self.tier_counts)

    def snapshot(self) -> dict:
        """JSON-ready view, used verbatim in manifests and reports."""
        return {
            "candidates": self.candidates,
            "tier_counts": list(self.tier_counts),
            "budget": str(self.budget),
            "temperature": self.temperature,
            "seed": self.seed,
            "base_resolution": list(self.base_resolution),
            "deterministic_mode": self.deterministic_mode,
        }


# validate_config returns its argument; the alias documents intent at
# call sites that require a config that already passed validation.
ValidatedConfig = SelectionConfig


def validate_config(cfg: SelectionConfig) -> ValidatedConfig:
    """Check every cross-field invariant; return cfg unchanged iff all hold.

    The budget identity K + M/4 + N/16 == B is checked in exact rational
    arithmetic. Idempotent by construction.
    """
    high, mid, low = cfg.tier_counts
    if high < 0 or mid < 0 or low < 0:
        raise ConfigError(f"tier counts must be non-negative, got {cfg.tier_counts}")
    if cfg.candidates < 1:
        raise ConfigError(f"candidates must be >= 1, got {cfg.candidates}")
    if not (cfg.temperature > 0) or not np.isfinite(cfg.temperature):
        raise NonPositiveTemperature(
            f"temperature must be a positive finite real, got {cfg.temperature}"
        )
    if cfg.budget <= 0:
        raise ConfigError(f"budget must be positive, got {cfg.budget}")
    if not (0 <= cfg.seed <= _MAX_SEED):
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    if cfg.candidates < high + mid + low:
        raise CandidateUnderflow(
            f"candidates={cfg.candidates} < selected total {high + mid + low}"
        )
    cost = token_cost(high, mid, low)
    if cost != cfg.budget:
        raise BudgetViolation(
            f"tier counts {cfg.tier_counts} cost {cost} tokens, budget is {cfg.budget}"
        )
    if any(s < 1 for s in cfg.base_resolution):
        raise ConfigError(f"base_resolution sides must be >= 1, got {cfg.base_resolution}")
    return cfg


@dataclass(frozen=True)
class ScoredCandidates:
    """Candidate frame indices with their similarity scores and the
    temperature-scaled selection probabilities."""

    frame_indices: tuple[int, ...]
    scores: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "frame_indices", tuple(int(i) for i in self.frame_indices))
        object.__setattr__(self, "scores", _readonly(np.asarray(self.scores, dtype=np.float64)))
        object.__setattr__(
            self, "probabilities", _readonly(np.asarray(self.probabilities, dtype=np.float64))
        )
        n = len(self.frame_indices)
        if self.scores.shape != (n,) or self.probabilities.shape != (n,):
            raise ConfigError("frame_indices, scores, probabilities must share one length")
        if n == 0:
            raise ConfigError("at least one candidate is required")
        if any(b <= a for a, b in zip(self.frame_indices, self.frame_indices[1:])):
            raise ConfigError("frame_indices must be strictly increasing")
        if np.any(np.abs(self.scores) > 1.0 + 1e-6):
            raise ConfigError("scores must be cosine similarities in [-1, 1]")
        if np.any(self.probabilities < 0):
            raise ConfigError("probabilities must be non-negative")
        if abs(float(self.probabilities.sum()) - 1.0) > 1e-9:
            raise ConfigError("probabilities must sum to 1 within 1e-9")

    @property
    def count(self) -> int:
        return len(self.frame_indices)


@dataclass(frozen=True)
class SelectedFrame:
    frame_index: int
    timestamp_s: float
    rank: int
    tier: Tier
    score: float
    resolution: tuple[int, int]


@dataclass(frozen=True)
class SelectionResult:
    """Final ranked selection, stored in temporal order.

    Entries ascend in frame_index for the consumer; the selection rank
    survives as a field on each entry.
    """

    entries: tuple[SelectedFrame, ...]
    config_snapshot: SelectionConfig
    query: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        idxs = [e.frame_index for e in self.entries]
        if any(b <= a for a, b in zip(idxs, idxs[1:])):
            raise ConfigError("entries must be strictly ascending in frame_index")
        if sorted(e.rank for e in self.entries) != list(range(1, len(self.entries) + 1)):
            raise ConfigError("ranks must be a permutation of 1..len(entries)")

    def tier_counts(self) -> tuple[int, int, int]:
        counts = {t: 0 for t in Tier}
        for e in self.entries:
            counts[e.tier] += 1
        return counts[Tier.HIGH], counts[Tier.MID], counts[Tier.LOW]


def sha256_file(path, chunk_size: int = 1 << 20) -> str:
    """Lowercase hex SHA-256 of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(chunk_size)
            if not chunk:
                break
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_int_sequence(values: Sequence[int]) -> str:
    """Stable digest of an integer sequence, used for cache keys."""
    joined = ",".join(str(int(v)) for v in values)
    return sha256_bytes(joined.encode("ascii"))
