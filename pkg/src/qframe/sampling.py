"""Categorical sampling without replacement via perturbed log-probabilities.

One joint noise draw, then take the k largest perturbed values. The
resulting ordered tuple follows the sequential without-replacement law
of the underlying categorical distribution (see harness.plackett_luce_exact
for the exact reference law). Noise is redrawn on every run from a
generator freshly seeded with the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ScoredCandidates, ValidatedConfig
from .errors import (
    ConfigError,
    LengthMismatch,
    NonFiniteScore,
    NonPositiveTemperature,
    SelectionOverflow,
)


@dataclass(frozen=True)
class PerturbedScores:
    """log pi, the noise, and their sum, kept together so the additive
    relation is inspectable after the fact."""

    log_probs: np.ndarray
    gumbel_noise: np.ndarray
    perturbed: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        lp = np.asarray(self.log_probs, dtype=np.float64)
        g = np.asarray(self.gumbel_noise, dtype=np.float64)
        if lp.shape != g.shape or lp.ndim != 1:
            raise LengthMismatch("log_probs and gumbel_noise must be 1-D and equal length")
        p = lp + g
        for arr in (lp, g, p):
            arr.setflags(write=False)
        object.__setattr__(self, "log_probs", lp)
        object.__setattr__(self, "gumbel_noise", g)
        object.__setattr__(self, "perturbed", p)


@dataclass(frozen=True)
class RankedSelection:
    """Candidate positions in descending perturbed-score order."""

    ordered_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.ordered_indices)
        if len(set(idx)) != len(idx):
            raise ConfigError("ranked selection must not contain duplicates")
        object.__setattr__(self, "ordered_indices", idx)

    def __len__(self) -> int:
        return len(self.ordered_indices)


def _check_scores(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ConfigError("scores must be a non-empty 1-D array")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteScore("scores must be finite")
    return scores


def softmax_temperature(scores: np.ndarray, temperature: float) -> np.ndarray:
    """Temperature-scaled softmax with max-subtraction for overflow safety."""
    scores = _check_scores(scores)
    if not (temperature > 0) or not np.isfinite(temperature):
        raise NonPositiveTemperature(f"temperature must be positive, got {temperature}")
    scaled = scores / temperature
    scaled -= scaled.max()
    expd = np.exp(scaled)
    return expd / expd.sum()


def log_softmax_temperature(scores: np.ndarray, temperature: float) -> np.ndarray:
    """log of softmax_temperature, evaluated in log space.

    Stays finite for arbitrarily sharp temperatures where the softmax
    itself underflows to an exact one-hot, which preserves the score
    ordering among non-argmax candidates.
    """
    scores = _check_scores(scores)
    if not (temperature > 0) or not np.isfinite(temperature):
        raise NonPositiveTemperature(f"temperature must be positive, got {temperature}")
    scaled = scores / temperature
    scaled -= scaled.max()
    return scaled - np.log(np.exp(scaled).sum())


def gumbel_noise(rng: np.random.Generator, count: int) -> np.ndarray:
    """count standard Gumbel draws: -log(-log eps), eps uniform on (0, 1).

    The uniform is drawn from [tiny, 1), an open interval in effect, so
    neither log ever sees 0.
    """
    if count < 1:
        raise ConfigError(f"noise count must be >= 1, got {count}")
    eps = rng.uniform(np.finfo(np.float64).tiny, 1.0, size=count)
    return -np.log(-np.log(eps))


def _rank_descending(perturbed: np.ndarray, k: int) -> RankedSelection:
    # stable argsort of the negated values: ties go to the smaller position
    order = np.argsort(-perturbed, kind="stable")
    return RankedSelection(tuple(int(i) for i in order[:k]))


def perturbed_topk(probabilities: np.ndarray, noise: np.ndarray, k: int) -> RankedSelection:
    """Positions of the k largest log(pi) + noise values, descending.

    Ties (possible only with degenerate noise such as all zeros) break
    toward the smaller candidate position.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if probabilities.shape != noise.shape or probabilities.ndim != 1:
        raise LengthMismatch("probabilities and noise must be 1-D and equal length")
    total = probabilities.size
    if k > total:
        raise SelectionOverflow(f"cannot select {k} of {total} candidates")
    if k < 1:
        raise ConfigError(f"selection size must be >= 1, got {k}")
    if np.any(probabilities <= 0):
        raise ConfigError("probabilities must be strictly positive")
    ps = PerturbedScores(np.log(probabilities), noise)
    return _rank_descending(ps.perturbed, k)


def select_frames(scored: ScoredCandidates, cfg: ValidatedConfig) -> RankedSelection:
    """Draw the K+M+N ranked selection for one run.

    Composition of the temperature softmax, one joint Gumbel draw, and
    the top-k rank, with log pi evaluated in log space so the sharp
    temperature limit degrades to exact top-K by score. Deterministic
    given (scores, config): the generator is re-seeded from cfg.seed
    on every call, and deterministic_mode uses zero noise instead.
    """
    if scored.count != cfg.candidates:
        raise LengthMismatch(
            f"scored candidate count {scored.count} != configured candidates {cfg.candidates}"
        )
    k = cfg.selected_total
    if k > scored.count:
        raise SelectionOverflow(f"cannot select {k} of {scored.count} candidates")
    log_probs = log_softmax_temperature(scored.scores, cfg.temperature)
    if cfg.deterministic_mode:
        noise = np.zeros(scored.count)
    else:
        noise = gumbel_noise(np.random.default_rng(cfg.seed), scored.count)
    ps = PerturbedScores(log_probs, noise)
    return _rank_descending(ps.perturbed, k)
