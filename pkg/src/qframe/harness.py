"""Independent oracles and statistical checks for the sampler and the
budget allocator, plus the planted-relevance synthetic benchmark.

The exact reference law for the perturbed top-k sampler is enumerated
here by brute force, never through the sampler itself, so the two
routes stay independent.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import chi2

from .candidates import uniform_candidate_indices
from .core import token_cost
from .errors import ConfigError, EnumerationTooLarge, SparseCells
from .sampling import gumbel_noise, log_softmax_temperature, perturbed_topk
from .tiers import STANDARD_ALLOCATIONS

_ENUMERATION_LIMIT = 8
MIN_EXPECTED_CELL = 5.0
DEFAULT_SIGNIFICANCE = 0.001

# sampler signature used by the conformance machinery: (pi, noise, k) -> tuple
SamplerFn = Callable[[np.ndarray, np.ndarray, int], tuple[int, ...]]


def _default_sampler(pi: np.ndarray, noise: np.ndarray, k: int) -> tuple[int, ...]:
    return perturbed_topk(pi, noise, k).ordered_indices


@dataclass(frozen=True)
class PlackettLuceTable:
    """Exact ordered-tuple probabilities for sequential without-replacement
    sampling from a categorical distribution."""

    probabilities: tuple[float, ...]
    k: int
    probs: Mapping[tuple[int, ...], float]


def _validate_pi(pi: Sequence[float]) -> np.ndarray:
    arr = np.asarray(pi, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError("pi must be a non-empty 1-D probability vector")
    if np.any(arr <= 0):
        raise ConfigError("pi entries must be strictly positive")
    if abs(float(arr.sum()) - 1.0) > 1e-9:
        raise ConfigError(f"pi must sum to 1 within 1e-9, got {arr.sum()!r}")
    return arr


def plackett_luce_exact(pi: Sequence[float], k: int) -> PlackettLuceTable:
    """Enumerate P(i1..ik) = prod_j pi[ij] / (1 - sum of earlier picks)
    over every ordered k-tuple."""
    arr = _validate_pi(pi)
    n = arr.size
    if n > _ENUMERATION_LIMIT:
        raise EnumerationTooLarge(f"enumeration bounded at {_ENUMERATION_LIMIT}, got {n}")
    if not (1 <= k <= n):
        raise ConfigError(f"tuple length {k} must be in [1, {n}]")
    table: dict[tuple[int, ...], float] = {}
    for tup in itertools.permutations(range(n), k):
        prob = 1.0
        remaining = 1.0
        for i in tup:
            prob *= arr[i] / remaining
            remaining -= arr[i]
        table[tup] = prob
    return PlackettLuceTable(probabilities=tuple(arr.tolist()), k=k, probs=table)


def empirical_tuple_frequencies(
    pi: Sequence[float],
    k: int,
    trials: int,
    seed: int,
    deterministic: bool = False,
    sampler: SamplerFn | None = None,
) -> dict[tuple[int, ...], float]:
    """Normalized ordered-tuple counts from repeated sampler runs with
    independent noise per trial."""
    arr = _validate_pi(pi)
    if trials < 1000:
        raise ConfigError(f"at least 1000 trials required, got {trials}")
    if not (1 <= k <= arr.size):
        raise ConfigError(f"tuple length {k} must be in [1, {arr.size}]")
    draw = sampler or _default_sampler
    rng = np.random.default_rng(seed)
    counts: dict[tuple[int, ...], int] = {}
    zeros = np.zeros(arr.size)
    for _ in range(trials):
        noise = zeros if deterministic else gumbel_noise(rng, arr.size)
        tup = tuple(draw(arr, noise, k))
        counts[tup] = counts.get(tup, 0) + 1
    return {tup: c / trials for tup, c in counts.items()}


@dataclass(frozen=True)
class GofResult:
    statistic: float
    threshold: float
    reject: bool
    dof: int
    significance: float


def chi_square_gof(
    observed_counts: Mapping[tuple[int, ...], int],
    expected_probs: Mapping[tuple[int, ...], float],
    trials: int,
    significance: float = DEFAULT_SIGNIFICANCE,
) -> GofResult:
    """Pearson goodness of fit of observed tuple counts against an exact
    law; rejects when the statistic exceeds the chi-square quantile at
    (cells - 1) degrees of freedom."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    cells = sorted(expected_probs)
    if len(cells) < 2:
        raise ConfigError("need at least two cells for a goodness-of-fit test")
    expected = np.array([expected_probs[c] * trials for c in cells])
    if np.any(expected < MIN_EXPECTED_CELL):
        raise SparseCells(
            f"smallest expected cell count {expected.min():.2f} is below "
            f"{MIN_EXPECTED_CELL}; increase trials"
        )
    stray = sum(c for tup, c in observed_counts.items() if tup not in expected_probs)
    observed = np.array([observed_counts.get(c, 0) for c in cells], dtype=np.float64)
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    dof = len(cells) - 1
    threshold = float(chi2.ppf(1.0 - significance, dof))
    if stray:
        # mass on tuples the law assigns probability zero: certain rejection
        statistic = float("inf")
    return GofResult(
        statistic=statistic,
        threshold=threshold,
        reject=statistic > threshold,
        dof=dof,
        significance=significance,
    )


@dataclass(frozen=True)
class SyntheticCase:
    """Planted-relevance score generator: planted positions sit score_gap
    above the rest, and everything carries Gaussian noise."""

    candidates: int
    planted: frozenset[int]
    score_gap: float
    noise_sigma: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "planted", frozenset(int(p) for p in self.planted))
        if not self.planted:
            raise ConfigError("at least one planted position is required")
        if any(not (0 <= p < self.candidates) for p in self.planted):
            raise ConfigError("planted positions must lie in [0, candidates)")
        if self.score_gap < 0:
            raise ConfigError("score_gap must be non-negative")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")


POLICIES = ("uniform", "topk", "gumbel")


@dataclass(frozen=True)
class PolicyBenchmark:
    policy: str
    mean_recall: float
    recalls: tuple[float, ...]
    mean_select_ms: float


def _select_with_policy(
    policy: str, scores: np.ndarray, k: int, temperature: float, rng: np.random.Generator
) -> tuple[int, ...]:
    n = scores.size
    if policy == "uniform":
        return tuple(uniform_candidate_indices(n, k))
    log_probs = log_softmax_temperature(scores, temperature)
    noise = np.zeros(n) if policy == "topk" else gumbel_noise(rng, n)
    order = np.argsort(-(log_probs + noise), kind="stable")
    return tuple(int(i) for i in order[:k])


def run_synthetic_benchmark(
    case: SyntheticCase,
    policies: Sequence[str] = POLICIES,
    trials: int = 100,
    seed: int = 0,
    select_count: int = 44,
    temperature: float = 0.8,
    randomize_planted: bool = False,
) -> dict[str, PolicyBenchmark]:
    """Mean recall@select_count and selection latency per policy.

    Each trial redraws the score noise from a per-trial child seed; all
    policies see the same scores within a trial, so differences are
    paired. randomize_planted redraws the planted set (same size) every
    trial, which is what makes the no-signal case a fair null: a fixed
    planted set that dodges the uniform grid would make the uniform
    policy lose even with zero signal.
    """
    if select_count > case.candidates:
        raise ConfigError(
            f"cannot select {select_count} from {case.candidates} candidates"
        )
    unknown = set(policies) - set(POLICIES)
    if unknown:
        raise ConfigError(f"unknown policies: {sorted(unknown)}")
    denom = min(len(case.planted), select_count)
    results: dict[str, tuple[list[float], list[float]]] = {p: ([], []) for p in policies}
    child_seeds = np.random.SeedSequence(seed).spawn(trials)
    for child in child_seeds:
        rng = np.random.default_rng(child)
        if randomize_planted:
            planted = frozenset(
                int(i) for i in rng.choice(case.candidates, size=len(case.planted), replace=False)
            )
        else:
            planted = case.planted
        scores = rng.normal(0.0, case.noise_sigma, size=case.candidates)
        scores[np.fromiter(planted, dtype=int)] += case.score_gap
        for policy in policies:
            t0 = time.perf_counter()
            picked = _select_with_policy(policy, scores, select_count, temperature, rng)
            elapsed_ms = (time.perf_counter() - t0) * 1000.0
            recall = len(set(picked) & planted) / denom
            results[policy][0].append(recall)
            results[policy][1].append(elapsed_ms)
    return {
        p: PolicyBenchmark(
            policy=p,
            mean_recall=float(np.mean(recalls)),
            recalls=tuple(recalls),
            mean_select_ms=float(np.mean(times)),
        )
        for p, (recalls, times) in results.items()
    }


@dataclass(frozen=True)
class CheckRecord:
    """One validation-suite record, JSON-shaped for the report file."""

    test: str
    statistic: float
    threshold: float
    passed: bool
    trials: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "pass": self.passed,
            "trials": self.trials,
            "seed": self.seed,
        }


CONFORMANCE_FIXTURES: tuple[tuple[tuple[float, ...], int], ...] = (
    ((0.5, 0.3, 0.2), 2),
    ((0.5, 0.3, 0.2), 3),
    ((0.4, 0.3, 0.2, 0.1), 2),
    ((0.4, 0.3, 0.2, 0.1), 3),
    ((0.3, 0.25, 0.2, 0.15, 0.1), 2),
    ((0.3, 0.25, 0.2, 0.15, 0.1), 3),
)

MARGINAL_PI = (0.7, 0.2, 0.1)
MARGINAL_TOLERANCE = 0.01


def run_validation_suite(
    trials: int = 50000,
    seed: int = 20240601,
    extra_fixtures: Sequence[tuple[Sequence[float], int]] = (),
    sampler: SamplerFn | None = None,
) -> list[CheckRecord]:
    """Budget identity plus sampler conformance, as report records.

    extra_fixtures appends (pi, k) conformance cases; sampler swaps the
    implementation under test (the broken-sampler hook).
    """
    records: list[CheckRecord] = []

    worst = max(abs(float(token_cost(*alloc) - 8)) for alloc in STANDARD_ALLOCATIONS)
    records.append(
        CheckRecord(
            test="budget_identity_presets",
            statistic=worst,
            threshold=0.0,
            passed=worst == 0.0,
            trials=0,
            seed=seed,
        )
    )

    marginal_trials = max(trials, 100000)
    freqs = empirical_tuple_frequencies(
        MARGINAL_PI, 1, marginal_trials, seed, sampler=sampler
    )
    deviation = max(
        abs(freqs.get((i,), 0.0) - p) for i, p in enumerate(MARGINAL_PI)
    )
    records.append(
        CheckRecord(
            test="gumbel_max_marginal",
            statistic=deviation,
            threshold=MARGINAL_TOLERANCE,
            passed=deviation <= MARGINAL_TOLERANCE,
            trials=marginal_trials,
            seed=seed,
        )
    )

    fixtures = list(CONFORMANCE_FIXTURES) + [
        (tuple(float(x) for x in pi), int(k)) for pi, k in extra_fixtures
    ]
    for i, (pi, k) in enumerate(fixtures):
        table = plackett_luce_exact(pi, k)
        case_seed = seed + 1 + i
        freqs = empirical_tuple_frequencies(pi, k, trials, case_seed, sampler=sampler)
        counts = {tup: round(f * trials) for tup, f in freqs.items()}
        gof = chi_square_gof(counts, table.probs, trials)
        records.append(
            CheckRecord(
                test=f"plackett_luce_gof_pi={','.join(f'{p:g}' for p in pi)}_k={k}",
                statistic=gof.statistic,
                threshold=gof.threshold,
                passed=not gof.reject,
                trials=trials,
                seed=case_seed,
            )
        )
    return records


def broken_uniform_sampler(pi: np.ndarray, noise: np.ndarray, k: int) -> tuple[int, ...]:
    """Negative-control sampler: ignores pi entirely. Used by the
    validate command's test hook and the conformance tests."""
    rng = np.random.default_rng(int(abs(noise[0]) * 1e6) % (2**32))
    return tuple(int(i) for i in rng.permutation(len(pi))[:k])
