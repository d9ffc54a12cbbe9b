import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qframe.core import ScoredCandidates, SelectionConfig
from qframe.errors import (
    ConfigError,
    LengthMismatch,
    NonFiniteScore,
    NonPositiveTemperature,
    SelectionOverflow,
)
from qframe.sampling import (
    PerturbedScores,
    gumbel_noise,
    log_softmax_temperature,
    perturbed_topk,
    select_frames,
    softmax_temperature,
)

# frozen: exp(2) / (exp(2) + 1) to 16 digits
SOFTMAX_2_0 = 0.8807970779778823


def test_softmax_symmetry():
    assert softmax_temperature(np.array([0.0, 0.0]), 1.0) == pytest.approx([0.5, 0.5])


def test_softmax_shift_invariance_constant_rows():
    for c in (-3.0, 0.0, 42.0):
        for tau in (0.1, 1.0, 7.5):
            pi = softmax_temperature(np.full(3, c), tau)
            assert pi == pytest.approx([1 / 3] * 3, abs=1e-12)


def test_softmax_derived_value():
    pi = softmax_temperature(np.array([2.0, 0.0]), 1.0)
    assert pi[0] == pytest.approx(SOFTMAX_2_0, abs=1e-5)
    assert pi[1] == pytest.approx(1.0 - SOFTMAX_2_0, abs=1e-5)


def test_softmax_sums_to_one_tightly():
    rng = np.random.default_rng(3)
    for _ in range(20):
        pi = softmax_temperature(rng.normal(size=50), 0.8)
        assert abs(pi.sum() - 1.0) <= 1e-12


def test_softmax_errors():
    with pytest.raises(NonPositiveTemperature):
        softmax_temperature(np.zeros(3), 0.0)
    with pytest.raises(NonFiniteScore):
        softmax_temperature(np.array([1.0, np.nan]), 1.0)
    with pytest.raises(NonFiniteScore):
        softmax_temperature(np.array([1.0, np.inf]), 1.0)


@given(
    scores=st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=20),
    shift=st.floats(-100, 100, allow_nan=False),
)
@settings(max_examples=100)
def test_softmax_shift_invariance_property(scores, shift):
    arr = np.asarray(scores)
    a = softmax_temperature(arr, 0.8)
    b = softmax_temperature(arr + shift, 0.8)
    assert np.max(np.abs(a - b)) < 1e-9


def test_log_softmax_matches_log_of_softmax():
    rng = np.random.default_rng(11)
    scores = rng.uniform(-1, 1, size=17)
    lp = log_softmax_temperature(scores, 0.8)
    assert lp == pytest.approx(np.log(softmax_temperature(scores, 0.8)), abs=1e-12)


def test_gumbel_known_points():
    # eps = e^-1 -> 0, eps = e^-e -> -1
    assert -math.log(-math.log(math.exp(-1))) == pytest.approx(0.0, abs=1e-12)
    assert -math.log(-math.log(math.exp(-math.e))) == pytest.approx(-1.0, abs=1e-12)


def test_gumbel_mean_matches_euler_mascheroni():
    g = gumbel_noise(np.random.default_rng(123), 1_000_000)
    assert g.mean() == pytest.approx(0.5772156649, abs=0.01)
    assert np.all(np.isfinite(g))


def test_gumbel_reproducible_and_validated():
    a = gumbel_noise(np.random.default_rng(5), 100)
    b = gumbel_noise(np.random.default_rng(5), 100)
    assert np.array_equal(a, b)
    with pytest.raises(ConfigError):
        gumbel_noise(np.random.default_rng(5), 0)


def test_perturbed_scores_additive_relation():
    lp = np.array([-0.1, -2.0, -3.0])
    g = np.array([0.5, 0.25, -1.0])
    ps = PerturbedScores(lp, g)
    assert np.array_equal(ps.perturbed, lp + g)
    with pytest.raises(LengthMismatch):
        PerturbedScores(lp, g[:2])


def test_perturbed_topk_zero_noise_is_topk_by_probability():
    sel = perturbed_topk(np.array([0.5, 0.3, 0.2]), np.zeros(3), 2)
    assert sel.ordered_indices == (0, 1)


def test_perturbed_topk_full_selection_is_permutation():
    rng = np.random.default_rng(0)
    pi = softmax_temperature(rng.normal(size=6), 1.0)
    sel = perturbed_topk(pi, gumbel_noise(rng, 6), 6)
    assert sorted(sel.ordered_indices) == list(range(6))


def test_perturbed_topk_tie_break_smaller_index():
    pi = np.full(4, 0.25)
    sel = perturbed_topk(pi, np.zeros(4), 3)
    assert sel.ordered_indices == (0, 1, 2)


def test_perturbed_topk_errors():
    pi = np.array([0.6, 0.4])
    with pytest.raises(SelectionOverflow):
        perturbed_topk(pi, np.zeros(2), 3)
    with pytest.raises(ConfigError):
        perturbed_topk(np.array([1.0, 0.0]), np.zeros(2), 1)
    with pytest.raises(LengthMismatch):
        perturbed_topk(pi, np.zeros(3), 1)


def test_perturbed_topk_first_draw_plackett_luce_rate():
    # P(first=0, second=1) = 0.7 * 0.2 / 0.3 = 0.4667 (independent hand calc)
    pi = np.array([0.7, 0.2, 0.1])
    rng = np.random.default_rng(99)
    hits = 0
    trials = 50_000
    for _ in range(trials):
        sel = perturbed_topk(pi, gumbel_noise(rng, 3), 2)
        if sel.ordered_indices == (0, 1):
            hits += 1
    assert hits / trials == pytest.approx(0.4666666666666667, abs=0.01)


def _scored(scores, indices=None):
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    return ScoredCandidates(
        frame_indices=tuple(indices if indices is not None else range(n)),
        scores=scores,
        probabilities=softmax_temperature(scores, 0.8),
    )


def test_select_frames_deterministic_mode_is_score_order():
    cfg = SelectionConfig(
        candidates=5, tier_counts=(1, 1, 1), budget=Fraction(21, 16), deterministic_mode=True
    )
    scored = _scored([0.1, 0.9, -0.5, 0.7, 0.3])
    sel = select_frames(scored, cfg)
    assert sel.ordered_indices == (1, 3, 4)


def test_select_frames_same_seed_same_result():
    cfg = SelectionConfig(candidates=6, tier_counts=(1, 2, 2), budget="1.625", seed=42)
    scored = _scored([0.5, 0.1, 0.8, -0.2, 0.05, 0.4])
    assert select_frames(scored, cfg) == select_frames(scored, cfg)


def test_select_frames_different_seeds_can_differ():
    scored = _scored(np.linspace(-0.5, 0.5, 12))
    outcomes = {
        select_frames(
            scored,
            SelectionConfig(candidates=12, tier_counts=(1, 2, 2), budget="1.625", seed=s),
        ).ordered_indices
        for s in range(40)
    }
    assert len(outcomes) > 1


def test_select_frames_sharp_temperature_equals_deterministic():
    rng = np.random.default_rng(21)
    scores = rng.permutation(np.linspace(-0.9, 0.9, 16))
    det_cfg = SelectionConfig(
        candidates=16, tier_counts=(1, 2, 4), budget="1.75", deterministic_mode=True
    )
    expected = select_frames(_scored(scores), det_cfg)
    for seed in range(100):
        cfg = SelectionConfig(
            candidates=16, tier_counts=(1, 2, 4), budget="1.75",
            temperature=1e-6, seed=seed,
        )
        assert select_frames(_scored(scores), cfg) == expected


def test_select_frames_argmax_preserved_in_deterministic_mode():
    rng = np.random.default_rng(4)
    for tau in (0.05, 0.8, 3.0):
        scores = rng.uniform(-1, 1, size=10)
        cfg = SelectionConfig(
            candidates=10, tier_counts=(1, 0, 0), budget=1,
            temperature=tau, deterministic_mode=True,
        )
        sel = select_frames(_scored(scores), cfg)
        assert sel.ordered_indices[0] == int(np.argmax(scores))


def test_select_frames_count_mismatch():
    cfg = SelectionConfig(candidates=8, tier_counts=(1, 0, 0), budget=1)
    with pytest.raises(LengthMismatch):
        select_frames(_scored([0.1, 0.2]), cfg)
