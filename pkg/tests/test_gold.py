import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from goldgan import gold as G
from goldgan.data import Component, SyntheticMixture
from goldgan.gold import GENERATED, REAL, GoldScore, ScoreStats

prob = st.floats(1e-6, 1 - 1e-6)


@pytest.mark.parametrize("prov", [REAL, GENERATED])
def test_neutral_discriminator_perfect_class_is_zero(prov):
    assert abs(G.gold(0.5, 1.0, prov).combined) < 1e-6


def test_scalar_examples():
    assert abs(G.gold(0.8, 0.5, REAL).combined - math.log(8)) < 1e-9
    assert abs(G.gold(0.2, 0.5, GENERATED).combined - (math.log(0.25) + math.log(0.5))) < 1e-9
    assert abs(G.gold(0.2, 0.5, GENERATED).combined + 2.0794415416798357) < 1e-9


def test_unlabeled_provenance_rejected():
    with pytest.raises(ValueError, match="gold_unlabeled"):
        G.gold(0.5, 0.5, G.UNLABELED)


def test_balanced_examples():
    unit = ScoreStats(1.3, 1.3, 10)
    for prov in (REAL, GENERATED):
        assert G.gold_balanced(0.7, 0.4, prov, unit).combined == G.gold(0.7, 0.4, prov).combined
    s = G.gold_balanced(0.5, math.exp(-1), GENERATED, ScoreStats(2.0, 1.0, 10))
    assert abs(s.combined + 2.0) < 1e-9
    with pytest.raises(G.DegenerateStatsError):
        G.gold_balanced(0.5, 0.5, REAL, ScoreStats(1.0, 0.0, 10))


def test_entropy_examples():
    assert G.entropy([1.0, 0.0]) == 0.0
    assert abs(G.entropy([0.5, 0.5]) - math.log(2)) < 1e-12
    assert abs(G.entropy([0.75, 0.25]) - 0.5623351446188083) < 1e-9


def test_unlabeled_examples():
    assert abs(G.gold_unlabeled(0.5, [0.0, 1.0]).combined) < 1e-9
    assert abs(G.gold_unlabeled(0.9, [0.5, 0.5]).combined - (math.log(9) + math.log(2))) < 1e-9
    with pytest.raises(G.DegenerateStatsError):
        G.gold_unlabeled(0.9, [0.5, 0.5], ScoreStats(1.0, 0.0, 4))
    assert G.gold_unlabeled(0.9, [0.3, 0.7], ScoreStats(0.8, 0.8, 4)).combined == \
        G.gold_unlabeled(0.9, [0.3, 0.7]).combined


def test_score_stats_examples():
    same = [GoldScore(0.3, -0.2, GENERATED)] * 4
    st0 = G.score_stats(same)
    assert st0.sigma_g == 0 and st0.sigma_c == 0
    st1 = G.score_stats([GoldScore(-1, -1, GENERATED), GoldScore(1, -3, GENERATED)])
    assert abs(st1.sigma_g - 1) < 1e-12 and abs(st1.sigma_c - 1) < 1e-12
    with pytest.raises(ValueError):
        G.score_stats([GoldScore(0, 0, GENERATED)])


def test_batch_stats_agree_with_list_stats():
    rng = np.random.default_rng(0)
    d_g, d_c = rng.uniform(0.01, 0.99, 50), rng.uniform(0.01, 0.99, 50)
    b = G.gold_batch(d_g, d_c, REAL)
    a, l = b.stats(), G.score_stats(b.to_scores())
    assert abs(a.sigma_g - l.sigma_g) < 1e-12 and abs(a.sigma_c - l.sigma_c) < 1e-12


@settings(max_examples=200, deadline=None)
@given(prob, prob)
def test_sign_convention(d_g, d_c):
    assert G.gold(d_g, d_c, REAL).conditional >= 0
    assert G.gold(d_g, d_c, GENERATED).conditional <= 0


@settings(max_examples=200, deadline=None)
@given(prob, prob, prob, st.sampled_from([REAL, GENERATED]))
def test_strictly_increasing_in_d_g(a, b, d_c, prov):
    if abs(a - b) < 1e-9:
        return
    lo, hi = sorted((a, b))
    assert G.gold(lo, d_c, prov).combined < G.gold(hi, d_c, prov).combined


@settings(max_examples=100, deadline=None)
@given(prob, prob, st.floats(0.01, 10), st.sampled_from([REAL, GENERATED]))
def test_balanced_reduces_to_raw_at_unit_ratio(d_g, d_c, s, prov):
    assert G.gold_balanced(d_g, d_c, prov, ScoreStats(s, s, 2)) == G.gold(d_g, d_c, prov)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(0, 1)))
def test_entropy_bounded(w):
    if w.sum() <= 0:
        return
    p = w / w.sum()
    h = G.entropy(p)
    assert -1e-12 <= h <= math.log(len(p)) + 1e-12


@settings(max_examples=100, deadline=None)
@given(prob)
def test_extreme_probabilities_stay_finite(d):
    for v in (0.0, 1.0, d):
        s = G.gold(v, v, REAL)
        assert math.isfinite(s.combined)


# -- exact-density oracle --------------------------------------------------------

def test_oracle_identical_mixtures_give_zero_marginal():
    mix = SyntheticMixture.circle()
    x, c = mix.sample(200, np.random.default_rng(0))
    true_gap, surrogate, marg, _ = G.gold_oracle_check(mix, mix, x, c)
    assert np.all(np.abs(marg) < 1e-12) and np.all(np.abs(true_gap) < 1e-12)


def test_oracle_double_density_gives_ln2():
    # same shape, model density halved by spreading half its mass far away
    comp = Component(np.zeros(2), np.eye(2), 1.0, 0)
    far = Component(np.array([1e3, 1e3]), np.eye(2), 0.5, 0)
    data = SyntheticMixture([comp])
    model = SyntheticMixture([Component(np.zeros(2), np.eye(2), 0.5, 0), far])
    _, _, marg, _ = G.gold_oracle_check(data, model, np.zeros((1, 2)), [0])
    assert abs(marg[0] - math.log(2)) < 1e-12


def test_oracle_surrogate_reproduces_log_ratio():
    data = SyntheticMixture.circle()
    model = SyntheticMixture.circle(radius=3.5, variance=0.3)
    x, c = data.sample(1000, np.random.default_rng(1))
    x = x + np.random.default_rng(2).normal(0, 0.5, x.shape)
    true_gap, surrogate, marg, exact = G.gold_oracle_check(data, model, x, c)
    assert np.max(np.abs(marg - exact)) < 1e-12
    assert np.max(np.abs(surrogate - true_gap)) < 1e-9


def test_bayes_marginal_stays_finite_in_tails():
    log_d, log_1md, logit = G.bayes_marginal([-800.0, 0.0], [0.0, -800.0])
    assert np.all(np.isfinite(logit)) and abs(logit[0] + 800) < 1e-9


def test_score_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    d_g, d_c = rng.uniform(0.05, 0.95, 6), rng.uniform(0.05, 0.95, 6)
    b = G.gold_batch(d_g, d_c, GENERATED, labels=[0, 1, 0, 1, 1, 0])
    G.write_scores_csv(tmp_path / "s.csv", b, d_g, d_c, sample_ids=range(10, 16))
    rows = G.read_scores_csv(tmp_path / "s.csv")
    assert [r["sample_id"] for r in rows] == list(range(10, 16))
    assert all(r["provenance"] == GENERATED for r in rows)
    assert np.array_equal([r["combined"] for r in rows], b.combined)
    assert np.array_equal([r["d_g"] for r in rows], d_g)
