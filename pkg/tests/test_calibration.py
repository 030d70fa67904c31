import math

import numpy as np
import pytest

from seqwm.calibration import (
    calibrate,
    draw_wrong_keys,
    null_scores,
    p_value,
    rank_uniformity_check,
    reference_score_fn,
    true_key_rank,
)
from seqwm.encoder import WatermarkParams, encode_trajectory
from seqwm.keyed_subset import SecretKey
from seqwm.policy import ActionVocabulary, PolicySpec, make_rng, random_transition_matrix


def markov10(seed=0):
    vocab = ActionVocabulary.numbered(10)
    return PolicySpec("markov_order1", vocab, transition_matrix=random_transition_matrix(10, 0.5, seed))


def test_p_value_examples():
    assert p_value(10, [3, 4, 5]) == 0.25
    assert p_value(4, [4, 4, 4]) == 1.0
    assert p_value(2, [1]) == 0.5
    assert p_value(0, [1, 2]) == 1.0
    assert p_value(1000, list(range(1000))) == pytest.approx(1 / 1001)
    with pytest.raises(ValueError):
        p_value(1, [])


def test_wrong_keys_distinct_and_seeded(key):
    a = draw_wrong_keys(make_rng(1), 50, exclude=key)
    b = draw_wrong_keys(make_rng(1), 50, exclude=key)
    assert a == b and key not in a and len(set(k.data for k in a)) == 50


def test_calibrate_floor_and_ceiling(key):
    obs_seq = encode_trajectory(WatermarkParams(key=key), markov10(), 103, make_rng(2)).observed()
    params = WatermarkParams()
    hi = calibrate(key, obs_seq, params, M=1000, rng=make_rng(3), score_fn=lambda k, o: 100 if k == key else 1)
    assert hi.p_value == pytest.approx(1 / 1001) and hi.decision
    lo = calibrate(key, obs_seq, params, M=20, rng=make_rng(3), score_fn=lambda k, o: 0 if k == key else 1)
    assert lo.p_value == 1.0 and not lo.decision


def test_calibrate_routes_agree(key, uniform10):
    params = WatermarkParams(key=key)
    obs = encode_trajectory(params, uniform10, 40, make_rng(4)).observed()
    fast = calibrate(key, obs, params, M=30, rng=make_rng(5))
    slow = calibrate(key, obs, params, M=30, rng=make_rng(5), score_fn=reference_score_fn(params))
    assert fast.s_true == slow.s_true
    assert fast.null_scores == slow.null_scores
    assert fast.p_value == slow.p_value


def test_jobs_do_not_change_scores(key, uniform10):
    params = WatermarkParams()
    obs = encode_trajectory(params.with_key(key), uniform10, 50, make_rng(6)).observed()
    keys = draw_wrong_keys(make_rng(7), 40)
    assert np.array_equal(null_scores(keys, obs, params, jobs=1), null_scores(keys, obs, params, jobs=2))


def test_report_serialization(key, uniform10):
    params = WatermarkParams(key=key)
    obs = encode_trajectory(params, uniform10, 30, make_rng(8)).observed()
    rep = calibrate(key, obs, params, M=50, rng=make_rng(9))
    d = rep.to_dict()
    assert len(d["null_scores"]) == 50 and "key" not in d["params"]
    elided = rep.to_dict(elide_above=10)
    assert elided["null_scores"] is None and "quantiles" in elided["null_summary"]


def test_true_key_rank_ties_randomized():
    rng = make_rng(10)
    ranks = [true_key_rank(5, [5, 5, 5], rng) for _ in range(4000)]
    counts = np.bincount(ranks, minlength=5)[1:]
    assert np.all(np.abs(counts - 1000) < 4 * math.sqrt(1000 * 0.75))


def test_rank_uniform_on_null():
    rng = make_rng(11)
    policy = markov10(1)
    params = WatermarkParams()

    def gen():
        for _ in range(2000):
            obs = encode_trajectory(params, policy, 40, rng, method="none").observed()
            yield SecretKey(rng.bytes(32)), obs

    rep = rank_uniformity_check(gen(), params, M=20, rng=rng)
    assert rep.passed, rep.p_value


def test_rank_uniform_with_other_key(uniform10):
    rng = make_rng(12)
    params = WatermarkParams()

    def gen():
        for _ in range(600):
            embed_key = SecretKey(rng.bytes(32))
            obs = encode_trajectory(params.with_key(embed_key), uniform10, 40, rng).observed()
            yield SecretKey(rng.bytes(32)), obs

    assert rank_uniformity_check(gen(), params, M=20, rng=rng).passed


def test_rank_piles_up_under_true_key(uniform10):
    rng = make_rng(13)
    params = WatermarkParams()

    def gen():
        for _ in range(200):
            k = SecretKey(rng.bytes(32))
            yield k, encode_trajectory(params.with_key(k), uniform10, 103, rng).observed()

    rep = rank_uniformity_check(gen(), params, M=20, rng=rng)
    assert not rep.passed
    assert np.median(rep.ranks) <= 2


def test_fpr_at_alpha(uniform10):
    rng = make_rng(14)
    params = WatermarkParams()
    ps = []
    for _ in range(400):
        obs = encode_trajectory(params, uniform10, 60, rng, method="none").observed()
        ps.append(calibrate(SecretKey(rng.bytes(32)), obs, params, M=99, rng=rng).p_value)
    ps = np.array(ps)
    assert np.mean(ps <= 0.05) <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 400)


def test_argument_validation(key, uniform10):
    obs = encode_trajectory(WatermarkParams(), uniform10, 10, make_rng(0), method="none").observed()
    with pytest.raises(ValueError):
        calibrate(key, obs, WatermarkParams(), M=0)
    with pytest.raises(ValueError):
        calibrate(key, obs, WatermarkParams(), alpha=1.5)
