import math

import numpy as np
import pytest

from seqwm.analysis import deletion_bound
from seqwm.attacks import delete_random
from seqwm.detector import (
    ScoreResult,
    UndefinedSignalError,
    hit_rate,
    round_indexed_score,
    score_many,
    sliding_score,
    step_hit_fraction,
    z_score,
)
from seqwm.encoder import WatermarkParams, encode_trajectory
from seqwm.keyed_subset import SecretKey, encode_context, encode_round_channel, sample_subset
from seqwm.policy import make_rng
from seqwm.records import IncompleteLogError, ObservedSequence

ABC = ("a", "b", "c")


def test_brute_force_small_case():
    key = SecretKey(bytes(32))
    params = WatermarkParams(w=2, m=2, n=1, n_min=1)
    seq = ["a", "c", "b", "b", "a"]
    expected = 0
    for start in range(3):
        nxt = seq[start + 2]
        for ch in (1, 2):
            sub = sample_subset(key, encode_context(seq[start:start + 2], ch), ABC, 1)
            expected += nxt in sub
    obs = ObservedSequence(seq, vocabulary=ABC)
    res = sliding_score(key, obs, params)
    assert res.score == expected
    assert res.indicator_count == 6
    assert len(res.per_window_hits) == 3
    assert score_many([key], obs, params)[0] == expected


def test_round_indexed_brute_force():
    key = SecretKey(bytes(range(32)))
    params = WatermarkParams(m=3, n=2)
    seq = ["b", "a", "c", "c"]
    expected = sum(
        seq[t - 1] in sample_subset(key, encode_round_channel(t, j), ABC, 2)
        for t in range(1, 5) for j in (1, 2, 3)
    )
    res = round_indexed_score(key, ObservedSequence(seq, vocabulary=ABC), params)
    assert res.score == expected and res.indicator_count == 12


def test_short_sequences_score_zero(key):
    params = WatermarkParams()
    res = sliding_score(key, ObservedSequence(["a", "b", "c"], vocabulary=ABC), params)
    assert (res.score, res.indicator_count) == (0, 0)
    with pytest.raises(UndefinedSignalError):
        hit_rate(res)
    with pytest.raises(UndefinedSignalError):
        step_hit_fraction(res)


def test_incomplete_log(key):
    obs = ObservedSequence(["a", "b", "c", "a", "b"],
                           candidates=[ABC, ABC, ABC, ABC, None])
    with pytest.raises(IncompleteLogError):
        sliding_score(key, obs, WatermarkParams())


def test_null_mean(uniform10):
    # unwatermarked uniform sequences: E[S] = 100 * 8 * 0.3 = 240
    rng = make_rng(11)
    params = WatermarkParams()
    scores = []
    for _ in range(200):
        obs = encode_trajectory(params, uniform10, 103, rng, method="none").observed()
        scores.append(score_many([SecretKey(rng.bytes(32))], obs, params)[0])
    sigma = math.sqrt(800 * 0.21 / 200)
    assert abs(np.mean(scores) - 240) < 3 * sigma
    res = sliding_score(SecretKey(rng.bytes(32)), obs, params)
    assert abs(hit_rate(res) - 0.3) < 0.1


def test_z_score_examples():
    res = ScoreResult(296, 800, (296,), (0.3,) * 800)
    assert z_score(res) == pytest.approx(56 / math.sqrt(168), rel=1e-12)
    assert z_score(res) == pytest.approx(4.32, abs=0.005)
    assert z_score(ScoreResult(240, 800, (240,), (0.3,) * 800)) == 0.0
    with pytest.raises(UndefinedSignalError):
        z_score(ScoreResult(0, 2, (0,), (0.0, 0.0)))


def test_hit_rate_extremes():
    assert hit_rate(ScoreResult(8, 8, (4, 4))) == 1.0
    assert hit_rate(ScoreResult(0, 8, (0, 0))) == 0.0
    with pytest.raises(ValueError):
        ScoreResult(3, 8, (1, 1))


def test_watermarked_score_elevated(key, uniform10):
    params = WatermarkParams(key=key)
    obs = encode_trajectory(params, uniform10, 103, make_rng(12)).observed()
    assert z_score(sliding_score(key, obs, params)) > 2


def test_round_indexed_deletion_drops_to_null(key, uniform10):
    params = WatermarkParams(key=key)
    rng = make_rng(13)
    clean, shifted = [], []
    for _ in range(40):
        obs = encode_trajectory(params, uniform10, 160, rng, method="round_indexed").observed()
        clean.append(z_score(round_indexed_score(key, obs, params)))
        shifted.append(z_score(round_indexed_score(key, obs.select(range(1, len(obs))), params)))
    # first-order expectation is about 4.1 at this length
    assert np.mean(clean) > 3
    assert abs(np.mean(shifted)) < 3 / math.sqrt(40) * 1.5


def test_deletion_bound_holds(key, uniform10):
    params = WatermarkParams(key=key)
    rng = make_rng(14)
    for _ in range(100):
        obs = encode_trajectory(params, uniform10, 100, rng).observed()
        s_clean = sliding_score(key, obs, params).score
        damaged, gone = delete_random(obs, 0.2, rng)
        assert len(gone) == 20
        s_after = score_many([key], damaged, params)[0]
        assert s_after >= s_clean - deletion_bound(20, params.w, params.m)


def test_routes_agree_per_step(key):
    from seqwm.policy import ActionVocabulary, PolicySpec
    policy = PolicySpec("uniform", ActionVocabulary.numbered(7), variable_candidates=True, rng_seed=5)
    params = WatermarkParams(key=key)
    obs = encode_trajectory(params, policy, 60, make_rng(15)).observed()
    keys = [key, SecretKey(bytes(32))]
    fast = score_many(keys, obs, params)
    assert list(fast) == [sliding_score(k, obs, params).score for k in keys]
    fast_ri = score_many(keys, obs, params, method="round_indexed")
    assert list(fast_ri) == [round_indexed_score(k, obs, params).score for k in keys]
