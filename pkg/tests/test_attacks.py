import math

import numpy as np
import pytest

from seqwm.attacks import (
    AttackSpec,
    UnsupportedModeError,
    delete_random,
    substitute_random,
    truncate,
)
from seqwm.detector import score_many, sliding_score
from seqwm.encoder import WatermarkParams, encode_trajectory
from seqwm.policy import make_rng
from seqwm.records import ObservedSequence


@pytest.fixture
def marked(key, uniform10):
    params = WatermarkParams(key=key)
    return params, encode_trajectory(params, uniform10, 100, make_rng(21)).observed()


def test_delete_edges(marked, rng):
    _, obs = marked
    same, gone = delete_random(obs, 0.0, rng)
    assert same == obs and gone == []
    empty, gone = delete_random(obs, 1.0, rng)
    assert len(empty) == 0 and gone == list(range(100))
    with pytest.raises(ValueError):
        delete_random(obs, 1.5, rng)


def test_delete_keeps_order(marked, rng):
    _, obs = marked
    out, gone = delete_random(obs, 0.2, rng)
    assert len(gone) == 20 and gone == sorted(gone)
    kept = [a for i, a in enumerate(obs.actions) if i not in set(gone)]
    assert list(out.actions) == kept


def test_delete_carries_candidates(rng):
    obs = ObservedSequence(["a", "b", "c"], candidates=[("a", "x"), ("b", "y"), ("c", "z")])
    out, gone = delete_random(obs, 0.34, rng)
    for a, c in zip(out.actions, out.candidates):
        assert a == c[0]


def test_truncate(marked, key):
    params, obs = marked
    assert truncate(obs, 100) == obs
    assert sliding_score(key, truncate(obs, params.w), params).score == 0
    with pytest.raises(ValueError):
        truncate(obs, 101)


def test_truncation_scales_linearly(key, uniform10):
    params = WatermarkParams(key=key)
    rng = make_rng(22)
    full, half = [], []
    for _ in range(60):
        obs = encode_trajectory(params, uniform10, 103, rng).observed()
        full.append(score_many([key], obs, params)[0])
        half.append(score_many([key], truncate(obs, 53), params)[0])
    assert np.mean(half) / np.mean(full) == pytest.approx(0.5, abs=0.05)


def test_substitute_rules(marked, rng):
    _, obs = marked
    assert substitute_random(obs, 0.0, rng)[0] == obs
    out, pos = substitute_random(obs, 0.3, rng)
    assert len(pos) == 30
    for i in range(100):
        assert (out.actions[i] != obs.actions[i]) == (i in pos)


def test_substitute_needs_global_vocab(rng):
    obs = ObservedSequence(["a"], candidates=[("a", "b")])
    with pytest.raises(UnsupportedModeError):
        substitute_random(obs, 0.5, rng)


def test_single_substitution_touches_bounded_indicators(marked, rng):
    params, obs = marked
    key = params.key
    base = sliding_score(key, obs, params).per_window_hits
    for _ in range(30):
        out, (pos,) = substitute_random(obs, 0.01, rng)
        hits = sliding_score(key, out, params).per_window_hits
        changed = [i for i, (a, b) in enumerate(zip(base, hits)) if a != b]
        # position pos appears in windows pos-w..pos (as context or target)
        assert all(pos - params.w <= i <= pos for i in changed)
        assert sum(abs(a - b) for a, b in zip(base, hits)) <= (params.w + 1) * params.m


def test_full_substitution_looks_null(key, uniform10):
    params = WatermarkParams(key=key)
    rng = make_rng(23)
    scores = []
    for _ in range(150):
        obs = encode_trajectory(params, uniform10, 103, rng).observed()
        out, _ = substitute_random(obs, 1.0, rng)
        scores.append(score_many([key], out, params)[0])
    # the replacement draw excludes the original action, which leaves a small
    # residual anti-correlation; stay within a few standard errors of 240
    assert abs(np.mean(scores) - 240) < 4 * math.sqrt(800 * 0.21 * 3 / 150)


def test_attack_spec():
    spec = AttackSpec.from_dict({"type": "delete", "rho": 0.1, "seed": 4})
    assert spec.to_dict() == {"type": "delete", "rho": 0.1, "seed": 4}
    with pytest.raises(ValueError):
        AttackSpec("truncate")
    with pytest.raises(ValueError):
        AttackSpec("explode", rho=0.1)
    obs = ObservedSequence(list("abcabcabca"), vocabulary=("a", "b", "c"))
    assert spec.apply(obs) == spec.apply(obs)
    assert len(AttackSpec("truncate", keep=4).apply(obs)) == 4
