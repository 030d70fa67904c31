"""Random-key calibrated detection.

The observation is re-scored under ``M`` independently drawn keys.  Under the
null (the sequence does not depend on the true key) the true-key score is
exchangeable with the wrong-key scores, so its rank is uniform and the
empirical p-value is valid at every finite ``M`` and sequence length, no
matter how the actions depend on each other.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .detector import (
    ScoreResult,
    UndefinedSignalError,
    hit_rate,
    pack,
    score,
    z_score,
)
from .encoder import WatermarkParams
from .keyed_subset import KEY_BYTES, SecretKey
from .records import ObservedSequence

ELIDE_THRESHOLD = 5000


@dataclass
class DetectionReport:
    s_true: int
    null_scores: list[int]
    p_value: float
    z_reference: Optional[float]
    hit_rate: Optional[float]
    decision: bool
    params_echo: dict[str, Any]
    M: int
    alpha: float
    method: str = "seqwm"
    indicator_count: int = 0
    wall_time_s: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self, elide_above: int = ELIDE_THRESHOLD) -> dict[str, Any]:
        out = {
            "s_true": int(self.s_true),
            "p_value": self.p_value,
            "z_reference": self.z_reference,
            "hit_rate": self.hit_rate,
            "decision": self.decision,
            "M": self.M,
            "alpha": self.alpha,
            "method": self.method,
            "indicator_count": self.indicator_count,
            "params": self.params_echo,
            "wall_time_s": self.wall_time_s,
        }
        nulls = np.asarray(self.null_scores)
        if len(nulls) > elide_above:
            qs = [0.0, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 1.0]
            out["null_scores"] = None
            out["null_summary"] = {
                "mean": float(nulls.mean()),
                "std": float(nulls.std(ddof=1)),
                "quantiles": {str(q): float(np.quantile(nulls, q)) for q in qs},
            }
        else:
            out["null_scores"] = [int(s) for s in nulls]
        out.update(self.extra)
        return out


def p_value(s_true: int, null_scores: Sequence[int]) -> float:
    """``(1 + #{null >= s_true}) / (M + 1)``; ties count against detection."""
    nulls = np.asarray(null_scores)
    if nulls.size == 0:
        raise ValueError("need at least one null score")
    return float((1 + int(np.count_nonzero(nulls >= s_true))) / (nulls.size + 1))


def draw_wrong_keys(rng: np.random.Generator, M: int, exclude: SecretKey | None = None) -> list[SecretKey]:
    keys = []
    while len(keys) < M:
        key = SecretKey(rng.bytes(KEY_BYTES))
        if exclude is not None and key == exclude:
            continue
        keys.append(key)
    return keys


def _chunked_scores(args):
    keys, obs, params, method = args
    return pack(obs, params, method).scores([k.data for k in keys])


def null_scores(keys: Sequence[SecretKey], obs: ObservedSequence, params: WatermarkParams,
                method: str = "seqwm", jobs: int = 1) -> np.ndarray:
    """Scores of ``obs`` under each key; the result does not depend on ``jobs``."""
    if jobs <= 1 or len(keys) < 2 * jobs:
        return pack(obs, params, method).scores([k.data for k in keys])
    chunks = np.array_split(np.arange(len(keys)), jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = pool.map(_chunked_scores, [([keys[i] for i in c], obs, params, method) for c in chunks])
        return np.concatenate(list(parts))


ScoreFn = Callable[[SecretKey, ObservedSequence], float]


def calibrate(key_true: SecretKey, obs: ObservedSequence, params: WatermarkParams, M: int = 1000,
              alpha: float = 0.01, rng: np.random.Generator | None = None, method: str = "seqwm",
              score_fn: ScoreFn | None = None, jobs: int = 1) -> DetectionReport:
    """Random-key calibrated detection of ``obs`` under ``key_true``.

    ``score_fn`` swaps in any other statistic of ``(key, observation)``; the
    p-value contract does not depend on which statistic is used.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    rng = np.random.default_rng() if rng is None else rng
    started = time.perf_counter()
    keys = draw_wrong_keys(rng, M, exclude=key_true)
    z_ref = rate = None
    if score_fn is None:
        packed = pack(obs, params, method)
        s_true = int(packed.scores([key_true.data])[0])
        if jobs > 1:
            nulls = null_scores(keys, obs, params, method, jobs)
        else:
            nulls = packed.scores([k.data for k in keys])
        n_ind = len(packed)
        if n_ind:
            rates = packed.n_effs / packed.sizes
            result = ScoreResult(s_true, n_ind, (s_true,), tuple(rates))
            rate = hit_rate(result)
            try:
                z_ref = z_score(result)
            except UndefinedSignalError:
                z_ref = None
    else:
        s_true = score_fn(key_true, obs)
        nulls = np.array([score_fn(k, obs) for k in keys])
        n_ind = 0
    p = p_value(s_true, nulls)
    return DetectionReport(
        s_true=s_true,
        null_scores=[int(s) if float(s).is_integer() else float(s) for s in nulls],
        p_value=p,
        z_reference=z_ref,
        hit_rate=rate,
        decision=p < alpha,
        params_echo=params.echo(),
        M=M,
        alpha=alpha,
        method=method,
        indicator_count=n_ind,
        wall_time_s=time.perf_counter() - started,
    )


def reference_score_fn(params: WatermarkParams, method: str = "seqwm") -> ScoreFn:
    """Score function backed by the pure-Python reference route."""
    return lambda key, obs: score(key, obs, params, method).score


@dataclass
class RankUniformityReport:
    ranks: np.ndarray
    chi2: float
    p_value: float
    passed: bool
    M: int
    significance: float


def true_key_rank(s_true: float, nulls: Sequence[float], rng: np.random.Generator) -> int:
    """Rank of ``s_true`` in ``{s_true} ∪ nulls`` (1 = largest), ties broken at random."""
    nulls = np.asarray(nulls)
    above = int(np.count_nonzero(nulls > s_true))
    ties = int(np.count_nonzero(nulls == s_true))
    return 1 + above + int(rng.integers(0, ties + 1))


def rank_uniformity_check(observations: Iterable[tuple[SecretKey, ObservedSequence]],
                          params: WatermarkParams, M: int, rng: np.random.Generator,
                          method: str = "seqwm", significance: float = 0.01,
                          n_bins: int | None = None) -> RankUniformityReport:
    """Chi-square test that true-key ranks are uniform on ``{1..M+1}``.

    ``observations`` yields ``(detector_key, sequence)`` pairs.  Ranks are
    binned into ``n_bins`` equal-width groups when ``M + 1`` is large relative
    to the number of trials.
    """
    ranks = []
    for key, obs in observations:
        packed = pack(obs, params, method)
        keys = draw_wrong_keys(rng, M, exclude=key)
        all_scores = packed.scores([key.data] + [k.data for k in keys])
        ranks.append(true_key_rank(all_scores[0], all_scores[1:], rng))
    ranks = np.asarray(ranks)
    levels = M + 1
    if n_bins is None:
        n_bins = levels if len(ranks) >= 5 * levels else max(2, len(ranks) // 5)
    while levels % n_bins:
        n_bins -= 1
    counts = np.bincount((ranks - 1) * n_bins // levels, minlength=n_bins)
    chi2, p = stats.chisquare(counts)
    return RankUniformityReport(ranks, float(chi2), float(p), bool(p >= significance), M, significance)
