"""Watermark evidence from an observed action sequence.

The sliding-window score checks, for every length-``w`` substring and every
channel, whether the action that follows lands in the keyed subset seeded by
that substring.  No absolute positions are involved, so the score survives
deletions and truncation.  The round-indexed score is the positional baseline
used for comparison.

Two evaluation routes exist: :func:`sliding_score` / :func:`round_indexed_score`
call :func:`seqwm.keyed_subset.sample_subset` directly and are the reference;
:func:`score_many` packs the same indicators once and evaluates them under
many keys with the compiled kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from ._fastkeyed import PackedIndicators
from .encoder import WatermarkParams, effective_subset_size, round_contexts, window_contexts
from .keyed_subset import SecretKey, SeedContext, sample_subset
from .records import ObservedSequence

DETECTORS = ("seqwm", "round_indexed")


class UndefinedSignalError(ValueError):
    """A statistic is undefined for this input (no indicators, zero variance)."""


class Indicator(NamedTuple):
    window: int
    context: SeedContext
    candidates: tuple[str, ...]
    target: int
    n_eff: int


@dataclass(frozen=True)
class ScoreResult:
    score: int
    indicator_count: int
    per_window_hits: tuple[int, ...]
    null_rates: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.score != sum(self.per_window_hits):
            raise ValueError("score must equal the sum of per-window hits")
        if not 0 <= self.score <= self.indicator_count:
            raise ValueError("score outside [0, indicator_count]")


def iter_indicators(obs: ObservedSequence, params: WatermarkParams,
                    method: str = "seqwm") -> Iterator[Indicator]:
    """Every scored (window, channel) indicator of ``obs`` in canonical order.

    For ``seqwm`` window ``i`` (0-based) is the transition into position
    ``i + w``; for ``round_indexed`` it is position ``i`` itself.  Steps with
    fewer than two candidates contribute no indicators.
    """
    actions = obs.actions
    if method == "seqwm":
        w = params.w
        for i in range(len(actions) - w):
            pos = i + w
            cands = obs.candidates_at(pos)
            n_eff = effective_subset_size(params, len(cands))
            if n_eff is None:
                continue
            target = cands.index(actions[pos])
            for ctx in window_contexts(actions[i:pos], params.m):
                yield Indicator(i, ctx, cands, target, n_eff)
    elif method == "round_indexed":
        for pos in range(len(actions)):
            cands = obs.candidates_at(pos)
            n_eff = effective_subset_size(params, len(cands))
            if n_eff is None:
                continue
            target = cands.index(actions[pos])
            for ctx in round_contexts(pos + 1, params.m):
                yield Indicator(pos, ctx, cands, target, n_eff)
    else:
        raise ValueError(f"unknown detector {method!r}")


def _window_count(obs: ObservedSequence, params: WatermarkParams, method: str) -> int:
    if method == "seqwm":
        return max(len(obs) - params.w, 0)
    return len(obs)


def _score(key: SecretKey, obs: ObservedSequence, params: WatermarkParams, method: str) -> ScoreResult:
    hits = [0] * _window_count(obs, params, method)
    count = 0
    rates = []
    for ind in iter_indicators(obs, params, method):
        count += 1
        rates.append(ind.n_eff / len(ind.candidates))
        if ind.candidates[ind.target] in sample_subset(key, ind.context, ind.candidates, ind.n_eff):
            hits[ind.window] += 1
    return ScoreResult(sum(hits), count, tuple(hits), tuple(rates))


def sliding_score(key: SecretKey, obs: ObservedSequence, params: WatermarkParams) -> ScoreResult:
    return _score(key, obs, params, "seqwm")


def round_indexed_score(key: SecretKey, obs: ObservedSequence, params: WatermarkParams) -> ScoreResult:
    return _score(key, obs, params, "round_indexed")


def score(key: SecretKey, obs: ObservedSequence, params: WatermarkParams,
          method: str = "seqwm") -> ScoreResult:
    return _score(key, obs, params, method)


def pack(obs: ObservedSequence, params: WatermarkParams, method: str = "seqwm") -> PackedIndicators:
    inds = list(iter_indicators(obs, params, method))
    return PackedIndicators(
        [i.context.payload for i in inds],
        [len(i.candidates) for i in inds],
        [i.target for i in inds],
        [i.n_eff for i in inds],
    )


def score_many(keys: Sequence[SecretKey], obs: ObservedSequence, params: WatermarkParams,
               method: str = "seqwm", packed: PackedIndicators | None = None) -> np.ndarray:
    """Score totals of ``obs`` under each key (compiled route)."""
    if packed is None:
        packed = pack(obs, params, method)
    return packed.scores([k.data for k in keys])


def null_rates(obs: ObservedSequence, params: WatermarkParams, method: str = "seqwm") -> list[float]:
    """Per-indicator null hit probability ``n_eff / A_t``."""
    return [i.n_eff / len(i.candidates) for i in iter_indicators(obs, params, method)]


def hit_rate(result: ScoreResult) -> float:
    """Fraction of all scored indicators that hit."""
    if result.indicator_count == 0:
        raise UndefinedSignalError("no scored indicators")
    return result.score / result.indicator_count


def step_hit_fraction(result: ScoreResult) -> float:
    """Secondary metric: fraction of scored windows with at least one channel hit."""
    if not result.per_window_hits:
        raise UndefinedSignalError("no scored windows")
    return sum(1 for h in result.per_window_hits if h > 0) / len(result.per_window_hits)


def z_score(result: ScoreResult, p0_per_indicator: Sequence[float] | None = None) -> float:
    """Reference binomial z statistic.

    It ignores dependence between indicators and is not a valid test on its
    own; the calibrated p-value is the decision statistic.
    """
    p0 = np.asarray(result.null_rates if p0_per_indicator is None else p0_per_indicator, dtype=float)
    if len(p0) != result.indicator_count:
        raise ValueError("need one null rate per indicator")
    var = math.fsum(p0 * (1 - p0))
    if var <= 0:
        raise UndefinedSignalError("zero null variance")
    return (result.score - math.fsum(p0)) / math.sqrt(var)
