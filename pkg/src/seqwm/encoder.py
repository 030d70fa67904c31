"""History-conditioned multi-channel embedding.

At step ``t > w`` the encoder derives ``m`` keyed subsets from the last ``w``
actions (one per channel index), counts for every candidate how many subsets
contain it, and tilts the elicited distribution by ``exp(gamma * count / m)``
after flooring it at ``delta``.  The first ``w`` steps are sampled untouched.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Optional, Sequence

import numpy as np

from .keyed_subset import (
    InvalidParameterError,
    SecretKey,
    SeedContext,
    encode_context,
    encode_round_channel,
    sample_subset,
)
from .policy import PolicySpec, elicit, sample_index
from .records import MODE_GLOBAL, MODE_PER_STEP, StepRecord, Trajectory

METHODS = ("seqwm", "round_indexed", "none")


@dataclass(frozen=True)
class WatermarkParams:
    """Embedding/detection hyperparameters.  Defaults are the headline configuration."""

    w: int = 3
    m: int = 8
    n: int = 3
    n_min: int = 2
    gamma: float = 2.0
    delta: float = 0.2
    key: Optional[SecretKey] = None

    def __post_init__(self) -> None:
        if self.w < 1 or self.m < 1:
            raise InvalidParameterError("w and m must be >= 1")
        if not 1 <= self.n_min <= self.n:
            raise InvalidParameterError("need 1 <= n_min <= n")
        if self.gamma < 0:
            raise InvalidParameterError("gamma must be non-negative")
        if not 0 <= self.delta < 1:
            raise InvalidParameterError("delta must lie in [0, 1)")

    def echo(self) -> dict[str, Any]:
        """Parameters without key material, for logs and reports."""
        out = asdict(self)
        out.pop("key")
        return out

    def with_key(self, key: SecretKey) -> WatermarkParams:
        return WatermarkParams(self.w, self.m, self.n, self.n_min, self.gamma, self.delta, key)

    def replace(self, **changes: Any) -> WatermarkParams:
        fields = {**asdict(self), "key": self.key, **changes}
        return WatermarkParams(**fields)


@dataclass(frozen=True)
class StepEncoding:
    subsets: tuple[frozenset, ...]
    scores: np.ndarray
    tilted: np.ndarray
    n_eff: int


def effective_subset_size(params: WatermarkParams, size: int) -> Optional[int]:
    """Subset size for a step with ``size`` candidates, or ``None`` to skip it.

    Clipped so at least one candidate is always outside the subset.
    """
    if size < 1:
        raise InvalidParameterError("candidate set must be non-empty")
    if size < 2:
        return None
    n_eff = min(params.n, size - 1)
    return max(n_eff, min(params.n_min, size - 1))


def _require_key(params: WatermarkParams) -> SecretKey:
    if params.key is None:
        raise InvalidParameterError("watermark params carry no secret key")
    return params.key


def window_contexts(window: Sequence[str], m: int) -> list[SeedContext]:
    return [encode_context(window, j) for j in range(1, m + 1)]


def round_contexts(t: int, m: int) -> list[SeedContext]:
    return [encode_round_channel(t, j) for j in range(1, m + 1)]


def _subsets(key: SecretKey, contexts: Sequence[SeedContext], candidates: Sequence[str],
             n_eff: int) -> list[frozenset]:
    return [frozenset(sample_subset(key, ctx, candidates, n_eff)) for ctx in contexts]


def guided_subsets(params: WatermarkParams, window: Sequence[str],
                   candidates: Sequence[str]) -> list[frozenset]:
    """The ``m`` keyed subsets seeded by ``window`` (channels ``1..m``)."""
    if len(window) != params.w:
        raise InvalidParameterError(f"window has length {len(window)}, expected w={params.w}")
    n_eff = effective_subset_size(params, len(candidates))
    if n_eff is None:
        raise InvalidParameterError("need at least two candidates to build guided subsets")
    return _subsets(_require_key(params), window_contexts(window, params.m), candidates, n_eff)


def round_subsets(params: WatermarkParams, t: int, candidates: Sequence[str]) -> list[frozenset]:
    """Baseline subsets keyed by absolute step index ``t`` instead of history."""
    n_eff = effective_subset_size(params, len(candidates))
    if n_eff is None:
        raise InvalidParameterError("need at least two candidates to build guided subsets")
    return _subsets(_require_key(params), round_contexts(t, params.m), candidates, n_eff)


def channel_score(action: str, subsets: Sequence[frozenset]) -> int:
    return sum(1 for s in subsets if action in s)


def tilt(probs: Sequence[float], scores: Sequence[int], gamma: float, m: int,
         delta: float = 0.0) -> np.ndarray:
    """Floor at ``delta``, multiply by ``exp(gamma * score / m)``, renormalize."""
    q = np.maximum(np.asarray(probs, dtype=float), delta)
    logits = gamma * np.asarray(scores, dtype=float) / m
    weights = q * np.exp(logits - logits.max())
    return weights / weights.sum()


def encode_step(params: WatermarkParams, probs: np.ndarray, candidates: Sequence[str],
                contexts: Sequence[SeedContext]) -> Optional[StepEncoding]:
    n_eff = effective_subset_size(params, len(candidates))
    if n_eff is None:
        return None
    subsets = _subsets(_require_key(params), contexts, candidates, n_eff)
    scores = np.array([channel_score(b, subsets) for b in candidates])
    return StepEncoding(tuple(subsets), scores, tilt(probs, scores, params.gamma, params.m, params.delta), n_eff)


def encode_trajectory(params: WatermarkParams, policy: PolicySpec, T: int, rng: np.random.Generator,
                      method: str = "seqwm") -> Trajectory:
    """Generate ``T`` steps from ``policy``, watermarking per ``method``.

    ``seqwm`` seeds by the last ``w`` actions and leaves the first ``w`` steps
    untouched; ``round_indexed`` seeds every step by its index; ``none``
    samples the policy as is.  Every step consumes exactly one uniform from
    ``rng`` regardless of method.
    """
    if T < 1:
        raise InvalidParameterError("horizon T must be >= 1")
    if method not in METHODS:
        raise InvalidParameterError(f"unknown method {method!r}")
    if method != "none":
        _require_key(params)
    history: list[str] = []
    steps: list[StepRecord] = []
    for t in range(1, T + 1):
        elicited = elicit(policy, history)
        candidates = elicited.candidates
        enc = None
        if method == "seqwm" and len(history) >= params.w:
            enc = encode_step(params, elicited.probs, candidates, window_contexts(history[-params.w:], params.m))
        elif method == "round_indexed":
            enc = encode_step(params, elicited.probs, candidates, round_contexts(t, params.m))
        probs = elicited.probs if enc is None else enc.tilted
        action = candidates[sample_index(probs, rng)]
        history.append(action)
        steps.append(StepRecord(
            t=t,
            action=action,
            candidates=candidates,
            elicited_probs=elicited.probs,
            tilted_probs=None if enc is None else enc.tilted,
            watermarked=enc is not None,
            n_eff=None if enc is None else enc.n_eff,
            scores=None if enc is None else tuple(int(s) for s in enc.scores),
        ))
    mode = MODE_PER_STEP if policy.variable_candidates else MODE_GLOBAL
    return Trajectory(
        steps=steps,
        mode=mode,
        vocabulary=policy.vocabulary.actions if mode == MODE_GLOBAL else None,
        method=method,
        params=params.echo(),
        policy=policy.to_dict(),
    )
