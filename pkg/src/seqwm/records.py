"""Trajectory and observation records shared by the encoder, detector and I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .keyed_subset import validate_action

MODE_GLOBAL = "global-vocab"
MODE_PER_STEP = "per-step"


class ObservationError(ValueError):
    """An observed sequence is inconsistent with its candidate source."""


class IncompleteLogError(ObservationError):
    """A scored step has no logged candidate set."""


@dataclass(frozen=True)
class ObservedSequence:
    """Actions seen by the verifier plus where their candidate sets come from.

    Exactly one of ``vocabulary`` (global mode) or ``candidates`` (one entry
    per step, ``None`` where the log is missing) is set.
    """

    actions: tuple[str, ...]
    vocabulary: Optional[tuple[str, ...]] = None
    candidates: Optional[tuple[Optional[tuple[str, ...]], ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(self.actions))
        if (self.vocabulary is None) == (self.candidates is None):
            raise ObservationError("give exactly one of vocabulary or per-step candidates")
        for a in self.actions:
            validate_action(a)
        if self.vocabulary is not None:
            vocab = tuple(self.vocabulary)
            object.__setattr__(self, "vocabulary", vocab)
            known = set(vocab)
            if len(known) != len(vocab):
                raise ObservationError("vocabulary contains duplicates")
            for i, a in enumerate(self.actions):
                if a not in known:
                    raise ObservationError(f"action {a!r} at position {i + 1} not in vocabulary")
        else:
            cands = tuple(None if c is None else tuple(c) for c in self.candidates)
            object.__setattr__(self, "candidates", cands)
            if len(cands) != len(self.actions):
                raise ObservationError("need one candidate entry per action")
            for i, (a, c) in enumerate(zip(self.actions, cands)):
                if c is None:
                    continue
                if len(set(c)) != len(c):
                    raise ObservationError(f"duplicate candidates at position {i + 1}")
                if a not in c:
                    raise ObservationError(f"action {a!r} at position {i + 1} not among its candidates")

    @property
    def mode(self) -> str:
        return MODE_GLOBAL if self.vocabulary is not None else MODE_PER_STEP

    def __len__(self) -> int:
        return len(self.actions)

    def candidates_at(self, pos: int) -> tuple[str, ...]:
        """Candidate set of the action at 0-based ``pos``."""
        if self.vocabulary is not None:
            return self.vocabulary
        cands = self.candidates[pos]
        if cands is None:
            raise IncompleteLogError(f"no logged candidate set for step {pos + 1}")
        return cands

    def select(self, keep: Sequence[int]) -> ObservedSequence:
        """Sub-sequence at the given 0-based positions, in the given order."""
        actions = tuple(self.actions[i] for i in keep)
        if self.vocabulary is not None:
            return ObservedSequence(actions, vocabulary=self.vocabulary)
        return ObservedSequence(actions, candidates=tuple(self.candidates[i] for i in keep))

    def replace_actions(self, actions: Sequence[str]) -> ObservedSequence:
        if self.vocabulary is not None:
            return ObservedSequence(tuple(actions), vocabulary=self.vocabulary)
        return ObservedSequence(tuple(actions), candidates=self.candidates)


@dataclass
class StepRecord:
    t: int
    action: str
    candidates: tuple[str, ...]
    elicited_probs: Optional[np.ndarray] = None
    tilted_probs: Optional[np.ndarray] = None
    watermarked: bool = False
    n_eff: Optional[int] = None
    scores: Optional[tuple[int, ...]] = None


@dataclass
class Trajectory:
    """A generated run: step records plus the metadata needed to replay detection."""

    steps: list[StepRecord]
    mode: str = MODE_GLOBAL
    vocabulary: Optional[tuple[str, ...]] = None
    method: str = "seqwm"
    params: dict[str, Any] = field(default_factory=dict)
    policy: Optional[dict[str, Any]] = None
    seed: Optional[Any] = None

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(s.action for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def observed(self) -> ObservedSequence:
        if self.mode == MODE_GLOBAL:
            return ObservedSequence(self.actions, vocabulary=self.vocabulary)
        return ObservedSequence(self.actions, candidates=tuple(s.candidates for s in self.steps))
