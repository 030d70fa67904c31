"""Synthetic agent policies standing in for an LLM's elicited action distribution.

All randomness goes through :class:`numpy.random.Generator` backed by PCG64,
which is seedable and produces identical streams on every platform numpy
supports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .keyed_subset import validate_action

POLICY_KINDS = ("uniform", "dirichlet_random", "markov_order1")


class PolicyError(ValueError):
    """Invalid policy specification or history."""


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    """The run RNG: PCG64 seeded through numpy's SeedSequence."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ActionVocabulary:
    actions: tuple[str, ...]

    def __post_init__(self) -> None:
        actions = tuple(self.actions)
        object.__setattr__(self, "actions", actions)
        if len(actions) < 2:
            raise PolicyError("vocabulary needs at least two actions")
        if len(set(actions)) != len(actions):
            raise PolicyError("vocabulary contains duplicate actions")
        for a in actions:
            validate_action(a)

    @classmethod
    def numbered(cls, size: int, prefix: str = "a") -> ActionVocabulary:
        return cls(tuple(f"{prefix}{i}" for i in range(size)))

    def __len__(self) -> int:
        return len(self.actions)

    def index(self, action: str) -> int:
        return self.actions.index(action)


@dataclass(frozen=True)
class ElicitedStep:
    candidates: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (len(self.candidates),):
            raise PolicyError("probability vector does not match candidate set")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise PolicyError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class PolicySpec:
    """Parameters of a synthetic policy.

    ``variable_candidates`` switches on per-step candidate subsets: at each
    step a seeded random subset of the vocabulary of size in
    ``[min_candidates, A]`` is offered, in vocabulary order.
    """

    kind: str
    vocabulary: ActionVocabulary
    concentration: float = 1.0
    transition_matrix: np.ndarray | None = None
    rng_seed: int = 0
    variable_candidates: bool = False
    min_candidates: int = 2

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise PolicyError(f"unknown policy kind {self.kind!r}")
        if self.kind == "dirichlet_random" and not self.concentration > 0:
            raise PolicyError("dirichlet concentration must be positive")
        if self.kind == "markov_order1":
            if self.transition_matrix is None:
                raise PolicyError("markov_order1 policy needs a transition matrix")
            mat = np.asarray(self.transition_matrix, dtype=float)
            size = len(self.vocabulary)
            if mat.shape != (size, size):
                raise PolicyError(f"transition matrix must be {size}x{size}")
            if np.any(mat < 0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-9):
                raise PolicyError("transition matrix rows must be probability vectors")
            object.__setattr__(self, "transition_matrix", mat)
        if not 2 <= self.min_candidates <= len(self.vocabulary):
            raise PolicyError("min_candidates must lie in [2, A]")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": self.kind,
            "vocabulary": list(self.vocabulary.actions),
            "rng_seed": int(self.rng_seed),
        }
        if self.kind == "dirichlet_random":
            out["concentration"] = float(self.concentration)
        if self.kind == "markov_order1":
            out["transition_matrix"] = np.asarray(self.transition_matrix).tolist()
        if self.variable_candidates:
            out["variable_candidates"] = True
            out["min_candidates"] = int(self.min_candidates)
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> PolicySpec:
        """Build from a config mapping.

        The vocabulary is either an explicit ``vocabulary`` list or a
        ``vocab_size``.  A Markov policy may give ``transition_matrix``
        directly or ``transition_concentration`` (+ ``transition_seed``) to
        draw each row from a symmetric Dirichlet.
        """
        if "vocabulary" in raw:
            vocab = ActionVocabulary(tuple(raw["vocabulary"]))
        elif "vocab_size" in raw:
            vocab = ActionVocabulary.numbered(int(raw["vocab_size"]))
        else:
            raise PolicyError("policy needs 'vocabulary' or 'vocab_size'")
        kind = raw.get("kind", "uniform")
        matrix = raw.get("transition_matrix")
        if kind == "markov_order1" and matrix is None:
            matrix = random_transition_matrix(
                len(vocab),
                float(raw.get("transition_concentration", 1.0)),
                int(raw.get("transition_seed", raw.get("rng_seed", 0))),
            )
        return cls(
            kind=kind,
            vocabulary=vocab,
            concentration=float(raw.get("concentration", 1.0)),
            transition_matrix=None if matrix is None else np.asarray(matrix, dtype=float),
            rng_seed=int(raw.get("rng_seed", 0)),
            variable_candidates=bool(raw.get("variable_candidates", False)),
            min_candidates=int(raw.get("min_candidates", 2)),
        )


def random_transition_matrix(size: int, concentration: float, seed: int) -> np.ndarray:
    """Row-stochastic matrix with i.i.d. symmetric Dirichlet rows."""
    rng = make_rng([seed, 0x4D41524B])
    return rng.dirichlet(np.full(size, concentration), size=size)


def _step_candidates(policy: PolicySpec, t: int) -> tuple[tuple[str, ...], np.ndarray]:
    vocab = policy.vocabulary.actions
    if not policy.variable_candidates:
        return vocab, np.arange(len(vocab))
    rng = make_rng([policy.rng_seed, t, 0x43414E44])
    size = int(rng.integers(policy.min_candidates, len(vocab) + 1))
    idx = np.sort(rng.choice(len(vocab), size=size, replace=False))
    return tuple(vocab[i] for i in idx), idx


def elicit(policy: PolicySpec, history: Sequence[str]) -> ElicitedStep:
    """The unwatermarked distribution at the step following ``history``.

    Pure in ``(policy, history)``: the dirichlet draw for step ``t`` comes from
    a generator seeded by ``(rng_seed, t)``.
    """
    vocab = policy.vocabulary
    known = set(vocab.actions)
    for a in history:
        if a not in known:
            raise PolicyError(f"history contains unknown action {a!r}")
    t = len(history) + 1
    candidates, idx = _step_candidates(policy, t)
    size = len(vocab)
    if policy.kind == "uniform":
        full = np.full(size, 1.0 / size)
    elif policy.kind == "dirichlet_random":
        full = make_rng([policy.rng_seed, t]).dirichlet(np.full(size, policy.concentration))
    elif not history:
        full = np.full(size, 1.0 / size)
    else:
        full = policy.transition_matrix[vocab.index(history[-1])]
    probs = np.asarray(full, dtype=float)[idx]
    total = probs.sum()
    probs = probs / total if total > 0 else np.full(len(idx), 1.0 / len(idx))
    return ElicitedStep(candidates, probs)


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform from ``rng``."""
    u = rng.random()
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, len(probs) - 1)


def sample_action(step: ElicitedStep, rng: np.random.Generator) -> str:
    return step.candidates[sample_index(step.probs, rng)]

