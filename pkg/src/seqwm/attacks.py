"""Trajectory corruption operators: deletion, truncation, substitution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .records import MODE_GLOBAL, ObservedSequence

ATTACK_TYPES = ("delete", "truncate", "substitute")


class UnsupportedModeError(ValueError):
    pass


def _count(rho: float, length: int) -> int:
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    # round half to even, as Python's round() does
    return int(round(rho * length))


def delete_random(obs: ObservedSequence, rho: float,
                  rng: np.random.Generator) -> tuple[ObservedSequence, list[int]]:
    """Remove ``round(rho * T')`` uniformly chosen positions.

    Returns the corrupted sequence and the deleted 0-based original indices
    in increasing order.  Per-step candidate sets travel with their actions.
    """
    d = _count(rho, len(obs))
    deleted = sorted(int(i) for i in rng.choice(len(obs), size=d, replace=False)) if d else []
    gone = set(deleted)
    keep = [i for i in range(len(obs)) if i not in gone]
    return obs.select(keep), deleted


def truncate(obs: ObservedSequence, keep: int) -> ObservedSequence:
    if not 0 <= keep <= len(obs):
        raise ValueError("keep must lie in [0, len(obs)]")
    return obs.select(range(keep))


def substitute_random(obs: ObservedSequence, rho: float,
                      rng: np.random.Generator) -> tuple[ObservedSequence, list[int]]:
    """Replace ``round(rho * T')`` positions with a different vocabulary action."""
    if obs.mode != MODE_GLOBAL:
        raise UnsupportedModeError("substitution needs a global vocabulary")
    d = _count(rho, len(obs))
    positions = sorted(int(i) for i in rng.choice(len(obs), size=d, replace=False)) if d else []
    actions = list(obs.actions)
    vocab = obs.vocabulary
    for pos in positions:
        others = [a for a in vocab if a != actions[pos]]
        actions[pos] = others[int(rng.integers(len(others)))]
    return obs.replace_actions(actions), positions


@dataclass(frozen=True)
class AttackSpec:
    """Serializable attack descriptor ``{type, rho | keep, seed}``."""

    type: str
    rho: float | None = None
    keep: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.type not in ATTACK_TYPES:
            raise ValueError(f"unknown attack type {self.type!r}")
        if self.type == "truncate" and self.keep is None:
            raise ValueError("truncate needs keep")
        if self.type != "truncate" and self.rho is None:
            raise ValueError(f"{self.type} needs rho")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"type": self.type, "seed": self.seed}
        if self.type == "truncate":
            out["keep"] = self.keep
        else:
            out["rho"] = self.rho
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> AttackSpec:
        return cls(raw["type"], raw.get("rho"), raw.get("keep"), int(raw.get("seed", 0)))

    def apply(self, obs: ObservedSequence, rng: np.random.Generator | None = None) -> ObservedSequence:
        rng = np.random.default_rng(self.seed) if rng is None else rng
        if self.type == "delete":
            return delete_random(obs, self.rho, rng)[0]
        if self.type == "substitute":
            return substitute_random(obs, self.rho, rng)[0]
        return truncate(obs, self.keep)
