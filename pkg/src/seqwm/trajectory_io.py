"""Trajectory logs, key files and detection reports on disk.

A trajectory file is JSON Lines: one header record followed by one record per
step.  Candidate lists are written in the order the encoder saw them; that
order feeds the keyed shuffle, so it is never sorted or deduplicated here.

Header::

    {"format": "seqwm/1", "mode": "global-vocab" | "per-step",
     "vocabulary": [...] (global mode), "method": ..., "params": {...},
     "policy": {...} | null, "seed": ... | null}

Step::

    {"t": 1, "action": "a3", "candidates": [...] (per-step mode),
     "elicited_probs": [...], "tilted_probs": [...], "watermarked": false,
     "n_eff": null}
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .calibration import DetectionReport
from .keyed_subset import SecretKey
from .records import MODE_GLOBAL, MODE_PER_STEP, ObservedSequence, StepRecord, Trajectory

FORMAT_VERSION = "seqwm/1"
PathLike = Union[str, os.PathLike]
_HEX_KEY = re.compile(r"[0-9a-f]{64}")


class TrajectoryParseError(ValueError):
    def __init__(self, path: PathLike, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


class VersionMismatchError(TrajectoryParseError):
    pass


class MalformedRecordError(TrajectoryParseError):
    pass


class NonMonotoneStepError(TrajectoryParseError):
    pass


class ActionNotInCandidatesError(TrajectoryParseError):
    pass


class MissingCandidatesError(TrajectoryParseError):
    pass


class KeyFormatError(ValueError):
    pass


def _probs(values: Optional[np.ndarray]) -> Optional[list[float]]:
    # json writes floats with repr(), which round-trips exactly
    return None if values is None else [float(v) for v in values]


def dumps_trajectory(traj: Trajectory) -> str:
    header = {
        "format": FORMAT_VERSION,
        "mode": traj.mode,
        "method": traj.method,
        "params": traj.params,
        "policy": traj.policy,
        "seed": traj.seed,
    }
    if traj.mode == MODE_GLOBAL:
        header["vocabulary"] = list(traj.vocabulary)
    lines = [json.dumps(header, ensure_ascii=False)]
    for step in traj.steps:
        rec: dict[str, Any] = {"t": step.t, "action": step.action}
        if traj.mode == MODE_PER_STEP:
            rec["candidates"] = list(step.candidates)
        rec["elicited_probs"] = _probs(step.elicited_probs)
        rec["tilted_probs"] = _probs(step.tilted_probs)
        rec["watermarked"] = step.watermarked
        rec["n_eff"] = step.n_eff
        lines.append(json.dumps(rec, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def save(traj: Trajectory, path: PathLike) -> None:
    Path(path).write_text(dumps_trajectory(traj), encoding="utf-8")


def load_trajectory(path: PathLike) -> Trajectory:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [(n, line) for n, line in enumerate(fh, start=1) if line.strip()]
    if not lines:
        raise MalformedRecordError(path, 1, "empty file")

    def parse(n: int, line: str) -> dict[str, Any]:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecordError(path, n, f"invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise MalformedRecordError(path, n, "record is not an object")
        return rec

    n0, first = lines[0]
    header = parse(n0, first)
    if header.get("format") != FORMAT_VERSION:
        raise VersionMismatchError(path, n0, f"expected format {FORMAT_VERSION!r}, got {header.get('format')!r}")
    mode = header.get("mode")
    if mode not in (MODE_GLOBAL, MODE_PER_STEP):
        raise MalformedRecordError(path, n0, f"unknown mode {mode!r}")
    vocab = None
    if mode == MODE_GLOBAL:
        if not isinstance(header.get("vocabulary"), list):
            raise MalformedRecordError(path, n0, "global-vocab mode needs a vocabulary list")
        vocab = tuple(header["vocabulary"])
        known = set(vocab)

    steps = []
    last_t = 0
    for n, line in lines[1:]:
        rec = parse(n, line)
        t = rec.get("t")
        action = rec.get("action")
        if not isinstance(t, int) or isinstance(t, bool) or not isinstance(action, str):
            raise MalformedRecordError(path, n, "step record needs integer 't' and string 'action'")
        if t <= last_t:
            raise NonMonotoneStepError(path, n, f"step t={t} does not increase past {last_t}")
        last_t = t
        if mode == MODE_PER_STEP:
            cands = rec.get("candidates")
            if cands is None:
                raise MissingCandidatesError(path, n, "per-step mode record has no candidates")
            if not isinstance(cands, list) or not all(isinstance(c, str) for c in cands):
                raise MalformedRecordError(path, n, "candidates must be a list of strings")
            cands = tuple(cands)
            if action not in cands:
                raise ActionNotInCandidatesError(path, n, f"action {action!r} not among candidates")
        else:
            if action not in known:
                raise ActionNotInCandidatesError(path, n, f"action {action!r} not in vocabulary")
            cands = vocab
        ep, tp = rec.get("elicited_probs"), rec.get("tilted_probs")
        steps.append(StepRecord(
            t=t,
            action=action,
            candidates=cands,
            elicited_probs=None if ep is None else np.asarray(ep, dtype=float),
            tilted_probs=None if tp is None else np.asarray(tp, dtype=float),
            watermarked=bool(rec.get("watermarked", False)),
            n_eff=rec.get("n_eff"),
        ))
    return Trajectory(
        steps=steps,
        mode=mode,
        vocabulary=vocab,
        method=header.get("method", "seqwm"),
        params=header.get("params") or {},
        policy=header.get("policy"),
        seed=header.get("seed"),
    )


def load(path: PathLike) -> tuple[ObservedSequence, Trajectory]:
    """Observed sequence plus the full record (metadata, per-step flags)."""
    traj = load_trajectory(path)
    return traj.observed(), traj


def observed_to_trajectory(obs: ObservedSequence, template: Trajectory | None = None) -> Trajectory:
    """Wrap a (possibly attacked) observation as a savable trajectory.

    Probabilities and flags are dropped since they no longer line up with the
    surviving steps; metadata is inherited from ``template``.
    """
    steps = [StepRecord(t=i + 1, action=a, candidates=obs.candidates_at(i))
             for i, a in enumerate(obs.actions)]
    return Trajectory(
        steps=steps,
        mode=obs.mode,
        vocabulary=obs.vocabulary,
        method=template.method if template else "unknown",
        params=template.params if template else {},
        policy=template.policy if template else None,
        seed=template.seed if template else None,
    )


def keygen(path: PathLike, rng: np.random.Generator | None = None) -> SecretKey:
    """Write a fresh key as 64 lowercase hex characters and a newline."""
    key = SecretKey(rng.bytes(32)) if rng is not None else SecretKey.random()
    save_key(key, path)
    return key


def save_key(key: SecretKey, path: PathLike) -> None:
    path = Path(path)
    path.write_text(key.hex() + "\n", encoding="ascii")
    try:
        path.chmod(0o600)
    except OSError:
        pass


def load_key(path: PathLike) -> SecretKey:
    text = Path(path).read_text(encoding="ascii", errors="replace")
    body = text[:-1] if text.endswith("\n") else text
    if not _HEX_KEY.fullmatch(body):
        raise KeyFormatError(f"{path}: key file must hold 64 lowercase hex characters")
    return SecretKey.from_hex(body)


def save_report(report: DetectionReport, path: PathLike) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
