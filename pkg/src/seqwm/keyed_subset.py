"""Keyed pseudorandom subsets shared by the encoder and the detector.

Every subset is a deterministic function of a 32-byte secret key, a seed
context (a canonical byte encoding of either an action window plus channel
index, or a round index plus channel index) and the ordered candidate list.
Randomness comes from an HMAC-SHA-256 keystream consumed by a rejection-sampled
Fisher-Yates shuffle, so two processes on any platform derive the same subset.
"""

from __future__ import annotations

import hmac
import os
from dataclasses import dataclass
from typing import Iterator, Sequence

KEY_BYTES = 32
UNIT_SEP = b"\x1f"
RECORD_SEP = b"\x1e"
_TWO_64 = 1 << 64


class InvalidParameterError(ValueError):
    """A numeric argument lies outside its documented range."""


class ActionEncodingError(ValueError):
    """An action id cannot be serialized into a seed context."""


@dataclass(frozen=True)
class SecretKey:
    data: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.data, (bytes, bytearray)) or len(self.data) != KEY_BYTES:
            raise InvalidParameterError(f"secret key must be exactly {KEY_BYTES} bytes")
        object.__setattr__(self, "data", bytes(self.data))

    def __repr__(self) -> str:
        # never leak key material into logs
        return "SecretKey(<redacted>)"

    @classmethod
    def random(cls) -> SecretKey:
        return cls(os.urandom(KEY_BYTES))

    @classmethod
    def from_hex(cls, text: str) -> SecretKey:
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True)
class SeedContext:
    payload: bytes


def _encode_action(action: str) -> bytes:
    if not isinstance(action, str):
        raise ActionEncodingError(f"action ids must be str, got {type(action).__name__}")
    if action == "":
        # an empty id would let a window payload start with 0x1E and collide
        # with round payloads
        raise ActionEncodingError("action ids must be non-empty")
    raw = action.encode("utf-8")
    if UNIT_SEP in raw or RECORD_SEP in raw:
        raise ActionEncodingError(f"action id {action!r} contains a reserved separator byte")
    return raw


def validate_action(action: str) -> None:
    """Raise :class:`ActionEncodingError` if ``action`` cannot appear in a window."""
    _encode_action(action)


def encode_context(window: Sequence[str], channel: int) -> SeedContext:
    """Serialize ``window ‖ channel`` as ``a1 0x1F a2 ... aw 0x1E <channel>``."""
    if len(window) == 0:
        raise InvalidParameterError("window must be non-empty")
    if channel < 0:
        raise InvalidParameterError("channel index must be non-negative")
    body = UNIT_SEP.join(_encode_action(a) for a in window)
    return SeedContext(body + RECORD_SEP + str(int(channel)).encode("ascii"))


def encode_round(t: int) -> SeedContext:
    """Serialize an absolute round index as ``0x1E <t>``."""
    if t < 1:
        raise InvalidParameterError("round index must be >= 1")
    return SeedContext(RECORD_SEP + str(int(t)).encode("ascii"))


def encode_round_channel(t: int, channel: int) -> SeedContext:
    """Round-indexed seed with the same channel suffix convention as windows."""
    if channel < 0:
        raise InvalidParameterError("channel index must be non-negative")
    return SeedContext(encode_round(t).payload + RECORD_SEP + str(int(channel)).encode("ascii"))


def keystream_block(key: SecretKey, ctx: SeedContext, counter: int) -> bytes:
    if not 0 <= counter < (1 << 32):
        raise InvalidParameterError("keystream counter must fit in 32 bits")
    return hmac.digest(key.data, ctx.payload + b"\x00" + counter.to_bytes(4, "big"), "sha256")


def _chunks(key: SecretKey, ctx: SeedContext) -> Iterator[int]:
    counter = 0
    while True:
        block = keystream_block(key, ctx, counter)
        for off in range(0, 32, 8):
            yield int.from_bytes(block[off:off + 8], "big")
        counter += 1


def uniform_indices(key: SecretKey, ctx: SeedContext, ranges: Sequence[int]) -> list[int]:
    """Draw one uniform index per entry of ``ranges`` from the keystream.

    A 64-bit chunk ``v`` is accepted for range ``r`` iff
    ``v < floor(2**64 / r) * r`` and then yields ``v % r``.
    """
    out = []
    chunks = _chunks(key, ctx)
    for r in ranges:
        if r < 1:
            raise InvalidParameterError("range must be positive")
        limit = (_TWO_64 // r) * r
        for v in chunks:
            if v < limit:
                out.append(v % r)
                break
    return out


def sample_subset(key: SecretKey, ctx: SeedContext, candidates: Sequence[str], n_eff: int) -> list[str]:
    """First ``n_eff`` elements of a keyed Fisher-Yates shuffle of ``candidates``.

    The returned list is in shuffle order; callers that need set semantics
    should wrap it.
    """
    size = len(candidates)
    if not 1 <= n_eff <= size:
        raise InvalidParameterError(f"n_eff={n_eff} outside [1, {size}]")
    items = list(candidates)
    draws = uniform_indices(key, ctx, [size - i for i in range(n_eff)])
    for i, u in enumerate(draws):
        j = i + u
        items[i], items[j] = items[j], items[i]
    return items[:n_eff]
