"""Compiled batch evaluation of keyed-subset membership.

Calibration re-scores one observation under hundreds of keys, which means
millions of HMAC evaluations; the per-call overhead of :mod:`hmac` dominates
that workload.  This module reimplements HMAC-SHA-256 with numba over
pre-padded message blocks and per-key precomputed inner/outer states.  It
must agree bit-for-bit with :func:`seqwm.keyed_subset.sample_subset`; the test
suite cross-checks the two on randomized inputs.
"""

from __future__ import annotations

from typing import Sequence

import numba
import numpy as np

_K = np.array([
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
], dtype=np.uint32)

_IV = np.array([
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
], dtype=np.uint32)


@numba.njit(cache=True, inline="always")
def _rotr(x, n):
    return (x >> np.uint32(n)) | (x << np.uint32(32 - n))


@numba.njit(cache=True)
def _compress(state, block, out, w):
    """One SHA-256 compression of a 16-word ``block`` into ``out`` (from ``state``).

    ``w`` is a caller-owned 64-word message-schedule buffer.
    """
    for i in range(16):
        w[i] = block[i]
    for i in range(16, 64):
        x = w[i - 15]
        y = w[i - 2]
        s0 = _rotr(x, 7) ^ _rotr(x, 18) ^ (x >> np.uint32(3))
        s1 = _rotr(y, 17) ^ _rotr(y, 19) ^ (y >> np.uint32(10))
        w[i] = np.uint32(w[i - 16] + s0 + w[i - 7] + s1)
    a = state[0]
    b = state[1]
    c = state[2]
    d = state[3]
    e = state[4]
    f = state[5]
    g = state[6]
    h = state[7]
    for i in range(64):
        s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
        ch = (e & f) ^ ((~e) & g)
        t1 = np.uint32(h + s1 + ch + _K[i] + w[i])
        s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
        maj = (a & b) ^ (a & c) ^ (b & c)
        t2 = np.uint32(s0 + maj)
        h = g
        g = f
        f = e
        e = np.uint32(d + t1)
        d = c
        c = b
        b = a
        a = np.uint32(t1 + t2)
    out[0] = state[0] + a
    out[1] = state[1] + b
    out[2] = state[2] + c
    out[3] = state[3] + d
    out[4] = state[4] + e
    out[5] = state[5] + f
    out[6] = state[6] + g
    out[7] = state[7] + h


@numba.njit(cache=True)
def _key_states(key_words, inner, outer):
    # 32-byte keys are shorter than the block, so they are zero-padded, not hashed
    block = np.zeros(16, dtype=np.uint32)
    sched = np.empty(64, dtype=np.uint32)
    for k in range(key_words.shape[0]):
        for i in range(16):
            block[i] = key_words[k, i] ^ np.uint32(0x36363636)
        _compress(_IV, block, inner[k], sched)
        for i in range(16):
            block[i] = key_words[k, i] ^ np.uint32(0x5c5c5c5c)
        _compress(_IV, block, outer[k], sched)


@numba.njit(cache=True)
def _hmac_digest(inner, outer, blocks, nblocks, scratch, tmp, digest, sched):
    """HMAC digest of the pre-padded message ``blocks[:nblocks]`` into ``digest``."""
    for i in range(8):
        tmp[i] = inner[i]
    for b in range(nblocks):
        _compress(tmp, blocks[b], digest, sched)
        for i in range(8):
            tmp[i] = digest[i]
    for i in range(8):
        scratch[i] = tmp[i]
    scratch[8] = np.uint32(0x80000000)
    for i in range(9, 15):
        scratch[i] = np.uint32(0)
    scratch[15] = np.uint32((64 + 32) * 8)
    _compress(outer, scratch, digest, sched)


@numba.njit(cache=True)
def _set_counter(blocks, offset, counter):
    for k in range(4):
        p = offset + k
        byte = (np.uint32(counter) >> np.uint32(8 * (3 - k))) & np.uint32(0xFF)
        blk = p // 64
        word = (p % 64) // 4
        shift = np.uint32(8 * (3 - (p % 4)))
        cleared = blocks[blk, word] & ~(np.uint32(0xFF) << shift)
        blocks[blk, word] = cleared | (byte << shift)


@numba.njit(cache=True)
def _member(inner, outer, blocks, nblocks, offset, size, target, n_eff, work, scratch, tmp, digest, sched):
    """Whether candidate index ``target`` is among the first ``n_eff`` shuffled slots.

    Tracks only the target's position through the forward Fisher-Yates pass:
    at step ``i`` with draw ``j`` the target is selected iff it sits at ``j``,
    and moves to ``j`` iff it sits at ``i``.
    """
    counter = 0
    chunk = 4
    pos = target
    for i in range(n_eff):
        r = np.uint64(size - i)
        if (r & (r - np.uint64(1))) == np.uint64(0):
            limit = np.uint64(0)  # power of two: every chunk accepted
        else:
            limit = (np.uint64(0xFFFFFFFFFFFFFFFF) // r) * r
        while True:
            if chunk == 4:
                if counter == 0:
                    _hmac_digest(inner, outer, blocks, nblocks, scratch, tmp, digest, sched)
                else:
                    # rarely reached: more than four draws or a rejected chunk
                    for b in range(nblocks):
                        for q in range(16):
                            work[b, q] = blocks[b, q]
                    _set_counter(work, offset, counter)
                    _hmac_digest(inner, outer, work, nblocks, scratch, tmp, digest, sched)
                counter += 1
                chunk = 0
            v = (np.uint64(digest[2 * chunk]) << np.uint64(32)) | np.uint64(digest[2 * chunk + 1])
            chunk += 1
            if limit == np.uint64(0) or v < limit:
                j = i + np.int64(v % r)
                break
        if j == pos:
            return True
        if i == pos:
            pos = j
    return False


@numba.njit(cache=True)
def _scores_kernel(inner, outer, blocks, nblocks, offsets, sizes, targets, n_effs):
    n_keys = inner.shape[0]
    n_ind = nblocks.shape[0]
    out = np.zeros(n_keys, dtype=np.int64)
    work = np.empty((blocks.shape[1], 16), dtype=np.uint32)
    scratch = np.empty(16, dtype=np.uint32)
    tmp = np.empty(8, dtype=np.uint32)
    digest = np.empty(8, dtype=np.uint32)
    sched = np.empty(64, dtype=np.uint32)
    for k in range(n_keys):
        total = 0
        for p in range(n_ind):
            if _member(inner[k], outer[k], blocks[p], nblocks[p], offsets[p], sizes[p],
                       targets[p], n_effs[p], work, scratch, tmp, digest, sched):
                total += 1
        out[k] = total
    return out


@numba.njit(cache=True)
def _hits_kernel(inner, outer, blocks, nblocks, offsets, sizes, targets, n_effs):
    n_ind = nblocks.shape[0]
    out = np.zeros(n_ind, dtype=np.int8)
    work = np.empty((blocks.shape[1], 16), dtype=np.uint32)
    scratch = np.empty(16, dtype=np.uint32)
    tmp = np.empty(8, dtype=np.uint32)
    digest = np.empty(8, dtype=np.uint32)
    sched = np.empty(64, dtype=np.uint32)
    for p in range(n_ind):
        if _member(inner[0], outer[0], blocks[p], nblocks[p], offsets[p], sizes[p],
                   targets[p], n_effs[p], work, scratch, tmp, digest, sched):
            out[p] = 1
    return out


class PackedIndicators:
    """Indicator batch: one pre-padded HMAC message per (window/round, channel)."""

    def __init__(self, payloads: Sequence[bytes], sizes: Sequence[int], targets: Sequence[int],
                 n_effs: Sequence[int]):
        count = len(payloads)
        msgs = [p + b"\x00\x00\x00\x00\x00" for p in payloads]
        padded = []
        for msg in msgs:
            bitlen = (64 + len(msg)) * 8
            pad = (55 - len(msg)) % 64
            padded.append(msg + b"\x80" + b"\x00" * pad + bitlen.to_bytes(8, "big"))
        max_blocks = max((len(p) // 64 for p in padded), default=1)
        self.blocks = np.zeros((count, max_blocks, 16), dtype=np.uint32)
        self.nblocks = np.zeros(count, dtype=np.int64)
        for i, raw in enumerate(padded):
            words = np.frombuffer(raw, dtype=">u4").astype(np.uint32)
            nb = len(raw) // 64
            self.blocks[i, :nb] = words.reshape(nb, 16)
            self.nblocks[i] = nb
        self.offsets = np.array([len(p) + 1 for p in payloads], dtype=np.int64)
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.n_effs = np.asarray(n_effs, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.nblocks.shape[0])

    def _args(self):
        return (self.blocks, self.nblocks, self.offsets, self.sizes, self.targets, self.n_effs)

    def scores(self, keys: Sequence[bytes]) -> np.ndarray:
        """Total hit count under each key."""
        inner, outer = key_states(keys)
        if len(self) == 0:
            return np.zeros(len(keys), dtype=np.int64)
        return _scores_kernel(inner, outer, *self._args())

    def hits(self, key: bytes) -> np.ndarray:
        """Per-indicator 0/1 hits under one key."""
        inner, outer = key_states([key])
        if len(self) == 0:
            return np.zeros(0, dtype=np.int8)
        return _hits_kernel(inner, outer, *self._args())


def key_states(keys: Sequence[bytes]) -> tuple[np.ndarray, np.ndarray]:
    raw = np.frombuffer(b"".join(keys), dtype=">u4").astype(np.uint32).reshape(len(keys), 8)
    words = np.zeros((len(keys), 16), dtype=np.uint32)
    words[:, :8] = raw
    inner = np.empty((len(keys), 8), dtype=np.uint32)
    outer = np.empty((len(keys), 8), dtype=np.uint32)
    _key_states(words, inner, outer)
    return inner, outer
