"""Deterministic, platform-independent random streams.

Corpus generation must replay bit-exactly from a 64-bit seed, so this module
pins the exact algorithms instead of deferring to library RNGs: a splitmix64
mixer for seeding/derivation and xoshiro256** for the stream, with Gaussian
draws via Box-Muller. Integer draws are rejection-sampled (no modulo bias).
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1

_SM64_GAMMA = 0x9E3779B97F4A7C15
_DERIVE_INIT = 0x6A09E667F3BCC909


def _sm64_mix(z: int) -> int:
    """The splitmix64 output scrambler for one 64-bit word."""
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """64-bit state mixer; used to expand seeds for xoshiro256**."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _SM64_GAMMA) & MASK64
        return _sm64_mix(self.state)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    """xoshiro256** stream with splitmix64 seeding.

    All derived draws (uniform, randint, gauss, shuffle) are defined in
    terms of ``next_u64`` so the whole stream is reproducible exactly.
    """

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        self.s = [sm.next_u64() for _ in range(4)]

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """One double in [0, 1), 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randint(self, n: int) -> int:
        """Unbiased draw from {0, ..., n-1} by rejection."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def gauss_pair(self) -> tuple[float, float]:
        """One Box-Muller pair; u1 is nudged into (0, 1] so log is finite."""
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        return r * math.cos(theta), r * math.sin(theta)

    def gauss(self) -> float:
        """Single Gaussian draw; consumes a full pair to keep the stream
        alignment independent of call history."""
        return self.gauss_pair()[0]

    def gauss_array(self, n: int) -> np.ndarray:
        """n Gaussian draws as float64; consumes ceil(n/2) pairs."""
        pairs = (n + 1) // 2
        raw = np.empty(2 * pairs, dtype=np.uint64)
        for i in range(2 * pairs):
            raw[i] = self.next_u64()
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]


def _fold_part(part) -> list[int]:
    """Flatten a seed-derivation part into 64-bit words."""
    if isinstance(part, bool):
        raise TypeError("bool is not a valid seed part")
    if isinstance(part, int):
        if part < 0:
            raise ValueError("seed parts must be non-negative")
        words = []
        p = part
        while True:
            words.append(p & MASK64)
            p >>= 64
            if p == 0:
                return words
    if isinstance(part, str):
        part = part.encode("utf-8")
    if isinstance(part, (bytes, bytearray)):
        words = [len(part)]
        for i in range(0, len(part), 8):
            words.append(int.from_bytes(part[i : i + 8], "little"))
        return words
    if isinstance(part, (tuple, list)):
        words = [0x7CF5, len(part)]
        for item in part:
            words.extend(_fold_part(item))
        return words
    raise TypeError(f"unsupported seed part type: {type(part)!r}")


def derive_seed(*parts) -> int:
    """Deterministically mix ints/strings/tuples into one 64-bit seed.

    Used to split a single run seed into independent streams (corpus,
    renders, init, batch order) without overlap.
    """
    h = _DERIVE_INIT
    for part in parts:
        for word in _fold_part(part):
            h = _sm64_mix((h + _SM64_GAMMA) & MASK64 ^ word)
    return h
