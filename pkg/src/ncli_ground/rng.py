"""Frozen deterministic PRNG primitives.

Every random quantity in the engine (hashed token vectors, projection
matrices, synthetic corpora) is derived from the generator defined here, so
results are reproducible across runs and platforms:

* 64-bit content hashing: first 8 bytes, little-endian, of
  ``SHA-256(namespace || 0x1F || payload)``.
* Stream seeding: splitmix64 applied to a 64-bit seed; four successive
  outputs form the xoshiro256** state.
* Core generator: xoshiro256** (Blackman & Vigna).
* Uniforms: ``((x >> 11) + 1) * 2**-53`` in (0, 1].
* Normals: Box-Muller on consecutive uniform pairs, pairs consumed in
  order, second variate of a trailing odd pair discarded.

Integer arithmetic is done on Python ints masked to 64 bits; no platform
dtype is involved. Box-Muller uses libm sqrt/log/cos/sin, assumed IEEE-754
double (true of every platform this runs on in practice).
"""

from __future__ import annotations

import hashlib
import math

_MASK64 = 0xFFFFFFFFFFFFFFFF


def hash64(namespace: str, payload: str) -> int:
    """64-bit content hash of (namespace, payload), stable across platforms."""
    digest = hashlib.sha256(
        namespace.encode("utf-8") + b"\x1f" + payload.encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "little")


def hash64_hex(namespace: str, payload: str) -> str:
    """hash64 rendered as 16 lowercase hex digits (cache keys, manifests)."""
    return f"{hash64(namespace, payload):016x}"


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** stream seeded from a 64-bit seed via splitmix64."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self._s = s

    def next_uint64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in (0, 1] from the top 53 bits."""
        return ((self.next_uint64() >> 11) + 1) * 2.0**-53

    def uniforms(self, n: int) -> list[float]:
        return [self.uniform() for _ in range(n)]

    def normals(self, n: int) -> list[float]:
        """n standard normals via Box-Muller, consumed pairwise in order."""
        out: list[float] = []
        while len(out) < n:
            u1 = self.uniform()
            u2 = self.uniform()
            r = math.sqrt(-2.0 * math.log(u1))
            out.append(r * math.cos(2.0 * math.pi * u2))
            if len(out) < n:
                out.append(r * math.sin(2.0 * math.pi * u2))
        return out

    def randrange(self, n: int) -> int:
        """Integer in [0, n) by rejection on the top bits (unbiased)."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            x = self.next_uint64()
            if x < limit:
                return x % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), in draw order."""
        if k > n:
            raise ValueError("sample size exceeds population")
        pool = list(range(n))
        picked: list[int] = []
        for _ in range(k):
            j = self.randrange(len(pool))
            picked.append(pool.pop(j))
        return picked


def stream(namespace: str, payload: str, seed: int) -> Xoshiro256StarStar:
    """Named substream: one generator per (namespace, payload, seed) triple."""
    return Xoshiro256StarStar(hash64(namespace, payload) ^ (seed & _MASK64))
