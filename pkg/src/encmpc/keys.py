"""Shared-randomness key streams standing in for Bell-pair measurements.

Sensor and actuator each hold a KeySource built from the same seed; a
counter-based generator keyed on (seed, cycle) lets both ends derive the
identical w_q = (n+m)*w_b bits for a cycle without communicating. The
cloud never sees the seed. The bits are partitioned group-major,
MSB-first within each group, and each w_b-bit group maps to a nonzero
integer coefficient beta.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError


class KeyLengthError(ValueError):
    pass


class KeyReuseError(RuntimeError):
    """A cycle's key stream was requested out of monotone order."""


@dataclass(frozen=True)
class KeyConfig:
    n: int
    m: int
    w_b: int = 16

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigError("dimensions must be positive")
        if not 2 <= self.w_b <= 62:
            raise ConfigError("w_b must be in [2, 62]")

    @property
    def d(self) -> int:
        return self.n + self.m

    @property
    def w_q(self) -> int:
        return self.d * self.w_b


@dataclass(frozen=True)
class KeyStream:
    k: int
    bits: np.ndarray  # uint8 array of length w_q, group-major, MSB-first


@dataclass(frozen=True)
class BetaVector:
    beta: np.ndarray  # int64, length d = n + m
    n: int
    m: int

    @property
    def state_part(self) -> np.ndarray:
        return self.beta[:self.n]

    @property
    def offset_part(self) -> np.ndarray:
        return self.beta[self.n:]


class KeySource:
    """One endpoint's view of the shared randomness.

    stream(k) is a pure function of (seed, k) so two sources with the
    same seed agree bit for bit, but each source also enforces strictly
    increasing cycle indices: key material is never reused.
    """

    def __init__(self, seed: int, cfg: KeyConfig):
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        self.seed = int(seed)
        self.cfg = cfg
        self._last_k = -1

    def stream(self, k: int) -> KeyStream:
        if k <= self._last_k:
            raise KeyReuseError(
                f"cycle {k} requested after cycle {self._last_k}; key streams are single-use")
        self._last_k = k
        return generate_key(self.seed, k, self.cfg)


def generate_key(seed: int, k: int, cfg: KeyConfig) -> KeyStream:
    """w_q uniform bits for cycle k, reproducible from (seed, k).

    Philox is counter-based, so keying it on the 128-bit value
    (seed << 64) | k gives independent streams per cycle with no
    sequential state to keep in sync between the two parties.
    """
    if k < 0 or k >= 2 ** 64:
        raise ConfigError("cycle index must fit in 64 bits")
    bitgen = np.random.Philox(key=(int(seed) << 64) | int(k))
    nwords = -(-cfg.w_q // 64)
    raw = bitgen.random_raw(nwords)
    by = np.frombuffer(np.asarray(raw, dtype=">u8").tobytes(), dtype=np.uint8)
    bits = np.unpackbits(by)[:cfg.w_q]
    return KeyStream(k=int(k), bits=bits)


def beta_from_bits(group) -> int:
    """Nonzero coefficient from one w_b-bit group b_{w_b-1}..b_0.

    beta = -(2^(w_b-1)+1) * b_{w_b-1} + sum_{j<w_b-1} 2^j b_j + 1, which
    covers [-2^(w_b-1), 2^(w_b-1)] and skips zero.
    """
    group = np.asarray(group, dtype=np.int64).reshape(-1)
    w_b = group.size
    if w_b < 2:
        raise KeyLengthError("beta group needs at least 2 bits")
    low = 0
    for bit in group[1:]:
        low = (low << 1) | int(bit)
    return low + 1 - (2 ** (w_b - 1) + 1) * int(group[0])


def betas(key: KeyStream, cfg: KeyConfig) -> BetaVector:
    """Split the stream into d groups and map each to its beta."""
    if key.bits.size != cfg.w_q:
        raise KeyLengthError(
            f"stream has {key.bits.size} bits, config requires {cfg.w_q}")
    groups = key.bits.reshape(cfg.d, cfg.w_b).astype(np.int64)
    msb = groups[:, 0]
    weights = 2 ** np.arange(cfg.w_b - 2, -1, -1, dtype=np.int64)
    low = groups[:, 1:] @ weights
    beta = low + 1 - (2 ** (cfg.w_b - 1) + 1) * msb
    return BetaVector(beta=beta, n=cfg.n, m=cfg.m)
