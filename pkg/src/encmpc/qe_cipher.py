"""Exponential-logarithmic cipher over the shared key coefficients.

Encryption maps a real z to exp(z/beta); the cloud raises ciphertexts to
known-gain powers without any key access, and the actuator recovers the
linear combination through beta-weighted logarithms:

    sum_i beta_i * ln((exp(z_i/beta_i))^{K_ji}) = sum_i K_ji z_i

exactly, in real arithmetic. A stochastic rounding quantizer with the
domain fold g (values below 1 reflected by 2 - 1/v) provides the
finite-word wire format for the quantized backend.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EXP_ARG_LIMIT
from .keys import BetaVector


class MagnitudeError(ValueError):
    """Plaintext too large for the key magnitude: |z/beta| exceeds the
    exp guard, so the plant scaling and w_b are incompatible."""


class CiphertextError(ValueError):
    """Nonpositive, infinite, or vanished ciphertext value."""


class DomainError(ValueError):
    """Argument outside the domain fold's definition."""


class RangeError(ValueError):
    """Folded value not representable in the requested bit budget."""


def enc_scalar(z: float, beta: int) -> float:
    arg = z / beta
    if not abs(arg) <= EXP_ARG_LIMIT:
        raise MagnitudeError(f"|z/beta| = {abs(arg):.3g} exceeds {EXP_ARG_LIMIT}")
    return float(np.exp(arg))


def dec_scalar(ct: float, beta: int) -> float:
    if not (ct > 0 and np.isfinite(ct)):
        raise CiphertextError(f"ciphertext {ct!r} not a positive finite real")
    return float(beta * np.log(ct))


def enc_vector(values, betas_part) -> np.ndarray:
    """Componentwise enc_scalar with per-component beta."""
    values = np.asarray(values, dtype=float).reshape(-1)
    betas_part = np.asarray(betas_part, dtype=float).reshape(-1)
    if values.size != betas_part.size:
        raise ValueError("value/beta length mismatch")
    args = values / betas_part
    bad = np.flatnonzero(~(np.abs(args) <= EXP_ARG_LIMIT))
    if bad.size:
        i = int(bad[0])
        raise MagnitudeError(
            f"component {i}: |z/beta| = {abs(args[i]):.3g} exceeds {EXP_ARG_LIMIT}")
    return np.exp(args)


def dec_vector(cts, betas_part) -> np.ndarray:
    cts = np.asarray(cts, dtype=float).reshape(-1)
    betas_part = np.asarray(betas_part, dtype=float).reshape(-1)
    if not np.all((cts > 0) & np.isfinite(cts)):
        raise CiphertextError("ciphertext vector has nonpositive or nonfinite entries")
    return betas_part * np.log(cts)


def enc_state(x, bv: BetaVector) -> np.ndarray:
    """Encrypt the n state components with the state part of the key."""
    return enc_vector(x, bv.state_part)


def enc_offset(b, bv: BetaVector) -> np.ndarray:
    """Encrypt the m offset components with the offset part of the key."""
    return enc_vector(b, bv.offset_part)


def con(K, ct_vec) -> np.ndarray:
    """Cloud-side linear-term computation: entry (j,i) = ct_i ** K[j,i].

    Takes no key material by construction; raises if any power over- or
    underflows out of the positive reals.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    ct_vec = np.asarray(ct_vec, dtype=float).reshape(-1)
    if K.shape[1] != ct_vec.size:
        raise ValueError("gain/ciphertext dimension mismatch")
    if not np.all((ct_vec > 0) & np.isfinite(ct_vec)):
        raise CiphertextError("ciphertext vector has nonpositive or nonfinite entries")
    with np.errstate(over="ignore", under="ignore"):
        T = ct_vec[None, :] ** K
    if not np.all(np.isfinite(T) & (T > 0)):
        raise CiphertextError("power overflowed or underflowed the positive reals")
    return T


def dec_aggregate(T, betas_part) -> np.ndarray:
    """v_j = sum_i beta_i * ln(T[j,i]); recovers K x for T = con(K, enc(x))."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    betas_part = np.asarray(betas_part, dtype=float).reshape(-1)
    if T.shape[1] != betas_part.size:
        raise ValueError("matrix/beta dimension mismatch")
    if not np.all((T > 0) & np.isfinite(T)):
        raise CiphertextError("cipher matrix has nonpositive or nonfinite entries")
    return np.log(T) @ betas_part


# domain fold and stochastic quantizer

@dataclass(frozen=True)
class QuantizedWord:
    """w-bit stochastically rounded word.

    value is the integer I with decoded magnitude I * 2^(1-w); the bit
    string a_{w-1}..a_0 of the defining sum xi = sum_j 2^(-j) a_j is
    value's binary expansion read in reverse.
    """
    value: int
    w: int

    def __post_init__(self):
        if not 0 <= self.value < 2 ** self.w:
            raise RangeError(f"word {self.value} outside [0, 2^{self.w})")

    @property
    def decoded(self) -> float:
        return self.value * 2.0 ** (1 - self.w)

    @property
    def bits(self) -> str:
        return format(self.value, f"0{self.w}b")[::-1]


def g_map(v: float) -> float:
    """Fold (0,1] onto (-inf,1] by v -> 2 - 1/v; identity above 1."""
    if v == 0:
        raise DomainError("g is undefined at 0")
    return float(v) if v > 1 else 2.0 - 1.0 / float(v)


def g_inv(y: float) -> float:
    return float(y) if y > 1 else 1.0 / (2.0 - float(y))


def quantize_stochastic(v: float, w: int, rng: np.random.Generator) -> QuantizedWord:
    """Stochastically round g_map(v) to a w-bit word.

    With y = g_map(v) and eta the fractional part of 2^(w-1) y, the word
    rounds up with probability eta, making the decoded value an unbiased
    estimate of y with squared error at most 2^(-2w).
    """
    if w < 1:
        raise RangeError("bit budget must be >= 1")
    y = g_map(v)
    top = 2.0 - 2.0 ** (1 - w)
    if not -1e-12 <= y <= top + 1e-12:
        raise RangeError(
            f"g_map(v) = {y:.6g} outside [0, {top:.6g}] for w = {w}")
    scaled = y * 2.0 ** (w - 1)
    base = int(np.floor(scaled))
    eta = scaled - base
    value = base + (1 if rng.random() < eta else 0)
    value = min(max(value, 0), 2 ** w - 1)
    return QuantizedWord(value=value, w=w)


def dequantize(word: QuantizedWord) -> float:
    """Positive real back from a wire word: g_inv of the decoded value."""
    return g_inv(word.decoded)


def quantized_roundtrip(v: float, w: int, rng: np.random.Generator) -> float:
    return dequantize(quantize_stochastic(v, w, rng))
