"""Paillier cryptosystem with fixed-point encoding for encrypted affine control.

Implements the g = n+1 variant: keys are (n, lambda, mu) with
lambda = lcm(p-1, q-1) and mu = lambda^{-1} mod n.  Ciphertexts live in
Z_{n^2}^* and support addition of plaintexts (ciphertext product) and
multiplication by a known plaintext constant (ciphertext power), which is
all an affine control law u = Kx + b needs.

Real numbers enter through a fixed-point codec on the grid rho^{-delta}.
States and gains are encoded at scale delta; offsets are pre-scaled to
2*delta by the encrypting party so that gain-times-state products and
offsets share a scale and ciphertext addition is meaningful.  Negative
values use the upper half (n/2, n) of the residue ring.
"""

import math
from dataclasses import dataclass

import numpy as np


class PlaintextRange(ValueError):
    """Plaintext integer outside [0, n)."""


class KeyMismatch(ValueError):
    """Operands encrypted under different public keys."""


@dataclass(frozen=True)
class PaillierPublicKey:
    """Encryption half of a keypair: modulus only, no trapdoor material."""

    n: int
    n_sq: int
    bits: int


@dataclass(frozen=True)
class PaillierKeypair:
    public: PaillierPublicKey
    lam: int
    mu: int

    @property
    def n(self):
        return self.public.n

    @property
    def n_sq(self):
        return self.public.n_sq


@dataclass(frozen=True)
class HeCiphertext:
    """Paillier ciphertext tagged with its modulus square for key checks."""

    value: int
    n_sq: int


_SMALL_PRIMES = [2, 3]
for _cand in range(5, 2000, 2):
    if all(_cand % _p for _p in _SMALL_PRIMES):
        _SMALL_PRIMES.append(_cand)


def is_probable_prime(n, rng, rounds=40):
    """Miller-Rabin with trial division by small primes first."""
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits, rng):
    while True:
        cand = rng.getrandbits(bits)
        cand |= (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        if is_probable_prime(cand, rng):
            return cand


VALID_KEY_BITS = (256, 512, 1024, 2048)


def keygen(bits, rng):
    """Generate a keypair with an n of exactly `bits` bits.

    Sizes below 1024 are fast-test sizes, not secure parameters.  `rng`
    is a random.Random instance; seed it from os.urandom for real use.
    """
    if bits not in VALID_KEY_BITS:
        raise ValueError(f"key size {bits} not in {VALID_KEY_BITS}")
    half = bits // 2
    while True:
        p = _random_prime(half, rng)
        q = _random_prime(half, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        if math.gcd(n, (p - 1) * (q - 1)) != 1:
            continue
        lam = math.lcm(p - 1, q - 1)
        mu = pow(lam, -1, n)
        return PaillierKeypair(PaillierPublicKey(n, n * n, bits), lam, mu)


def he_enc(z, pk, rng):
    """Encrypt integer z in [0, n): c = (n+1)^z r^n mod n^2."""
    z = int(z)
    if not 0 <= z < pk.n:
        raise PlaintextRange(f"plaintext {z} outside [0, {pk.n})")
    while True:
        r = rng.randrange(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            break
    # (n+1)^z mod n^2 collapses binomially to 1 + z n
    gz = (1 + z * pk.n) % pk.n_sq
    return HeCiphertext(gz * pow(r, pk.n, pk.n_sq) % pk.n_sq, pk.n_sq)


def he_dec(ct, keypair):
    """Decrypt to the plaintext residue in [0, n)."""
    if ct.n_sq != keypair.n_sq:
        raise KeyMismatch("ciphertext not under this keypair")
    u = pow(ct.value, keypair.lam, keypair.n_sq)
    return (u - 1) // keypair.n * keypair.mu % keypair.n


def he_add(c1, c2, pk):
    """Ciphertext of z1 + z2 mod n."""
    if c1.n_sq != pk.n_sq or c2.n_sq != pk.n_sq:
        raise KeyMismatch("operands under different keys")
    return HeCiphertext(c1.value * c2.value % pk.n_sq, pk.n_sq)


def he_scalar_mul(a, ct, pk):
    """Ciphertext of a*z mod n for known signed integer a.

    Negative a goes through the modular inverse of the ciphertext, so
    the exponent magnitude (hence cost) tracks |a|, not a mod n.
    """
    if ct.n_sq != pk.n_sq:
        raise KeyMismatch("ciphertext under a different key")
    return HeCiphertext(pow(ct.value, int(a), pk.n_sq), pk.n_sq)


@dataclass(frozen=True)
class FixedPointCodec:
    """Signed fixed-point numbers on the grid rho^-delta inside Z_n.

    gamma bounds the integer part (|x| <= rho^gamma), delta sets the
    resolution.  One encrypted affine evaluation multiplies two scale-
    delta values and adds a scale-2*delta offset, so the headroom
    invariant 2 rho^(gamma + 2 delta) < n guarantees no wrap-around.
    """

    rho: int
    gamma: int
    delta: int
    modulus: int

    def __post_init__(self):
        if self.rho < 2:
            raise ValueError("rho must be >= 2")
        if self.gamma < 0 or self.delta < 1:
            raise ValueError("need gamma >= 0 and delta >= 1")
        if 2 * self.rho ** (self.gamma + 2 * self.delta) >= self.modulus:
            raise OverflowError(
                "modulus too small for one affine evaluation: "
                f"2*rho^(gamma+2delta) = {2 * self.rho ** (self.gamma + 2 * self.delta)}"
                f" >= n = {self.modulus}"
            )

    @property
    def resolution(self):
        return float(self.rho) ** -self.delta


def fp_encode(x, codec, scale_power=1):
    """Round x to the scale grid and reduce mod n (upper half = negative)."""
    x = float(x)
    if abs(x) > codec.rho ** codec.gamma:
        raise OverflowError(f"|{x}| exceeds rho^gamma = {codec.rho ** codec.gamma}")
    if scale_power not in (1, 2):
        raise ValueError("scale_power must be 1 or 2")
    q = round(x * codec.rho ** (codec.delta * scale_power))
    return q % codec.modulus


def fp_decode(v, codec, scale_power=1):
    """Invert fp_encode: lift the residue to a signed integer, rescale."""
    v = int(v) % codec.modulus
    if scale_power not in (1, 2):
        raise ValueError("scale_power must be 1 or 2")
    if v > codec.modulus // 2:
        v -= codec.modulus
    return v * float(codec.rho) ** -(codec.delta * scale_power)


def encode_gain(K, codec):
    """Quantize a gain matrix to signed scale-delta integers (not reduced)."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    top = codec.rho ** codec.gamma
    if np.any(np.abs(K) > top):
        raise OverflowError("gain entry exceeds rho^gamma")
    scale = codec.rho ** codec.delta
    return [[round(float(v) * scale) for v in row] for row in K]


def gain_bitlen(K_hat):
    """b_K: max bit length over encoded gain entries (>= 1)."""
    longest = max((abs(int(v)).bit_length() for row in K_hat for v in row), default=0)
    return max(longest, 1)


def he_eval_pwa(sigma, enc_x, K_hat, enc_b, pk, counters=None):
    """Encrypted affine law for region sigma: u~_j = b~_j + sum_i K_hat[j][i] (x) x~_i.

    Takes only the public key, so decryption is impossible here by
    construction.  enc_x must be at scale delta and enc_b at scale
    2*delta; the result is at scale 2*delta.  If a counters dict is
    given, he_mul and he_add are incremented once per primitive call.
    """
    if sigma < 0:
        raise ValueError("region index must be nonnegative")
    if len(K_hat) != len(enc_b):
        raise ValueError("gain rows and offset length disagree")
    out = []
    for j, row in enumerate(K_hat):
        if len(row) != len(enc_x):
            raise ValueError("gain columns and state length disagree")
        acc = enc_b[j]
        for a, ct in zip(row, enc_x):
            acc = he_add(acc, he_scalar_mul(a, ct, pk), pk)
            if counters is not None:
                counters["he_mul"] += 1
                counters["he_add"] += 1
        out.append(acc)
    return out
