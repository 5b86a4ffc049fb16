import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from encmpc.config import ConfigError
from encmpc.keys import (BetaVector, KeyConfig, KeyLengthError, KeyReuseError,
                         KeySource, KeyStream, beta_from_bits, betas,
                         generate_key)


def test_shared_randomness_contract():
    cfg = KeyConfig(n=2, m=1, w_b=16)
    a = KeySource(seed=99, cfg=cfg)
    b = KeySource(seed=99, cfg=cfg)
    for k in (0, 1, 7):
        sa = a.stream(k)
        sb = b.stream(k)
        assert np.array_equal(sa.bits, sb.bits)
        assert sa.bits.size == cfg.w_q == 48


def test_distinct_cycles_differ():
    cfg = KeyConfig(n=3, m=2, w_b=16)  # w_q = 80 >= 64
    s0 = generate_key(5, 0, cfg)
    s1 = generate_key(5, 1, cfg)
    assert not np.array_equal(s0.bits, s1.bits)


def test_distinct_seeds_differ():
    cfg = KeyConfig(n=2, m=2, w_b=16)
    assert not np.array_equal(generate_key(1, 0, cfg).bits,
                              generate_key(2, 0, cfg).bits)


def test_bit_mean_near_half():
    cfg = KeyConfig(n=5, m=5, w_b=50)  # 500 bits per cycle
    total = []
    for k in range(200):
        total.append(generate_key(123, k, cfg).bits)
    mean = np.concatenate(total).mean()
    assert 0.49 <= mean <= 0.51


def test_key_reuse_rejected():
    cfg = KeyConfig(n=1, m=1, w_b=8)
    src = KeySource(seed=0, cfg=cfg)
    src.stream(0)
    src.stream(3)
    with pytest.raises(KeyReuseError):
        src.stream(3)
    with pytest.raises(KeyReuseError):
        src.stream(1)


def test_beta_from_bits_examples():
    assert beta_from_bits([0, 0, 0, 0]) == 1
    assert beta_from_bits([0] * 16) == 1
    assert beta_from_bits([1, 0, 0, 0]) == -(8 + 1) + 0 + 1  # -8
    assert beta_from_bits([0, 1, 1, 1]) == 7 + 1              # 8


def test_betas_grouping():
    cfg = KeyConfig(n=1, m=1, w_b=4)
    stream = KeyStream(k=0, bits=np.array([0, 0, 0, 0, 0, 1, 1, 1], dtype=np.uint8))
    bv = betas(stream, cfg)
    assert list(bv.beta) == [1, 8]
    assert list(bv.state_part) == [1]
    assert list(bv.offset_part) == [8]


def test_betas_all_zero_bits():
    cfg = KeyConfig(n=2, m=2, w_b=6)
    bv = betas(KeyStream(k=0, bits=np.zeros(24, dtype=np.uint8)), cfg)
    assert list(bv.beta) == [1, 1, 1, 1]


def test_betas_length_mismatch():
    cfg = KeyConfig(n=2, m=1, w_b=8)
    with pytest.raises(KeyLengthError):
        betas(KeyStream(k=0, bits=np.zeros(10, dtype=np.uint8)), cfg)


def test_beta_image_exhaustive_w3():
    image = set()
    for pattern in range(8):
        bits = [(pattern >> (2 - i)) & 1 for i in range(3)]
        image.add(beta_from_bits(bits))
    assert image == {-4, -3, -2, -1, 1, 2, 3, 4}


@pytest.mark.parametrize("w_b", [2, 3, 5, 8, 10])
def test_beta_nonzero_range_bruteforce(w_b):
    lo, hi = -(2 ** (w_b - 1)), 2 ** (w_b - 1)
    for pattern in range(2 ** w_b):
        bits = [(pattern >> (w_b - 1 - i)) & 1 for i in range(w_b)]
        beta = beta_from_bits(bits)
        assert beta != 0
        assert lo <= beta <= hi


def test_betas_matches_scalar_path():
    """Vectorized betas agrees with the scalar beta_from_bits on every group."""
    cfg = KeyConfig(n=3, m=2, w_b=11)
    stream = generate_key(77, 4, cfg)
    bv = betas(stream, cfg)
    groups = stream.bits.reshape(cfg.d, cfg.w_b)
    for i in range(cfg.d):
        assert bv.beta[i] == beta_from_bits(groups[i])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 64 - 1),
       k=st.integers(min_value=0, max_value=2 ** 32))
def test_generate_key_pure(seed, k):
    cfg = KeyConfig(n=2, m=1, w_b=8)
    assert np.array_equal(generate_key(seed, k, cfg).bits,
                          generate_key(seed, k, cfg).bits)


def test_config_validation():
    with pytest.raises(ConfigError):
        KeyConfig(n=0, m=1)
    with pytest.raises(ConfigError):
        KeyConfig(n=1, m=1, w_b=1)
    with pytest.raises(ConfigError):
        KeyConfig(n=1, m=1, w_b=63)
    with pytest.raises(ConfigError):
        KeySource(seed=-1, cfg=KeyConfig(n=1, m=1))
    with pytest.raises(ConfigError):
        generate_key(0, -1, KeyConfig(n=1, m=1))
