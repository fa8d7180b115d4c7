"""Spectral helpers against definition-level oracles.

The FFT is checked against a naive O(n^2) DFT written straight from the
transform definition; nothing here reuses the code path under test.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hrtfgraph.dsp import (
    estimate_itd,
    fft,
    hrir_to_magnitude,
    is_pow2,
    lsd_db,
    MAGNITUDE_FLOOR,
    minimum_phase,
    next_pow2,
)


def naive_dft(x, inverse=False):
    """Direct evaluation of the transform sum; the independent oracle."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    k = np.arange(n)
    sign = 2j if inverse else -2j
    M = np.exp(sign * np.pi * np.outer(k, k) / n)
    out = M @ x
    return out / n if inverse else out


@pytest.mark.parametrize("n", [2, 4, 8, 16, 64, 256, 1024])
def test_fft_matches_naive_dft(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    got = fft(x)
    want = naive_dft(x)
    assert np.max(np.abs(got - want)) < 1e-9


@pytest.mark.parametrize("n", [2, 32, 512])
def test_inverse_fft_matches_naive(n):
    rng = np.random.default_rng(n + 1)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    assert np.max(np.abs(fft(x, inverse=True) - naive_dft(x, inverse=True))) \
        < 1e-9


def test_fft_round_trip():
    rng = np.random.default_rng(3)
    x = rng.normal(size=128) + 1j * rng.normal(size=128)
    assert np.max(np.abs(fft(fft(x), inverse=True) - x)) < 1e-12


def test_fft_rejects_bad_input():
    with pytest.raises(ValueError):
        fft(np.zeros(12))      # not a power of two
    with pytest.raises(ValueError):
        fft(np.zeros((4, 4)))  # not 1-D


def test_pow2_helpers():
    assert is_pow2(1) and is_pow2(64)
    assert not is_pow2(0) and not is_pow2(48)
    assert next_pow2(48) == 64
    assert next_pow2(64) == 64
    assert next_pow2(65) == 128


# -- magnitude analysis ----------------------------------------------------

def test_magnitude_layout_and_frequencies():
    rng = np.random.default_rng(5)
    K = 16
    hrir = rng.normal(size=(2, 2 * K))
    spec = hrir_to_magnitude(hrir, 48000.0, K)
    assert spec.db.shape == (2 * K,)
    assert spec.K == K
    assert spec.left.shape == (K,) and spec.right.shape == (K,)
    # bins 1..K of an nfft=2K grid: DC excluded, Nyquist included
    np.testing.assert_allclose(
        spec.frequencies, 48000.0 * np.arange(1, K + 1) / (2 * K)
    )


def test_magnitude_against_naive_dft():
    rng = np.random.default_rng(6)
    K = 16
    hrir = rng.normal(size=(2, 2 * K))
    spec = hrir_to_magnitude(hrir, 48000.0, K)
    for ear, half in ((0, spec.left), (1, spec.right)):
        mags = np.abs(naive_dft(hrir[ear]))[1 : K + 1]
        np.testing.assert_allclose(
            half, 20.0 * np.log10(np.maximum(mags, MAGNITUDE_FLOOR)),
            atol=1e-10,
        )


def test_magnitude_floor_on_silence():
    spec = hrir_to_magnitude(np.zeros((2, 32)), 48000.0, 16)
    np.testing.assert_allclose(spec.db, 20.0 * np.log10(MAGNITUDE_FLOOR),
                               atol=1e-12)


def test_short_hrir_padded_to_2k():
    rng = np.random.default_rng(7)
    K = 16
    hrir = rng.normal(size=(2, 20))  # fewer taps than 2K
    padded = np.zeros((2, 2 * K))
    padded[:, :20] = hrir
    np.testing.assert_allclose(
        hrir_to_magnitude(hrir, 48000.0, K).db,
        hrir_to_magnitude(padded, 48000.0, K).db,
        atol=1e-12,
    )


# -- log-spectral distortion -----------------------------------------------

def test_lsd_identical_is_exactly_zero():
    x = np.random.default_rng(8).normal(size=32)
    assert lsd_db(x, x) == 0.0


def test_lsd_constant_offset():
    x = np.random.default_rng(9).normal(size=32)
    assert abs(lsd_db(x + 20.0, x) - 20.0) < 1e-9


def test_lsd_linear_domain_oracle():
    # RMS of 20*log10(a/b) computed in the linear domain must agree with
    # the dB-vector formula to machine precision
    rng = np.random.default_rng(10)
    a = np.abs(rng.normal(size=64)) + 0.1
    b = np.abs(rng.normal(size=64)) + 0.1
    want = float(np.sqrt(np.mean((20.0 * np.log10(a / b)) ** 2)))
    got = lsd_db(20.0 * np.log10(a), 20.0 * np.log10(b))
    assert abs(got - want) < 1e-12


def test_lsd_shape_mismatch():
    with pytest.raises(ValueError):
        lsd_db(np.zeros(4), np.zeros(5))


# -- minimum phase ---------------------------------------------------------

def smooth_db_spectrum(K, seed):
    rng = np.random.default_rng(seed)
    f = np.linspace(0.0, 1.0, K)
    db = np.zeros(K)
    for _ in range(3):
        c, w, g = rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.3), \
            rng.uniform(-6, 6)
        db += g * np.exp(-0.5 * ((f - c) / w) ** 2)
    return db


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_minimum_phase_magnitude_round_trip(seed):
    K = 64
    db = smooth_db_spectrum(K, seed)
    ir = minimum_phase(db)
    assert ir.shape == (2 * K,)
    back = 20.0 * np.log10(
        np.maximum(np.abs(naive_dft(ir))[1 : K + 1], MAGNITUDE_FLOOR)
    )
    rms = float(np.sqrt(np.mean((back - db) ** 2)))
    assert rms < 1e-6


def test_minimum_phase_energy_front_loaded():
    # the defining property: energy concentrates at the start of the IR
    db = smooth_db_spectrum(64, 3)
    ir = minimum_phase(db)
    head = float(np.sum(ir[:32] ** 2))
    tail = float(np.sum(ir[96:] ** 2))
    assert head > 10.0 * tail


# -- interaural delay ------------------------------------------------------

@pytest.mark.parametrize("delay", [-10, -3, 0, 3, 10])
def test_itd_planted_integer_delay(delay):
    rng = np.random.default_rng(11)
    base = rng.normal(size=64) * np.exp(-np.arange(64) / 8.0)
    left = np.roll(base, 16)
    right = np.roll(base, 16 + delay)  # delay > 0: right lags left
    itd = estimate_itd(np.stack([left, right]), 48000.0)
    assert itd == -delay / 48000.0


def test_itd_silent_channel_rejected():
    with pytest.raises(ValueError):
        estimate_itd(np.stack([np.zeros(32), np.ones(32)]), 48000.0)


def test_itd_lag_window_capped_by_taps():
    rng = np.random.default_rng(12)
    h = rng.normal(size=(2, 16))  # 1 ms at 48 kHz would exceed 16 taps
    estimate_itd(h, 48000.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12))
def test_itd_antisymmetric_under_channel_swap(delay):
    rng = np.random.default_rng(delay)
    base = rng.normal(size=128) * np.exp(-np.arange(128) / 10.0)
    left = np.roll(base, 20)
    right = np.roll(base, 20 + delay)
    fwd = estimate_itd(np.stack([left, right]), 48000.0)
    rev = estimate_itd(np.stack([right, left]), 48000.0)
    assert fwd == -rev
