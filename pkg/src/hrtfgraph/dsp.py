"""Spectral utilities: radix-2 FFT, HRIR magnitude extraction, minimum-phase
reconstruction and cross-correlation ITD estimation.

Magnitude layout convention used across the package: a pair spectrum is a
flat vector of 2K dB values, left-ear bins first, then right-ear bins.
The DC bin is always excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: magnitudes are floored at this linear value before the dB conversion
MAGNITUDE_FLOOR = 1e-5


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    m = 1
    while m < n:
        m *= 2
    return m


def fft(x, inverse: bool = False) -> np.ndarray:
    """Radix-2 Cooley-Tukey transform of a power-of-two-length signal.

    The inverse transform is scaled by 1/n so fft(fft(x), inverse=True)
    round-trips.
    """
    a = np.asarray(x, dtype=np.complex128).copy()
    n = a.shape[0]
    if a.ndim != 1:
        raise ValueError(f"fft expects a 1-D signal, got shape {a.shape}")
    if not is_pow2(n):
        raise ValueError(f"fft length must be a power of two, got {n}")
    if n == 1:
        return a
    levels = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    work = np.arange(n)
    for _ in range(levels):
        rev = (rev << 1) | (work & 1)
        work >>= 1
    a = a[rev]
    sign = 2.0j if inverse else -2.0j
    m = 2
    while m <= n:
        half = m // 2
        w = np.exp(sign * np.pi * np.arange(half) / m)
        blocks = a.reshape(n // m, m)
        even = blocks[:, :half]
        odd = blocks[:, half:] * w
        a = np.concatenate([even + odd, even - odd], axis=1).reshape(n)
        m *= 2
    if inverse:
        a /= n
    return a


@dataclass(frozen=True)
class MagnitudeSpectrum:
    """Pair magnitude in dB: left K bins then right K bins, DC excluded."""

    db: np.ndarray
    frequencies: np.ndarray

    @property
    def K(self) -> int:
        return self.frequencies.shape[0]

    @property
    def left(self) -> np.ndarray:
        return self.db[: self.K]

    @property
    def right(self) -> np.ndarray:
        return self.db[self.K :]


def hrir_to_magnitude(hrir, sample_rate: float, K: int,
                      floor: float = MAGNITUDE_FLOOR) -> MagnitudeSpectrum:
    """Magnitude spectrum of an HRIR pair on the first K post-DC bins.

    ``hrir`` is [2, taps] (left, right).  The FFT size is the next power of
    two at or above max(taps, 2K), so bin k sits at k * sample_rate / nfft.
    """
    h = np.asarray(hrir, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != 2 or h.shape[1] < 1:
        raise ValueError(f"hrir must be [2, taps], got {h.shape}")
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    if not np.all(np.isfinite(h)):
        raise ValueError("hrir contains non-finite samples")
    nfft = next_pow2(max(h.shape[1], 2 * K))
    padded = np.zeros((2, nfft))
    padded[:, : h.shape[1]] = h
    db = np.empty(2 * K)
    for ear in range(2):
        spectrum = fft(padded[ear])
        mag = np.maximum(np.abs(spectrum[1 : K + 1]), floor)
        db[ear * K : (ear + 1) * K] = 20.0 * np.log10(mag)
    freqs = np.arange(1, K + 1) * (sample_rate / nfft)
    return MagnitudeSpectrum(db=db, frequencies=freqs)


def minimum_phase(db_bins) -> np.ndarray:
    """Minimum-phase impulse response matching a one-ear dB magnitude.

    ``db_bins`` holds K post-DC bins of a 2K-point spectrum (2K must be a
    power of two; bin K is Nyquist).  The DC bin is extrapolated from bin 1.
    Reconstruction mirrors the dB curve to a Hermitian spectrum, folds the
    real cepstrum and exponentiates back; the returned response has length
    2K and reproduces the input magnitude for smooth spectra.
    """
    db = np.asarray(db_bins, dtype=np.float64)
    if db.ndim != 1:
        raise ValueError(f"expected a 1-D dB vector, got shape {db.shape}")
    K = db.shape[0]
    n = 2 * K
    if not is_pow2(n):
        raise ValueError(f"2K must be a power of two, got K={K}")
    if not np.all(np.isfinite(db)):
        raise ValueError("magnitude contains non-finite values")
    linear = 10.0 ** (db / 20.0)
    full = np.concatenate([linear[:1], linear, linear[K - 2 :: -1]])
    cep = np.real(fft(np.log(full), inverse=True))
    folded = np.zeros(n)
    folded[0] = cep[0]
    folded[1:K] = 2.0 * cep[1:K]
    folded[K] = cep[K]
    spectrum = np.exp(fft(folded))
    return np.real(fft(spectrum, inverse=True))


def lsd_db(pred_db, truth_db) -> float:
    """Log-spectral distortion: RMS difference of two dB vectors."""
    a = np.asarray(pred_db, dtype=np.float64)
    b = np.asarray(truth_db, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(np.mean(d * d)))


def estimate_itd(hrir, sample_rate: float, max_lag_s: float = 0.001) -> float:
    """Interaural delay in seconds by integer-lag cross-correlation.

    Positive when the right ear leads.  The search is bounded to
    ``max_lag_s`` on either side, capped at what the IR length supports.
    """
    h = np.asarray(hrir, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != 2:
        raise ValueError(f"hrir must be [2, taps], got {h.shape}")
    left, right = h[0], h[1]
    if not left.any() or not right.any():
        raise ValueError("cannot estimate ITD from a silent channel")
    max_lag = min(int(round(max_lag_s * sample_rate)), h.shape[1] - 1)
    if max_lag < 1:
        raise ValueError(
            f"lag bound {max_lag} samples incompatible with {h.shape[1]} taps"
        )
    full = np.correlate(left, right, mode="full")
    center = right.shape[0] - 1
    window = full[center - max_lag : center + max_lag + 1]
    best = int(np.argmax(window)) - max_lag
    return best / sample_rate
