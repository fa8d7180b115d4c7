"""Subject descriptors, clue vectors, and random Fourier features.

A subject feature is one scalar per measured direction (ILD or ITD).  A
clue concatenates the query direction in radians with the standardized
feature vector; the random Fourier encoder lifts it before it enters the
network.  LSD-based similarity is not a vector feature: it ranks
candidates directly by spectral distance, so it has its own entry point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import estimate_itd, lsd_db

FEATURE_KINDS = ("ild", "itd", "lsd")


def ild_scalar(mag_db) -> float:
    """Mean left-minus-right level difference in dB over the K bins."""
    m = np.asarray(mag_db, dtype=np.float64)
    if m.ndim != 1 or m.shape[0] % 2 != 0:
        raise ValueError(f"expected a flat 2K dB vector, got shape {m.shape}")
    K = m.shape[0] // 2
    return float(np.mean(m[:K] - m[K:]))


def subject_feature(bundle, subject_id, subset_indices, kind: str) -> np.ndarray:
    """One scalar per measured direction for a subject.

    ``kind`` is "ild" or "itd"; ITD needs HRIRs in the bundle.  For LSD
    similarity use :func:`rank_subjects_by_lsd` instead.
    """
    if kind not in ("ild", "itd"):
        raise ValueError(f"no vector feature of kind {kind!r}")
    if not subset_indices:
        raise ValueError("empty measurement subset")
    s = bundle.subject_index(subject_id)
    if kind == "ild":
        return np.array(
            [ild_scalar(bundle.magnitudes[s, d].astype(np.float64))
             for d in subset_indices]
        )
    if bundle.hrirs is None:
        raise ValueError("itd features need a bundle with hrirs")
    return np.array(
        [estimate_itd(bundle.hrirs[s, d].astype(np.float64), bundle.sample_rate)
         for d in subset_indices]
    )


def rank_subjects_by_lsd(bundle, candidate_ids, target_spectra,
                         subset_indices) -> list:
    """Candidates ordered by mean LSD against the target's measured spectra.

    ``target_spectra`` is [len(subset), 2K] dB.  Ties break by subject id.
    """
    target = np.asarray(target_spectra, dtype=np.float64)
    if target.shape[0] != len(subset_indices):
        raise ValueError(
            f"{target.shape[0]} target rows for {len(subset_indices)} subset dirs"
        )
    scored = []
    for cid in candidate_ids:
        c = bundle.subject_index(cid)
        err = np.mean(
            [lsd_db(bundle.magnitudes[c, d].astype(np.float64), target[j])
             for j, d in enumerate(subset_indices)]
        )
        scored.append((float(err), str(cid), cid))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [cid for _, _, cid in scored]


@dataclass(frozen=True)
class FeatureStats:
    """Per-component mean and deviation of the training feature vectors."""

    mean: np.ndarray
    std: np.ndarray

    def standardize(self, vec) -> np.ndarray:
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != self.mean.shape:
            raise ValueError(
                f"feature length {v.shape} does not match stats {self.mean.shape}"
            )
        return (v - self.mean) / self.std


def compute_feature_stats(vectors) -> FeatureStats:
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise ValueError(f"need [n, F] feature rows, got shape {mat.shape}")
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)
    # constant components would otherwise divide by zero
    std = np.where(std < 1e-12, 1.0, std)
    return FeatureStats(mean=mean, std=std)


def build_clue(direction, feature_vec, stats: FeatureStats) -> np.ndarray:
    """[azimuth_rad, elevation_rad, standardized feature...]."""
    if hasattr(direction, "azimuth_deg"):
        az = float(direction.azimuth_deg)
        el = float(direction.elevation_deg)
    else:
        pair = np.asarray(direction, dtype=np.float64)
        az, el = float(pair[0]), float(pair[1])
    return np.concatenate(
        [[np.radians(az), np.radians(el)], stats.standardize(feature_vec)]
    )


@dataclass(frozen=True)
class RffEncoder:
    """Random Fourier feature map x -> [cos(2 pi Bx); sin(2 pi Bx)].

    B is Gaussian, drawn once and frozen; it ships with the model
    checkpoint so encodings are reproducible at inference.
    """

    matrix: np.ndarray  # [n_features, in_dim]

    @classmethod
    def create(cls, rng: np.random.Generator, in_dim: int,
               n_features: int = 64, sigma: float = 1.0) -> "RffEncoder":
        if in_dim < 1 or n_features < 1 or sigma <= 0:
            raise ValueError(
                f"bad rff parameters: in_dim={in_dim}, n={n_features}, sigma={sigma}"
            )
        return cls(matrix=rng.normal(0.0, sigma, size=(n_features, in_dim)))

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_dim(self) -> int:
        return 2 * self.matrix.shape[0]

    def encode(self, x) -> np.ndarray:
        v = np.asarray(x, dtype=np.float64)
        if v.shape != (self.in_dim,):
            raise ValueError(f"expected shape ({self.in_dim},), got {v.shape}")
        phase = 2.0 * np.pi * (self.matrix @ v)
        return np.concatenate([np.cos(phase), np.sin(phase)])

    def encode_many(self, xs) -> np.ndarray:
        mat = np.asarray(xs, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != self.in_dim:
            raise ValueError(
                f"expected [n, {self.in_dim}] inputs, got shape {mat.shape}"
            )
        phase = 2.0 * np.pi * (mat @ self.matrix.T)
        return np.concatenate([np.cos(phase), np.sin(phase)], axis=1)
