"""Non-learned reference methods: nearest neighbor, whole-set selection,
and ring-based linear interpolation."""

from __future__ import annotations

import numpy as np

from .dsp import estimate_itd, lsd_db
from .features import ild_scalar
from .graphs import pairwise_angular_distance

SELECTION_KINDS = ("lsd", "itd", "ild")


def nearest_neighbor(measured_spectra, measured_directions, query) -> np.ndarray:
    """Copy of the measured spectrum angularly closest to the query.

    Ties go to the lowest index.
    """
    spectra = np.asarray(measured_spectra, dtype=np.float64)
    dist = pairwise_angular_distance(measured_directions, query)[:, 0]
    if spectra.shape[0] != dist.shape[0] or spectra.shape[0] < 1:
        raise ValueError(
            f"{spectra.shape[0]} spectra for {dist.shape[0]} directions"
        )
    return spectra[int(np.argmin(dist))].copy()


def hrtf_selection(bundle, candidate_ids, target_id, subset_indices,
                   kind: str):
    """Pick the candidate whose measured subset best matches the target's.

    ``kind`` picks the matching error: mean LSD, mean absolute ITD
    difference (needs HRIRs), or mean absolute ILD difference.  The chosen
    subject's spectra are returned verbatim for every direction.  Ties keep
    the earliest candidate in the given order.
    """
    if kind not in SELECTION_KINDS:
        raise ValueError(f"unknown selection kind {kind!r}")
    if not candidate_ids:
        raise ValueError("empty candidate set")
    if kind == "itd" and bundle.hrirs is None:
        raise ValueError("itd selection needs a bundle with hrirs")
    t = bundle.subject_index(target_id)
    mag = bundle.magnitudes.astype(np.float64)

    def target_scalar(d):
        if kind == "ild":
            return ild_scalar(mag[t, d])
        return estimate_itd(bundle.hrirs[t, d].astype(np.float64),
                            bundle.sample_rate)

    best_id, best_err = None, np.inf
    for cid in candidate_ids:
        c = bundle.subject_index(cid)
        if kind == "lsd":
            err = np.mean([lsd_db(mag[c, d], mag[t, d])
                           for d in subset_indices])
        elif kind == "ild":
            err = np.mean([abs(ild_scalar(mag[c, d]) - target_scalar(d))
                           for d in subset_indices])
        else:
            err = np.mean([
                abs(estimate_itd(bundle.hrirs[c, d].astype(np.float64),
                                 bundle.sample_rate) - target_scalar(d))
                for d in subset_indices
            ])
        if err < best_err:
            best_id, best_err = cid, float(err)
    c = bundle.subject_index(best_id)
    return best_id, mag[c].copy()


def linear_interp(measured_spectra, measured_directions, query) -> np.ndarray:
    """Blend of the two azimuthally nearest samples on the nearest
    elevation ring, weighted by inverse angular distance.

    Collapses to the sample itself when the query coincides with one.
    Rings are groups of equal elevation; a one-point ring degenerates to
    that point.
    """
    spectra = np.asarray(measured_spectra, dtype=np.float64)
    dirs = np.asarray(measured_directions, dtype=np.float64)
    if spectra.shape[0] != dirs.shape[0] or spectra.shape[0] < 2:
        raise ValueError(
            f"need >= 2 measured directions, got {spectra.shape[0]}"
        )
    dist = pairwise_angular_distance(dirs, query)[:, 0]
    hit = int(np.argmin(dist))
    if dist[hit] < 1e-9:
        return spectra[hit].copy()

    q = np.asarray(query, dtype=np.float64).reshape(-1)
    elevations = np.unique(dirs[:, 1])
    ring_el = elevations[int(np.argmin(np.abs(elevations - q[1])))]
    ring = np.nonzero(np.abs(dirs[:, 1] - ring_el) < 1e-6)[0]

    az_gap = np.abs(dirs[ring, 0] - q[0]) % 360.0
    az_gap = np.minimum(az_gap, 360.0 - az_gap)
    order = np.argsort(az_gap, kind="stable")
    chosen = ring[order[: min(2, ring.size)]]

    d = dist[chosen]
    w = 1.0 / d
    w /= w.sum()
    return (w[:, None] * spectra[chosen]).sum(axis=0)
