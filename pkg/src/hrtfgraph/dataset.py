"""Portable HRTF bundle format, synthetic dataset generation, and splits.

A bundle is a directory holding ``manifest.json`` plus raw little-endian
float32 payloads.  ``magnitudes.f32`` is [subjects, directions, 2K] in dB
(left K bins then right K); the optional ``hrirs.f32`` is
[subjects, directions, 2, taps].  Ordering is subject-major, then
direction, then bin, matching the manifest's subject and direction lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import hrir_to_magnitude, is_pow2, minimum_phase
from .graphs import pairwise_angular_distance

BUNDLE_VERSION = 1
MANIFEST_NAME = "manifest.json"
MAGNITUDES_NAME = "magnitudes.f32"
HRIRS_NAME = "hrirs.f32"


class BundleError(Exception):
    """Base class for bundle I/O failures."""


class ManifestError(BundleError):
    """Manifest missing, unparseable, or with wrong keys/types."""


class UnsupportedVersionError(BundleError):
    """Manifest declares a version this code does not read."""


class ShapeMismatchError(BundleError):
    """Binary payload size disagrees with the manifest."""


@dataclass
class HrtfBundle:
    subjects: list
    directions: np.ndarray  # [D, 2] (az_deg, el_deg) float64
    K: int
    sample_rate: float
    magnitudes: np.ndarray  # [S, D, 2K] float32 dB
    hrirs: np.ndarray | None = None  # [S, D, 2, taps] float32
    provenance: str = ""

    @property
    def taps(self) -> int:
        return 0 if self.hrirs is None else self.hrirs.shape[3]

    def subject_index(self, subject_id) -> int:
        try:
            return self.subjects.index(subject_id)
        except ValueError:
            raise KeyError(f"unknown subject {subject_id!r}") from None

    def direction_index(self, direction) -> int:
        """Index of a direction; accepts an int index or an (az, el) pair."""
        if isinstance(direction, (int, np.integer)):
            idx = int(direction)
            if not 0 <= idx < self.directions.shape[0]:
                raise KeyError(f"direction index {idx} out of range")
            return idx
        az = float(getattr(direction, "azimuth_deg", np.asarray(direction)[0]))
        el = float(getattr(direction, "elevation_deg", np.asarray(direction)[1]))
        hit = np.nonzero(
            (np.abs(self.directions[:, 0] - az) < 1e-9)
            & (np.abs(self.directions[:, 1] - el) < 1e-9)
        )[0]
        if hit.size == 0:
            raise KeyError(f"direction ({az}, {el}) not in bundle")
        return int(hit[0])

    def validate(self):
        S, D = len(self.subjects), self.directions.shape[0]
        if S < 1 or D < 1:
            raise ManifestError("bundle needs at least one subject and direction")
        if len(set(map(str, self.subjects))) != S:
            raise ManifestError("duplicate subject ids")
        if self.directions.shape != (D, 2):
            raise ManifestError(f"directions shape {self.directions.shape}")
        az, el = self.directions[:, 0], self.directions[:, 1]
        if np.any((az < 0) | (az >= 360)) or np.any((el < -90) | (el > 90)):
            raise ManifestError("directions outside az [0,360) x el [-90,90]")
        if len({(a, e) for a, e in map(tuple, self.directions)}) != D:
            raise ManifestError("duplicate directions")
        if self.K < 1 or self.sample_rate <= 0:
            raise ManifestError(f"bad K/sample_rate: {self.K}/{self.sample_rate}")
        if self.magnitudes.shape != (S, D, 2 * self.K):
            raise ShapeMismatchError(
                f"magnitudes shape {self.magnitudes.shape}, "
                f"expected {(S, D, 2 * self.K)}"
            )
        if not np.all(np.isfinite(self.magnitudes)):
            raise ShapeMismatchError("non-finite magnitude values")
        if self.hrirs is not None:
            if self.hrirs.ndim != 4 or self.hrirs.shape[:3] != (S, D, 2):
                raise ShapeMismatchError(
                    f"hrirs shape {self.hrirs.shape}, expected "
                    f"({S}, {D}, 2, taps)"
                )
            if not np.all(np.isfinite(self.hrirs)):
                raise ShapeMismatchError("non-finite hrir samples")


def save_bundle(bundle: HrtfBundle, path) -> Path:
    bundle.validate()
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": BUNDLE_VERSION,
        "subjects": [str(s) for s in bundle.subjects],
        "directions": [[float(a), float(e)] for a, e in bundle.directions],
        "K": int(bundle.K),
        "sample_rate": float(bundle.sample_rate),
        "has_hrirs": bundle.hrirs is not None,
        "taps": int(bundle.taps),
        "provenance": str(bundle.provenance),
    }
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    bundle.magnitudes.astype("<f4").tofile(out / MAGNITUDES_NAME)
    if bundle.hrirs is not None:
        bundle.hrirs.astype("<f4").tofile(out / HRIRS_NAME)
    return out


def _require(manifest: dict, key: str, kinds):
    if key not in manifest:
        raise ManifestError(f"manifest missing key {key!r}")
    value = manifest[key]
    if not isinstance(value, kinds):
        raise ManifestError(f"manifest key {key!r} has type {type(value).__name__}")
    return value


def load_bundle(path) -> HrtfBundle:
    root = Path(path)
    mpath = root / MANIFEST_NAME
    if not mpath.is_file():
        raise ManifestError(f"no manifest at {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as err:
        raise ManifestError(f"unparseable manifest: {err}") from None
    if not isinstance(manifest, dict):
        raise ManifestError("manifest is not a JSON object")
    version = _require(manifest, "version", int)
    if version != BUNDLE_VERSION:
        raise UnsupportedVersionError(f"bundle version {version}, expected 1")
    subjects = [str(s) for s in _require(manifest, "subjects", list)]
    directions = np.array(
        _require(manifest, "directions", list), dtype=np.float64
    ).reshape(-1, 2)
    K = _require(manifest, "K", int)
    sample_rate = float(_require(manifest, "sample_rate", (int, float)))
    has_hrirs = _require(manifest, "has_hrirs", bool)
    taps = _require(manifest, "taps", int)

    S, D = len(subjects), directions.shape[0]
    mags = _read_payload(root / MAGNITUDES_NAME, (S, D, 2 * K))
    hrirs = None
    if has_hrirs:
        hrirs = _read_payload(root / HRIRS_NAME, (S, D, 2, taps))
    bundle = HrtfBundle(
        subjects=subjects,
        directions=directions,
        K=K,
        sample_rate=sample_rate,
        magnitudes=mags,
        hrirs=hrirs,
        provenance=str(manifest.get("provenance", "")),
    )
    bundle.validate()
    return bundle


def _read_payload(path: Path, shape) -> np.ndarray:
    if not path.is_file():
        raise ShapeMismatchError(f"missing payload {path.name}")
    raw = np.fromfile(path, dtype="<f4")
    expected = int(np.prod(shape))
    if raw.size != expected:
        raise ShapeMismatchError(
            f"{path.name} holds {raw.size} floats, manifest implies {expected}"
        )
    return raw.reshape(shape)


def verify_consistency(bundle: HrtfBundle, atol_db: float = 1e-6) -> float:
    """Worst disagreement (dB) between stored magnitudes and the HRIRs.

    Magnitudes are stored float32, so the recomputed value is rounded the
    same way before comparison.
    """
    if bundle.hrirs is None:
        raise ValueError("bundle has no hrirs to verify against")
    worst = 0.0
    for s in range(len(bundle.subjects)):
        for d in range(bundle.directions.shape[0]):
            mag = hrir_to_magnitude(
                bundle.hrirs[s, d].astype(np.float64), bundle.sample_rate, bundle.K
            )
            err = np.max(
                np.abs(mag.db.astype(np.float32) - bundle.magnitudes[s, d])
            )
            worst = max(worst, float(err))
    if worst > atol_db:
        raise ShapeMismatchError(
            f"magnitudes disagree with hrirs by {worst} dB"
        )
    return worst


# -- synthetic data --------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the seeded synthetic HRTF population.

    2K must be a power of two so the minimum-phase reconstruction and the
    magnitude analysis share one FFT grid.
    """

    seed: int = 0
    subject_count: int = 40
    direction_count: int = 200
    K: int = 64
    sample_rate: float = 48000.0
    head_radius_m: tuple = (0.07, 0.11)
    resonance_count: int = 3
    resonance_freq_hz: tuple = (2000.0, 14000.0)
    resonance_width_hz: tuple = (500.0, 3000.0)
    resonance_gain_db: tuple = (-8.0, 8.0)
    speed_of_sound: float = 343.0
    shadow_strength: float = 1.5

    def validate(self):
        if self.subject_count < 1 or self.direction_count < 8:
            raise ValueError(
                f"need >= 1 subject and >= 8 directions, got "
                f"{self.subject_count}/{self.direction_count}"
            )
        if self.K < 8 or self.K % 8 != 0 or not is_pow2(2 * self.K):
            raise ValueError(f"K must be a power of two >= 8, got {self.K}")
        lo, hi = self.head_radius_m
        if not 0.06 < lo <= hi < 0.12:
            raise ValueError(f"head radius range {self.head_radius_m} outside (0.06, 0.12)")
        if self.resonance_count < 0 or self.sample_rate <= 0:
            raise ValueError("bad resonance count or sample rate")
        if self.speed_of_sound <= 0:
            raise ValueError("speed of sound must be positive")


def sphere_grid(n: int) -> np.ndarray:
    """Quasi-uniform (az, el) grid from the Fibonacci spiral, n >= 1."""
    i = np.arange(n)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    az = (360.0 * ((i / golden) % 1.0)) % 360.0
    el = np.degrees(np.arcsin(1.0 - 2.0 * (i + 0.5) / n))
    return np.stack([az, el], axis=1)


def generate_synthetic(config: SyntheticConfig) -> HrtfBundle:
    """Seeded synthetic population with head shadow, Woodworth delays and
    subject-specific elevation-dependent resonances.

    Magnitudes are recomputed from the final float32 HRIRs, so the stored
    fields are mutually consistent by construction.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    S, D, K = config.subject_count, config.direction_count, config.K
    taps = 2 * K
    fs = config.sample_rate
    c = config.speed_of_sound

    directions = sphere_grid(D)
    vecs_el = np.radians(directions[:, 1])
    vecs_az = np.radians(directions[:, 0])
    # y-component of the direction unit vector: +1 at the left ear
    side = np.cos(vecs_el) * np.sin(vecs_az)
    side = np.clip(side, -1.0, 1.0)
    lateral = np.arcsin(side)  # signed lateral angle, + toward the left
    beta_left = np.arccos(side)  # incidence angle at the left ear axis
    beta_right = np.arccos(-side)

    freqs = np.arange(1, K + 1) * (fs / (2 * K))

    radii = rng.uniform(*config.head_radius_m, size=S)
    res_cf = rng.uniform(*config.resonance_freq_hz, size=(S, config.resonance_count))
    res_w = rng.uniform(*config.resonance_width_hz, size=(S, config.resonance_count))
    res_g = rng.uniform(*config.resonance_gain_db, size=(S, config.resonance_count))

    subjects = [f"s{idx:03d}" for idx in range(S)]
    hrirs = np.empty((S, D, 2, taps), dtype=np.float32)
    magnitudes = np.empty((S, D, 2 * K), dtype=np.float32)
    base_delay = taps // 4

    for s in range(S):
        r = radii[s]
        f_cut = 4.0 * c / (2.0 * np.pi * r)
        shade = config.shadow_strength * 10.0 * np.log10(1.0 + (freqs / f_cut) ** 2)
        itd_s = np.sign(lateral) * (r / c) * (np.abs(lateral) + np.sin(np.abs(lateral)))
        for d in range(D):
            el_rad = vecs_el[d]
            cf = res_cf[s] * (1.0 + 0.15 * np.sin(el_rad))
            bumps = (
                res_g[s][None, :]
                * np.exp(-((freqs[:, None] - cf[None, :]) ** 2)
                         / (2.0 * res_w[s][None, :] ** 2))
            ).sum(axis=1)
            half_itd = 0.5 * itd_s[d] * fs
            for ear, beta, lag in (
                (0, beta_left[d], -half_itd),
                (1, beta_right[d], +half_itd),
            ):
                shadow = 0.5 * (1.0 - np.cos(beta))
                db = bumps - shadow * shade
                ir = minimum_phase(db)
                hrirs[s, d, ear] = np.roll(ir, base_delay + int(round(lag)))
            magnitudes[s, d] = hrir_to_magnitude(
                hrirs[s, d].astype(np.float64), fs, K
            ).db
    return HrtfBundle(
        subjects=subjects,
        directions=directions,
        K=K,
        sample_rate=fs,
        magnitudes=magnitudes,
        hrirs=hrirs,
        provenance=f"synthetic-v1 seed={config.seed}",
    )


# -- splits ----------------------------------------------------------------


@dataclass
class SplitSpec:
    train: list
    val: list
    test: list
    measurement_subset: list = field(default_factory=list)

    def validate(self):
        groups = [self.train, self.val, self.test]
        all_ids = [s for g in groups for s in g]
        if len(set(all_ids)) != len(all_ids):
            raise ValueError("split groups overlap")
        if any(len(g) < 1 for g in groups):
            raise ValueError("every split group needs at least one subject")
        if len(self.measurement_subset) < 1:
            raise ValueError("empty measurement subset")

    def to_json(self) -> str:
        return json.dumps(
            {
                "train": list(self.train),
                "val": list(self.val),
                "test": list(self.test),
                "measurement_subset": [int(i) for i in self.measurement_subset],
            },
            sort_keys=True,
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        data = json.loads(text)
        spec = cls(
            train=list(data["train"]),
            val=list(data["val"]),
            test=list(data["test"]),
            measurement_subset=[int(i) for i in data["measurement_subset"]],
        )
        spec.validate()
        return spec


def farthest_point_subset(directions, count: int) -> list:
    """Greedy farthest-point direction subset, seeded at the point nearest
    the front (0, 0).  Ties go to the lowest index.  Returned sorted."""
    dirs = np.asarray(directions, dtype=np.float64)
    D = dirs.shape[0]
    if not 1 <= count <= D:
        raise ValueError(f"subset size {count} outside [1, {D}]")
    to_front = pairwise_angular_distance(dirs, np.array([[0.0, 0.0]]))[:, 0]
    chosen = [int(np.argmin(to_front))]
    if count > 1:
        pd = pairwise_angular_distance(dirs, dirs)
        min_dist = pd[:, chosen[0]].copy()
        for _ in range(count - 1):
            nxt = int(np.argmax(min_dist))
            chosen.append(nxt)
            np.minimum(min_dist, pd[:, nxt], out=min_dist)
    return sorted(chosen)


def make_splits(bundle: HrtfBundle, fractions=(0.8, 0.1, 0.1),
                measurement_count: int = 3, seed: int = 0) -> SplitSpec:
    """Seeded subject partition plus a farthest-point measurement subset.

    The partition depends only on the subject id set and the seed, not on
    the order subjects appear in the bundle.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError(f"bad fractions {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions sum to {sum(fractions)}, expected 1")
    ids = sorted(str(s) for s in bundle.subjects)
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(
            f"infeasible split {n_train}/{n_val}/{n_test} for {n} subjects"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    shuffled = [ids[i] for i in perm]
    spec = SplitSpec(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        measurement_subset=farthest_point_subset(
            bundle.directions, measurement_count
        ),
    )
    spec.validate()
    return spec
