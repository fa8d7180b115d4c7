"""SOFA (HDF5) HRTF recordings to portable bundle directories.

Version 1 handles the SimpleFreeFieldHRIR convention with spherical
source positions only; anything else fails with a descriptive error
rather than guessing a coordinate mapping.  The emitted bundle follows
the portable format: ``manifest.json`` plus raw little-endian float32
``magnitudes.f32`` / ``hrirs.f32``, magnitudes on the K post-DC bins of
each ear, floored before the dB conversion.

The magnitude constants are duplicated from the experiment package on
purpose — the bridge has no runtime dependency on it — and a fixture
test pins the equivalence of the two pipelines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import h5py
import numpy as np

__all__ = [
    "BUNDLE_VERSION",
    "ConversionError",
    "ConversionSpec",
    "MAGNITUDE_FLOOR",
    "SUPPORTED_CONVENTION",
    "convert",
    "discover",
    "magnitudes_from_hrirs",
    "read_sofa",
]

BUNDLE_VERSION = 1
MANIFEST_NAME = "manifest.json"
MAGNITUDES_NAME = "magnitudes.f32"
HRIRS_NAME = "hrirs.f32"

# dB conversion rules shared with the experiment package: linear floor
# before 20*log10, DC excluded (bundle bin k is FFT bin k+1), FFT length
# the next power of two at or above max(taps, 2K)
MAGNITUDE_FLOOR = 1e-5

SUPPORTED_CONVENTION = "SimpleFreeFieldHRIR"


class ConversionError(ValueError):
    """A SOFA file or file set the bridge cannot convert."""


@dataclass(frozen=True)
class ConversionSpec:
    """What to convert and how.

    ``inputs`` holds .sofa paths (one subject per file, id = file stem)
    or a single directory that is scanned for them.  ``exclude`` drops
    subject ids after discovery.  ``mapping`` names the source-position
    convention; only "spherical" is implemented.
    """

    inputs: tuple
    out: str
    K: int = 64
    exclude: tuple = ()
    mapping: str = "spherical"

    def __post_init__(self):
        if self.K < 1:
            raise ConversionError(f"K must be positive, got {self.K}")
        if not self.inputs:
            raise ConversionError("no input paths given")


def _attr(node, name: str) -> str:
    try:
        raw = node.attrs[name]
    except KeyError:
        raise ConversionError(f"missing attribute {name!r}") from None
    if isinstance(raw, bytes):
        return raw.decode("ascii", "replace")
    if isinstance(raw, np.ndarray):
        raw = raw.reshape(-1)[0]
        if isinstance(raw, bytes):
            return raw.decode("ascii", "replace")
    return str(raw)


def discover(inputs) -> list[Path]:
    """Resolve the input list to sorted .sofa files."""
    paths = [Path(p) for p in inputs]
    if len(paths) == 1 and paths[0].is_dir():
        found = sorted(paths[0].glob("*.sofa"))
        if not found:
            raise ConversionError(f"no .sofa files under {paths[0]}")
        return found
    for p in paths:
        if not p.is_file():
            raise ConversionError(f"not a file: {p}")
    return sorted(paths)


def read_sofa(path, mapping: str = "spherical"):
    """(hrirs [D, 2, taps], directions [D, 2] az/el deg, sample rate).

    Azimuths are wrapped to [0, 360); elevations must already sit in
    [-90, 90].  Receiver 0 is the left ear.
    """
    path = Path(path)
    if mapping != "spherical":
        raise ConversionError(
            f"unsupported coordinate mapping {mapping!r}; only 'spherical' "
            "source positions are handled"
        )
    try:
        handle = h5py.File(path, "r")
    except OSError as err:
        raise ConversionError(f"{path.name}: not an HDF5 file ({err})") from None
    with handle as f:
        convention = _attr(f, "SOFAConventions")
        if convention != SUPPORTED_CONVENTION:
            raise ConversionError(
                f"{path.name}: unknown SOFA convention {convention!r} "
                f"(need {SUPPORTED_CONVENTION})"
            )
        missing = [k for k in ("Data.IR", "SourcePosition", "Data.SamplingRate")
                   if k not in f]
        if missing:
            raise ConversionError(f"{path.name}: missing dataset {missing[0]!r}")
        ir = np.asarray(f["Data.IR"], dtype=np.float64)
        pos = np.asarray(f["SourcePosition"], dtype=np.float64)
        fs = float(np.asarray(f["Data.SamplingRate"],
                              dtype=np.float64).reshape(-1)[0])
        pos_type = _attr(f["SourcePosition"], "Type")

    if pos_type != "spherical":
        raise ConversionError(
            f"{path.name}: source positions are {pos_type!r}, expected "
            "'spherical' (no mapping table for this convention yet)"
        )
    if ir.ndim != 3 or ir.shape[1] != 2:
        raise ConversionError(
            f"{path.name}: Data.IR shape {ir.shape}, expected "
            "[measurements, 2 ears, taps]"
        )
    if pos.ndim != 2 or pos.shape != (ir.shape[0], 3):
        raise ConversionError(
            f"{path.name}: SourcePosition shape {pos.shape} does not match "
            f"{ir.shape[0]} measurements"
        )
    if not np.all(np.isfinite(ir)):
        raise ConversionError(f"{path.name}: non-finite impulse responses")
    if fs <= 0:
        raise ConversionError(f"{path.name}: bad sampling rate {fs}")

    az = np.mod(pos[:, 0], 360.0)
    el = pos[:, 1]
    if np.any((el < -90.0) | (el > 90.0)):
        raise ConversionError(
            f"{path.name}: elevation outside [-90, 90] degrees"
        )
    directions = np.column_stack([az, el])
    if len({(a, e) for a, e in map(tuple, directions)}) != len(directions):
        raise ConversionError(
            f"{path.name}: duplicate source directions after wrapping"
        )
    return ir, directions, fs


def magnitudes_from_hrirs(hrirs, K: int,
                          floor: float = MAGNITUDE_FLOOR) -> np.ndarray:
    """[D, 2K] dB magnitudes (left K bins, then right) of [D, 2, taps]."""
    h = np.asarray(hrirs, dtype=np.float64)
    nfft = 1
    while nfft < max(h.shape[-1], 2 * K):
        nfft *= 2
    spectrum = np.fft.rfft(h, n=nfft, axis=-1)
    mag = np.maximum(np.abs(spectrum[..., 1 : K + 1]), floor)
    db = 20.0 * np.log10(mag)
    return np.concatenate([db[:, 0, :], db[:, 1, :]], axis=-1)


def convert(spec: ConversionSpec) -> Path:
    """Convert per ``spec`` and return the written bundle directory.

    Subjects are ordered by id regardless of input order, so repeated
    conversions of the same files are byte-identical.
    """
    files = discover(spec.inputs)
    excluded = {str(e) for e in spec.exclude}
    picked = [(p.stem, p) for p in files if p.stem not in excluded]
    if not picked:
        raise ConversionError("every discovered subject is excluded")
    ids = [sid for sid, _ in picked]
    if len(set(ids)) != len(ids):
        raise ConversionError(f"duplicate subject ids in inputs: {sorted(ids)}")
    picked.sort()

    hrirs, directions, rates = [], None, set()
    for sid, path in picked:
        ir, dirs, fs = read_sofa(path, spec.mapping)
        rates.add(fs)
        if directions is None:
            directions = dirs
            taps = ir.shape[-1]
        elif dirs.shape != directions.shape or not np.allclose(
            dirs, directions, rtol=0.0, atol=1e-9
        ):
            raise ConversionError(
                f"{path.name}: direction set differs from "
                f"{picked[0][1].name} (counts {dirs.shape[0]} vs "
                f"{directions.shape[0]})"
            )
        elif ir.shape[-1] != taps:
            raise ConversionError(
                f"{path.name}: {ir.shape[-1]} taps, expected {taps}"
            )
        hrirs.append(ir)
    if len(rates) != 1:
        raise ConversionError(f"mixed sampling rates: {sorted(rates)}")

    all_hrirs = np.stack(hrirs)  # [S, D, 2, taps]
    mags = np.stack([magnitudes_from_hrirs(h, spec.K) for h in all_hrirs])

    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": BUNDLE_VERSION,
        "subjects": [sid for sid, _ in picked],
        "directions": [[float(a), float(e)] for a, e in directions],
        "K": int(spec.K),
        "sample_rate": float(rates.pop()),
        "has_hrirs": True,
        "taps": int(taps),
        "provenance": f"sofa-bridge:{SUPPORTED_CONVENTION}",
    }
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    mags.astype("<f4").tofile(out / MAGNITUDES_NAME)
    all_hrirs.astype("<f4").tofile(out / HRIRS_NAME)
    return out
