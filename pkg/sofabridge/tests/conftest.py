"""Fixtures: synthetic SOFA files and the acceptance summary hook."""

from __future__ import annotations

import h5py
import numpy as np
import pytest

_CRITERIA: list = []


@pytest.fixture
def record_criterion():
    def record(name: str, ok: bool, detail: str = ""):
        _CRITERIA.append((name, bool(ok), detail))
        assert ok, f"{name} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok, detail in _CRITERIA:
        status = "PASS" if ok else "FAIL"
        line = f"{name}: {status}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


def write_sofa(path, ir, directions, fs=48000.0,
               convention="SimpleFreeFieldHRIR", pos_type="spherical"):
    """Minimal SimpleFreeFieldHRIR file the converter accepts.

    ``ir`` is [measurements, 2, taps]; ``directions`` [measurements, 2]
    az/el in degrees (azimuth may be signed, as in real recordings).
    """
    ir = np.asarray(ir, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    with h5py.File(path, "w") as f:
        f.attrs["Conventions"] = np.bytes_(b"SOFA")
        f.attrs["SOFAConventions"] = np.bytes_(convention.encode())
        f.attrs["SOFAConventionsVersion"] = np.bytes_(b"1.0")
        f.attrs["DataType"] = np.bytes_(b"FIR")
        f.create_dataset("Data.IR", data=ir)
        f.create_dataset("Data.SamplingRate", data=np.array([fs]))
        pos = np.column_stack([
            directions[:, 0], directions[:, 1],
            np.full(directions.shape[0], 1.5),
        ])
        sp = f.create_dataset("SourcePosition", data=pos)
        sp.attrs["Type"] = np.bytes_(pos_type.encode())
        sp.attrs["Units"] = np.bytes_(b"degree, degree, metre")
    return path


FIXTURE_DIRECTIONS = np.column_stack([
    np.arange(-180.0, 180.0, 30.0),   # signed azimuths, 12 of them
    np.linspace(-60.0, 60.0, 12),
])
FIXTURE_TAPS = 64
FIXTURE_FS = 48000.0


def fixture_ir(seed: int) -> np.ndarray:
    """[12, 2, taps] decaying-noise responses, reproducible per subject."""
    rng = np.random.default_rng(seed)
    t = np.arange(FIXTURE_TAPS)
    envelope = np.exp(-t / 10.0)
    ir = 0.4 * rng.normal(size=(12, 2, FIXTURE_TAPS)) * envelope
    ir[:, :, 3] += 1.0  # a common main tap keeps spectra well off the floor
    return ir


@pytest.fixture(scope="session")
def sofa_dir(tmp_path_factory):
    """Directory with two fixture subjects, subjA and subjB."""
    root = tmp_path_factory.mktemp("sofa")
    for sid, seed in (("subjA", 101), ("subjB", 202)):
        write_sofa(root / f"{sid}.sofa", fixture_ir(seed), FIXTURE_DIRECTIONS,
                   FIXTURE_FS)
    return root
