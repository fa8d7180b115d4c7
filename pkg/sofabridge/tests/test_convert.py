"""SOFA reading, magnitude rules, and bundle emission."""

import json

import numpy as np
import pytest

from conftest import (
    FIXTURE_DIRECTIONS,
    FIXTURE_FS,
    FIXTURE_TAPS,
    fixture_ir,
    write_sofa,
)
from sofabridge.convert import (
    ConversionError,
    ConversionSpec,
    MAGNITUDE_FLOOR,
    convert,
    discover,
    magnitudes_from_hrirs,
    read_sofa,
)

K = 16


def naive_mag_db(h, k_bins=K, floor=MAGNITUDE_FLOOR):
    """O(n^2) DFT magnitude oracle for one ear, same floor/bin rules."""
    n = 1
    while n < max(len(h), 2 * k_bins):
        n *= 2
    x = np.zeros(n)
    x[: len(h)] = h
    grid = np.arange(n)
    dft = np.exp(-2j * np.pi * np.outer(grid, grid) / n) @ x
    return 20.0 * np.log10(np.maximum(np.abs(dft[1 : k_bins + 1]), floor))


class TestReadSofa:
    def test_fixture_round_trip(self, sofa_dir):
        ir, dirs, fs = read_sofa(sofa_dir / "subjA.sofa")
        assert ir.shape == (12, 2, FIXTURE_TAPS)
        assert fs == FIXTURE_FS
        np.testing.assert_allclose(dirs[:, 0], FIXTURE_DIRECTIONS[:, 0] % 360.0)
        np.testing.assert_array_equal(dirs[:, 1], FIXTURE_DIRECTIONS[:, 1])

    def test_signed_azimuths_wrap(self, tmp_path):
        path = write_sofa(tmp_path / "s.sofa", np.ones((2, 2, 8)),
                          [[-30.0, 0.0], [-120.0, 10.0]])
        _, dirs, _ = read_sofa(path)
        np.testing.assert_array_equal(dirs[:, 0], [330.0, 240.0])

    def test_unknown_convention(self, tmp_path):
        path = write_sofa(tmp_path / "s.sofa", np.ones((1, 2, 8)),
                          [[0.0, 0.0]], convention="GeneralFIR")
        with pytest.raises(ConversionError, match="unknown SOFA convention"):
            read_sofa(path)

    def test_unsupported_position_type(self, tmp_path):
        path = write_sofa(tmp_path / "s.sofa", np.ones((1, 2, 8)),
                          [[0.0, 0.0]], pos_type="cartesian")
        with pytest.raises(ConversionError, match="cartesian"):
            read_sofa(path)

    def test_unsupported_mapping_request(self, sofa_dir):
        with pytest.raises(ConversionError, match="mapping"):
            read_sofa(sofa_dir / "subjA.sofa", mapping="interaural")

    def test_missing_dataset(self, tmp_path):
        import h5py

        path = tmp_path / "s.sofa"
        with h5py.File(path, "w") as f:
            f.attrs["SOFAConventions"] = np.bytes_(b"SimpleFreeFieldHRIR")
        with pytest.raises(ConversionError, match="missing dataset"):
            read_sofa(path)

    def test_not_hdf5(self, tmp_path):
        path = tmp_path / "s.sofa"
        path.write_text("this is not hdf5")
        with pytest.raises(ConversionError, match="not an HDF5 file"):
            read_sofa(path)

    def test_wrong_receiver_count(self, tmp_path):
        path = write_sofa(tmp_path / "s.sofa", np.ones((1, 3, 8)),
                          [[0.0, 0.0]])
        with pytest.raises(ConversionError, match="2 ears"):
            read_sofa(path)

    def test_elevation_out_of_range(self, tmp_path):
        path = write_sofa(tmp_path / "s.sofa", np.ones((1, 2, 8)),
                          [[0.0, 120.0]])
        with pytest.raises(ConversionError, match="elevation"):
            read_sofa(path)

    def test_duplicate_directions_after_wrap(self, tmp_path):
        path = write_sofa(tmp_path / "s.sofa", np.ones((2, 2, 8)),
                          [[-30.0, 0.0], [330.0, 0.0]])
        with pytest.raises(ConversionError, match="duplicate"):
            read_sofa(path)


class TestMagnitudes:
    def test_matches_naive_dft_oracle(self):
        ir = fixture_ir(7)
        mags = magnitudes_from_hrirs(ir, K)
        assert mags.shape == (12, 2 * K)
        worst = 0.0
        for d in (0, 5, 11):
            for ear in (0, 1):
                want = naive_mag_db(ir[d, ear])
                got = mags[d, ear * K : (ear + 1) * K]
                worst = max(worst, float(np.max(np.abs(got - want))))
        assert worst < 1e-4

    def test_floor_applies_before_db(self):
        quiet = np.full((1, 2, 8), 1e-12)
        mags = magnitudes_from_hrirs(quiet, 4)
        assert np.all(mags >= 20.0 * np.log10(MAGNITUDE_FLOOR) - 1e-12)


class TestDiscover:
    def test_directory_scan_sorted(self, sofa_dir):
        found = discover([sofa_dir])
        assert [p.stem for p in found] == ["subjA", "subjB"]

    def test_empty_directory(self, tmp_path):
        with pytest.raises(ConversionError, match="no .sofa files"):
            discover([tmp_path])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConversionError, match="not a file"):
            discover([tmp_path / "ghost.sofa"])


class TestConvert:
    def test_bundle_layout(self, sofa_dir, tmp_path):
        out = convert(ConversionSpec((sofa_dir,), str(tmp_path / "b"), K=K))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["version"] == 1
        assert manifest["subjects"] == ["subjA", "subjB"]
        assert manifest["K"] == K
        assert manifest["taps"] == FIXTURE_TAPS
        assert manifest["has_hrirs"] is True
        mags = np.fromfile(out / "magnitudes.f32", dtype="<f4")
        assert mags.shape == (2 * 12 * 2 * K,)
        hrirs = np.fromfile(out / "hrirs.f32", dtype="<f4")
        assert hrirs.shape == (2 * 12 * 2 * FIXTURE_TAPS,)

    def test_subject_order_ignores_input_order(self, sofa_dir, tmp_path):
        out = convert(ConversionSpec(
            (sofa_dir / "subjB.sofa", sofa_dir / "subjA.sofa"),
            str(tmp_path / "b"), K=K,
        ))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subjects"] == ["subjA", "subjB"]

    def test_exclusion_honored_exactly(self, sofa_dir, tmp_path):
        out = convert(ConversionSpec((sofa_dir,), str(tmp_path / "b"), K=K,
                                     exclude=("subjB",)))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subjects"] == ["subjA"]

    def test_excluding_everyone(self, sofa_dir, tmp_path):
        with pytest.raises(ConversionError, match="excluded"):
            convert(ConversionSpec((sofa_dir,), str(tmp_path / "b"), K=K,
                                   exclude=("subjA", "subjB")))

    def test_converting_twice_is_byte_identical(self, sofa_dir, tmp_path):
        spec_a = ConversionSpec((sofa_dir,), str(tmp_path / "a"), K=K)
        spec_b = ConversionSpec((sofa_dir,), str(tmp_path / "b"), K=K)
        out_a, out_b = convert(spec_a), convert(spec_b)
        for name in ("manifest.json", "magnitudes.f32", "hrirs.f32"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_inconsistent_directions_rejected(self, sofa_dir, tmp_path):
        shifted = FIXTURE_DIRECTIONS + [[1.0, 0.0]]
        write_sofa(tmp_path / "subjC.sofa", fixture_ir(3), shifted, FIXTURE_FS)
        with pytest.raises(ConversionError, match="direction set differs"):
            convert(ConversionSpec(
                (sofa_dir / "subjA.sofa", tmp_path / "subjC.sofa"),
                str(tmp_path / "b"), K=K,
            ))

    def test_mixed_sampling_rates_rejected(self, sofa_dir, tmp_path):
        write_sofa(tmp_path / "subjC.sofa", fixture_ir(3), FIXTURE_DIRECTIONS,
                   44100.0)
        with pytest.raises(ConversionError, match="sampling rates"):
            convert(ConversionSpec(
                (sofa_dir / "subjA.sofa", tmp_path / "subjC.sofa"),
                str(tmp_path / "b"), K=K,
            ))

    def test_mismatched_taps_rejected(self, sofa_dir, tmp_path):
        write_sofa(tmp_path / "subjC.sofa", fixture_ir(3)[:, :, :32],
                   FIXTURE_DIRECTIONS, FIXTURE_FS)
        with pytest.raises(ConversionError, match="taps"):
            convert(ConversionSpec(
                (sofa_dir / "subjA.sofa", tmp_path / "subjC.sofa"),
                str(tmp_path / "b"), K=K,
            ))

    def test_duplicate_subject_ids_rejected(self, sofa_dir, tmp_path):
        other = tmp_path / "other"
        other.mkdir()
        write_sofa(other / "subjA.sofa", fixture_ir(3), FIXTURE_DIRECTIONS,
                   FIXTURE_FS)
        with pytest.raises(ConversionError, match="duplicate subject ids"):
            convert(ConversionSpec(
                (sofa_dir / "subjA.sofa", other / "subjA.sofa"),
                str(tmp_path / "b"), K=K,
            ))

    def test_bad_spec_values(self, sofa_dir):
        with pytest.raises(ConversionError, match="K must be positive"):
            ConversionSpec((sofa_dir,), "x", K=0)
        with pytest.raises(ConversionError, match="no input paths"):
            ConversionSpec((), "x", K=4)
