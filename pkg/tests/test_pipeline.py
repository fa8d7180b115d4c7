"""Experiment orchestration: config schema, report format, evaluation
semantics, and byte-level determinism of the runners."""

import json

import numpy as np
import pytest

from hrtfgraph.dataset import save_bundle
from hrtfgraph.pipeline import (
    ABLATION_VARIANTS,
    CSV_HEADER,
    METHODS,
    ConfigError,
    EvalReport,
    EvalRow,
    ExperimentConfig,
    apply_overrides,
    derive_seed,
    evaluate,
    prepare,
    run_ablation,
    run_baseline,
    run_graphnf,
    run_graphnf_sca,
    run_hrtf_u,
    run_method,
)


class TestConfigSchema:
    def test_minimal_config_uses_defaults(self):
        config = ExperimentConfig.from_dict({"bundle": "data/b"})
        assert config.bundle == "data/b"
        assert config.seed == 0
        assert config.jobs == 1
        assert config.training_enabled
        assert config.split_fractions == (0.8, 0.1, 0.1)
        assert config.measurement_count == 3
        assert config.zeta_db == 6.0
        assert config.train_p.optimizer == "radam"
        assert config.train_u.optimizer == "adam"
        assert config.finetune.schedule["kind"] == "exponential"
        assert config.checkpoint_p is None

    def test_bundle_is_required(self):
        with pytest.raises(ConfigError, match="bundle"):
            ExperimentConfig.from_dict({})

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="mystery"):
            ExperimentConfig.from_dict({"bundle": "b", "mystery": 1})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="model_p"):
            ExperimentConfig.from_dict(
                {"bundle": "b", "model_p": {"depth": 3}}
            )

    @pytest.mark.parametrize(
        "patch,needle",
        [
            ({"seed": "0"}, "seed"),
            ({"seed": -1}, "seed"),
            ({"jobs": 0}, "jobs"),
            ({"training_enabled": 1}, "training_enabled"),
            ({"split": {"fractions": [0.5, 0.5]}}, "fractions"),
            ({"split": {"measurement_count": 0}}, "measurement_count"),
            ({"model_p": {"heads_gat1": 0}}, "heads_gat1"),
            ({"model_p": {"feature_kind": "pinna"}}, "feature_kind"),
            ({"model_p": {"use_clue": False}}, "use_fusion"),
            ({"model_u": {"dim_gat1": -4}}, "dim_gat1"),
            ({"spatial": {"radius_deg": 0.0}}, "spatial"),
            ({"train_p": {"optimizer": "sgd"}}, "train_p"),
            ({"train_p": {"lr": True}}, "lr"),
            ({"train_u": {"schedule": {"kind": "warmup"}}}, "train_u"),
            ({"eval": {"zeta_db": 0.0}}, "zeta_db"),
            ({"checkpoints": {"model_q": "x"}}, "model_q"),
        ],
    )
    def test_rejects_bad_values(self, patch, needle):
        data = {"bundle": "b", **patch}
        with pytest.raises(ConfigError, match=needle):
            ExperimentConfig.from_dict(data)

    def test_sections_override_defaults(self):
        config = ExperimentConfig.from_dict({
            "bundle": "b",
            "seed": 9,
            "split": {"fractions": [0.6, 0.2, 0.2], "measurement_count": 5},
            "model_p": {"feature_kind": "itd", "retrieval_count": 4},
            "spatial": {"radius_deg": 45.0},
            "train_p": {"epochs": 7},
            "eval": {"zeta_db": 3.5},
            "checkpoints": {"model_p": "ck/p.ckpt"},
        })
        assert config.seed == 9
        assert config.split_fractions == (0.6, 0.2, 0.2)
        assert config.measurement_count == 5
        assert config.model_p.feature_kind == "itd"
        assert config.model_p.retrieval_count == 4
        assert config.spatial.radius_deg == 45.0
        assert config.train_p.epochs == 7
        assert config.train_p.optimizer == "radam"  # untouched default
        assert config.zeta_db == 3.5
        assert config.checkpoint_p == "ck/p.ckpt"

    def test_from_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"bundle": "b", "seed": 2}))
        assert ExperimentConfig.from_file(path).seed == 2

    def test_from_file_rejects_bad_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{bundle:")
        with pytest.raises(ConfigError, match="JSON"):
            ExperimentConfig.from_file(path)
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="object"):
            ExperimentConfig.from_file(path)


class TestOverrides:
    def test_typed_values_parse_as_json(self):
        data = apply_overrides({}, [
            "seed=3",
            "train_p.lr=0.01",
            "model_p.use_clue=false",
            "bundle=out/desk",
        ])
        assert data == {
            "seed": 3,
            "train_p": {"lr": 0.01},
            "model_p": {"use_clue": False},
            "bundle": "out/desk",
        }

    def test_existing_sections_are_merged(self):
        data = {"train_p": {"epochs": 5}}
        apply_overrides(data, ["train_p.lr=0.5"])
        assert data["train_p"] == {"epochs": 5, "lr": 0.5}

    def test_malformed_assignment(self):
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides({}, ["just-a-flag"])
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides({}, ["=3"])

    def test_descending_into_a_scalar_fails(self):
        with pytest.raises(ConfigError, match="non-object"):
            apply_overrides({"bundle": "b"}, ["bundle.deep=1"])


class TestDeriveSeed:
    def test_streams_are_deterministic(self):
        a = np.random.default_rng(derive_seed(5, 1)).random(4)
        b = np.random.default_rng(derive_seed(5, 1)).random(4)
        np.testing.assert_array_equal(a, b)

    def test_tags_separate_streams(self):
        a = np.random.default_rng(derive_seed(5, 1)).random(4)
        b = np.random.default_rng(derive_seed(5, 2)).random(4)
        c = np.random.default_rng(derive_seed(6, 1)).random(4)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_subtags_extend_the_stream(self):
        a = np.random.default_rng(derive_seed(0, 3, 0)).random()
        b = np.random.default_rng(derive_seed(0, 3, 1)).random()
        assert a != b


class TestEvaluate:
    def test_identical_prediction_scores_zero(self, micro_bundle):
        sid = micro_bundle.subjects[0]
        row = micro_bundle.subject_index(sid)
        preds = {sid: micro_bundle.magnitudes[row].astype(np.float64)}
        report = evaluate("self", micro_bundle, preds, zeta_db=6.0)
        assert len(report.rows) == 36
        assert all(r.lsd_db == 0.0 for r in report.rows)
        assert all(r.ild_err_db == 0.0 for r in report.rows)
        assert report.exceed_count == 0

    def test_constant_offset_has_exact_lsd_and_no_ild_error(self,
                                                            micro_bundle):
        sid = micro_bundle.subjects[1]
        row = micro_bundle.subject_index(sid)
        preds = {sid: micro_bundle.magnitudes[row].astype(np.float64) + 20.0}
        report = evaluate("offset", micro_bundle, preds, zeta_db=6.0)
        assert all(r.lsd_db == 20.0 for r in report.rows)
        assert all(r.ild_err_db == 0.0 for r in report.rows)
        assert report.exceed_count == len(report.rows)

    def test_single_ear_offset(self, micro_bundle):
        sid = micro_bundle.subjects[2]
        row = micro_bundle.subject_index(sid)
        pred = micro_bundle.magnitudes[row].astype(np.float64).copy()
        pred[:, : micro_bundle.K] += 6.0  # left ear only
        report = evaluate("ear", micro_bundle, {sid: pred}, zeta_db=6.0)
        for r in report.rows:
            assert r.lsd_db == pytest.approx(np.sqrt(18.0), abs=1e-9)
            assert r.ild_err_db == pytest.approx(6.0, abs=1e-9)

    def test_exclusion_drops_directions(self, micro_bundle):
        sid = micro_bundle.subjects[0]
        row = micro_bundle.subject_index(sid)
        preds = {sid: micro_bundle.magnitudes[row].astype(np.float64)}
        report = evaluate("x", micro_bundle, preds, 6.0, exclude=[0, 7, 35])
        assert len(report.rows) == 33
        kept_dirs = {(r.azimuth_deg, r.elevation_deg) for r in report.rows}
        for d in (0, 7, 35):
            az, el = micro_bundle.directions[d]
            assert (float(az), float(el)) not in kept_dirs

    def test_rows_sorted_by_subject_then_direction(self, micro_bundle):
        ids = [micro_bundle.subjects[3], micro_bundle.subjects[1]]
        preds = {
            s: micro_bundle.magnitudes[micro_bundle.subject_index(s)].astype(
                np.float64
            )
            for s in ids
        }
        report = evaluate("order", micro_bundle, preds, 6.0)
        subjects = [r.subject for r in report.rows]
        assert subjects == [min(ids)] * 36 + [max(ids)] * 36
        first = report.rows[:3]
        np.testing.assert_array_equal(
            [(r.azimuth_deg, r.elevation_deg) for r in first],
            micro_bundle.directions[:3],
        )

    def test_zeta_threshold_is_strict(self, micro_bundle):
        sid = micro_bundle.subjects[0]
        row = micro_bundle.subject_index(sid)
        preds = {sid: micro_bundle.magnitudes[row].astype(np.float64) + 6.0}
        report = evaluate("edge", micro_bundle, preds, zeta_db=6.0)
        assert report.exceed_count == 0  # 6.0 > 6.0 is false

    def test_shape_mismatch(self, micro_bundle):
        sid = micro_bundle.subjects[0]
        with pytest.raises(ValueError, match="shape"):
            evaluate("bad", micro_bundle, {sid: np.zeros((36, 16))}, 6.0)

    def test_no_rows_is_an_error(self, micro_bundle):
        with pytest.raises(ValueError, match="no rows"):
            evaluate("empty", micro_bundle, {}, 6.0)
        sid = micro_bundle.subjects[0]
        row = micro_bundle.subject_index(sid)
        preds = {sid: micro_bundle.magnitudes[row].astype(np.float64)}
        with pytest.raises(ValueError, match="no rows"):
            evaluate("all-skipped", micro_bundle, preds, 6.0,
                     exclude=range(36))


class TestEvalReport:
    def make_report(self):
        rows = [
            EvalRow("s01", 12.5, -4.25, 3.0517578125, 0.125, False),
            EvalRow("s01", 350.0, 60.0, 7.2, 1.0 / 3.0, True),
        ]
        return EvalReport(method="demo", zeta_db=6.0, rows=rows)

    def test_csv_layout(self):
        text = self.make_report().to_csv()
        lines = text.splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 3
        assert text.endswith("\n")
        assert lines[1].split(",")[0] == "s01"
        assert lines[1].split(",")[-1] == "0"
        assert lines[2].split(",")[-1] == "1"

    def test_csv_floats_round_trip_exactly(self):
        report = self.make_report()
        for line, row in zip(report.to_csv().splitlines()[1:], report.rows):
            _, az, el, lsd, ild, _ = line.split(",")
            assert float(az) == row.azimuth_deg
            assert float(el) == row.elevation_deg
            assert float(lsd) == row.lsd_db
            assert float(ild) == row.ild_err_db

    def test_means_and_exceed_count(self):
        report = self.make_report()
        assert report.mean_lsd_db == pytest.approx((3.0517578125 + 7.2) / 2.0)
        assert report.mean_ild_err_db == pytest.approx(
            (0.125 + 1.0 / 3.0) / 2.0
        )
        assert report.exceed_count == 1

    def test_summary_mentions_method_and_counts(self):
        text = self.make_report().summary()
        assert "demo" in text
        assert "rows: 2" in text
        assert "subjects: 1" in text
        assert "> 6 dB: 1" in text

    def test_write_creates_csv_and_summary(self, tmp_path):
        report = self.make_report()
        csv_path, txt_path = report.write(tmp_path / "reports")
        assert csv_path.read_text() == report.to_csv()
        assert txt_path.read_text() == report.summary()
        other_csv, _ = report.write(tmp_path / "reports", stem="alias")
        assert other_csv.name == "alias.csv"


@pytest.fixture(scope="module")
def micro_env(tmp_path_factory, micro_bundle):
    """Saved micro bundle plus a config template with tiny dims."""
    root = tmp_path_factory.mktemp("pipeline")
    bundle_dir = root / "bundle"
    save_bundle(micro_bundle, bundle_dir)

    def make_config(out: str, **extra):
        data = {
            "bundle": str(bundle_dir),
            "seed": 11,
            "split": {"fractions": [0.6, 0.2, 0.2], "measurement_count": 3},
            "model_p": {
                "heads_gat1": 2, "heads_gat2": 1, "heads_fusion": 2,
                "dim_gat1": 4, "dim_gat2": 8, "dim_fusion": 4,
                "decoder_hidden": 16, "rff_features": 8, "retrieval_count": 2,
            },
            "model_u": {"heads_gat1": 2, "heads_gat2": 1, "dim_gat1": 4,
                        "dim_gat2": 8},
            "spatial": {"radius_deg": 60.0},
            "train_p": {"optimizer": "adam", "lr": 1e-3, "epochs": 1,
                        "schedule": {"kind": "none"}},
            "train_u": {"optimizer": "adam", "lr": 2e-3, "epochs": 1,
                        "schedule": {"kind": "none"}},
            "finetune": {"optimizer": "adam", "lr": 1e-2, "epochs": 1,
                         "schedule": {"kind": "none"}},
            "checkpoints": {
                "model_p": str(root / out / "p.ckpt"),
                "model_u": str(root / out / "u.ckpt"),
            },
        }
        data.update(extra)
        return ExperimentConfig.from_dict(data)

    return root, make_config


class TestPrepare:
    def test_split_is_seed_derived(self, micro_env):
        _, make_config = micro_env
        config = make_config("prep")
        bundle, split = prepare(config)
        _, again = prepare(config)
        assert split.train == again.train
        assert split.measurement_subset == again.measurement_subset
        assert len(split.train) == 6
        assert len(split.val) == 2
        assert len(split.test) == 2

    def test_split_file_wins(self, micro_env, micro_bundle, micro_split):
        root, make_config = micro_env
        path = root / "split.json"
        path.write_text(micro_split.to_json())
        config = make_config("prep2")
        config.split_file = str(path)
        _, split = prepare(config)
        assert split.train == micro_split.train
        assert split.test == micro_split.test

    def test_split_file_subjects_must_exist(self, micro_env, micro_split):
        root, make_config = micro_env
        bad = json.loads(micro_split.to_json())
        bad["train"][0] = "s999"
        path = root / "bad_split.json"
        path.write_text(json.dumps(bad))
        config = make_config("prep3")
        config.split_file = str(path)
        with pytest.raises(KeyError):
            prepare(config)

    def test_split_file_measurements_in_range(self, micro_env, micro_split):
        root, make_config = micro_env
        bad = json.loads(micro_split.to_json())
        bad["measurement_subset"] = [0, 1, 99]
        path = root / "oob_split.json"
        path.write_text(json.dumps(bad))
        config = make_config("prep4")
        config.split_file = str(path)
        with pytest.raises(ValueError, match="measurement index"):
            prepare(config)


class TestRunners:
    def test_graphnf_trains_then_reloads_identically(self, micro_env):
        root, make_config = micro_env
        config = make_config("gnf")
        first = run_graphnf(config)
        assert (root / "gnf" / "p.ckpt").exists()
        assert (root / "gnf" / "p.ckpt.log.json").exists()
        second = run_graphnf(config)  # now loads the checkpoint
        assert first.to_csv() == second.to_csv()
        assert first.method == "graphnf"

    def test_training_disabled_needs_a_checkpoint(self, micro_env):
        _, make_config = micro_env
        config = make_config("frozen", training_enabled=False)
        with pytest.raises(ConfigError, match="training is disabled"):
            run_graphnf(config)

    def test_personalization_reports_exclude_measured_subset(self, micro_env):
        _, make_config = micro_env
        config = make_config("nnbase")
        report = run_baseline(config, "nn")
        _, split = prepare(config)
        assert len(report.rows) == len(split.test) * (36 - 3)

    def test_lininterp_covers_every_direction(self, micro_env):
        _, make_config = micro_env
        config = make_config("libase")
        report = run_baseline(config, "lininterp")
        _, split = prepare(config)
        assert len(report.rows) == len(split.test) * 36

    def test_selection_copies_one_training_subject(self, micro_env,
                                                   micro_bundle):
        _, make_config = micro_env
        config = make_config("selbase")
        report = run_baseline(config, "sel-lsd")
        bundle, split = prepare(config)
        # rows for one test subject all stem from a single training
        # subject's spectra, so at least one row is spectrally identical
        assert report.method == "sel-lsd"
        assert len(report.rows) == len(split.test) * (36 - 3)

    def test_unknown_baseline(self, micro_env):
        _, make_config = micro_env
        with pytest.raises(ConfigError, match="unknown baseline"):
            run_baseline(make_config("badbase"), "sel-pinna")

    def test_run_method_dispatch(self, micro_env):
        _, make_config = micro_env
        config = make_config("dispatch")
        report = run_method(config, "hrtf-u")
        assert report.method == "hrtf-u"
        with pytest.raises(ConfigError, match="unknown method"):
            run_method(config, "magic")

    def test_sca_is_parallel_safe(self, micro_env):
        root, make_config = micro_env
        serial = make_config("scaserial")
        report_a = run_graphnf_sca(serial)
        threaded = make_config("scathreads", jobs=3)
        report_b = run_graphnf_sca(threaded)
        assert report_a.to_csv() == report_b.to_csv()

    def test_hrtf_u_repeats_bitwise(self, micro_env):
        _, make_config = micro_env
        config = make_config("urep")
        a = run_hrtf_u(config)
        b = run_hrtf_u(config)
        assert a.to_csv() == b.to_csv()


class TestAblation:
    def test_variants_and_stage_sharing(self, micro_env):
        _, make_config = micro_env
        config = make_config("abl")
        reports = run_ablation(config)
        assert tuple(reports) == ABLATION_VARIANTS
        # the full wiring is the plain personalization runner, byte for byte
        plain = run_graphnf(make_config("abl"))
        assert reports["full"].to_csv() == plain.to_csv()
        sca = run_graphnf_sca(make_config("abl"))
        assert reports["sca"].to_csv() == sca.to_csv()
        for name in ("no_clue_no_fusion", "clue_no_fusion"):
            assert len(reports[name].rows) == len(reports["full"].rows)


def test_method_registry_is_complete():
    assert METHODS == ("graphnf", "graphnf-sca", "nn", "sel-lsd", "sel-itd",
                       "sel-ild", "lininterp", "hrtf-u")
