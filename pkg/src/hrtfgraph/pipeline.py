"""Experiment orchestration: config schema, evaluation reports, runners.

A single JSON config drives every runner.  All randomness is derived from
one root seed through fixed tags, so any runner invoked twice with the
same config produces byte-identical reports, and runners that share a
stage (for example the full ablation wiring and the plain personalization
run) produce byte-identical predictions for that stage.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import hrtf_selection, linear_interp, nearest_neighbor
from .checkpoint import load_model_p, load_model_u, save_model_p, save_model_u
from .dataset import HrtfBundle, SplitSpec, load_bundle, make_splits
from .dsp import lsd_db
from .features import ild_scalar
from .graphs import SpatialParams
from .model_p import ModelPConfig, predict_field_p, train_model_p
from .model_u import (
    direction_topologies,
    finetune_model_u,
    ModelUConfig,
    predict_field_u,
    train_model_u,
)
from .optim import TrainConfig

__all__ = [
    "ConfigError", "ExperimentConfig", "EvalReport", "EvalRow",
    "evaluate", "prepare", "run_method", "run_graphnf", "run_graphnf_sca",
    "run_baseline", "run_hrtf_u", "run_ablation", "METHODS",
    "ABLATION_VARIANTS", "apply_overrides", "derive_seed",
    "finetune_subject", "get_model_p", "get_model_u",
]

METHODS = ("graphnf", "graphnf-sca", "nn", "sel-lsd", "sel-itd", "sel-ild",
           "lininterp", "hrtf-u")

# ablation wirings, in report order
ABLATION_VARIANTS = ("no_clue_no_fusion", "clue_no_fusion", "full", "sca")

# tags for seed derivation: every stage draws from SeedSequence([seed, tag, ...])
TAG_SPLIT = 0
TAG_TRAIN_P = 1
TAG_TRAIN_U = 2
TAG_FINETUNE = 3

CSV_HEADER = "subject,azimuth_deg,elevation_deg,lsd_db,ild_err_db,exceeds_zeta"


class ConfigError(ValueError):
    """Malformed experiment configuration."""


def derive_seed(seed: int, *tags: int) -> np.random.SeedSequence:
    """Independent random stream for one pipeline stage."""
    return np.random.SeedSequence([int(seed)] + [int(t) for t in tags])


# -- config schema ---------------------------------------------------------


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


_REQUIRED = object()


def _pull(section: dict, where: str, key: str, kind: str, default=_REQUIRED):
    if key in section:
        value = section[key]
    elif default is _REQUIRED:
        raise ConfigError(f"missing required key {where}{key}")
    else:
        return default
    name = f"{where}{key}"
    if kind in ("str", "optstr"):
        if value is None and kind == "optstr":
            return None
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if kind in ("int", "optint"):
        if value is None and kind == "optint":
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    raise AssertionError(kind)


def _positive(value, name):
    if value is not None and not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _split_section(sec: dict):
    _check_keys(sec, ("fractions", "measurement_count", "file"), "split")
    fractions = sec.get("fractions", [0.8, 0.1, 0.1])
    if (
        not isinstance(fractions, (list, tuple))
        or len(fractions) != 3
        or any(isinstance(f, bool) or not isinstance(f, (int, float))
               for f in fractions)
    ):
        raise ConfigError("split.fractions must be a list of three numbers")
    count = _positive(_pull(sec, "split.", "measurement_count", "int", 3),
                      "split.measurement_count")
    return tuple(float(f) for f in fractions), count, _pull(
        sec, "split.", "file", "optstr", None
    )


_MODEL_P_INTS = ("heads_gat1", "heads_gat2", "heads_fusion", "rff_features",
                 "retrieval_count")
_MODEL_P_OPT_INTS = ("dim_gat1", "dim_gat2", "dim_fusion", "decoder_hidden")


def _model_p_section(sec: dict) -> ModelPConfig:
    allowed = (*_MODEL_P_INTS, *_MODEL_P_OPT_INTS, "rff_sigma", "use_clue",
               "use_fusion", "feature_kind")
    _check_keys(sec, allowed, "model_p")
    kwargs = {}
    for key in _MODEL_P_INTS:
        if key in sec:
            kwargs[key] = _positive(_pull(sec, "model_p.", key, "int"),
                                    f"model_p.{key}")
    for key in _MODEL_P_OPT_INTS:
        value = _pull(sec, "model_p.", key, "optint", None)
        if value is not None:
            kwargs[key] = _positive(value, f"model_p.{key}")
    if "rff_sigma" in sec:
        kwargs["rff_sigma"] = _positive(
            _pull(sec, "model_p.", "rff_sigma", "float"), "model_p.rff_sigma"
        )
    for key in ("use_clue", "use_fusion"):
        if key in sec:
            kwargs[key] = _pull(sec, "model_p.", key, "bool")
    if "feature_kind" in sec:
        kind = _pull(sec, "model_p.", "feature_kind", "str")
        if kind not in ("ild", "itd", "lsd"):
            raise ConfigError(f"model_p.feature_kind must be ild, itd or lsd,"
                              f" got {kind!r}")
        kwargs["feature_kind"] = kind
    config = ModelPConfig(**kwargs)
    if config.use_fusion and not config.use_clue:
        raise ConfigError("model_p.use_fusion requires model_p.use_clue")
    return config


def _model_u_section(sec: dict) -> ModelUConfig:
    _check_keys(sec, ("heads_gat1", "heads_gat2", "dim_gat1", "dim_gat2"),
                "model_u")
    kwargs = {}
    for key in ("heads_gat1", "heads_gat2", "dim_gat1"):
        if key in sec:
            kwargs[key] = _positive(_pull(sec, "model_u.", key, "int"),
                                    f"model_u.{key}")
    value = _pull(sec, "model_u.", "dim_gat2", "optint", None)
    if value is not None:
        kwargs["dim_gat2"] = _positive(value, "model_u.dim_gat2")
    return ModelUConfig(**kwargs)


def _spatial_section(sec: dict) -> SpatialParams:
    _check_keys(sec, ("edge_factor", "radius_deg", "kernel_sigma"), "spatial")
    params = SpatialParams(
        edge_factor=_pull(sec, "spatial.", "edge_factor", "float", 0.75),
        radius_deg=_pull(sec, "spatial.", "radius_deg", "float", 20.0),
        kernel_sigma=_pull(sec, "spatial.", "kernel_sigma", "float", 0.5),
    )
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(f"spatial: {exc}") from None
    return params


def _train_section(sec: dict, where: str, default: TrainConfig) -> TrainConfig:
    _check_keys(sec, ("optimizer", "lr", "epochs", "schedule"), where)
    schedule = sec.get("schedule", default.schedule)
    if not isinstance(schedule, dict):
        raise ConfigError(f"{where}.schedule must be an object")
    config = TrainConfig(
        optimizer=_pull(sec, f"{where}.", "optimizer", "str",
                        default.optimizer),
        lr=_pull(sec, f"{where}.", "lr", "float", default.lr),
        epochs=_pull(sec, f"{where}.", "epochs", "int", default.epochs),
        schedule=dict(schedule),
    )
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return config


_TRAIN_P_DEFAULT = TrainConfig(
    "radam", 1e-3, 200, {"kind": "plateau", "factor": 0.9, "patience": 10}
)
_TRAIN_U_DEFAULT = TrainConfig(
    "adam", 2e-3, 200, {"kind": "plateau", "factor": 0.95, "patience": 3}
)
_FINETUNE_DEFAULT = TrainConfig(
    "adam", 2e-3, 20, {"kind": "exponential", "rate": 0.95}
)

_TOP_KEYS = ("bundle", "seed", "output_dir", "jobs", "training_enabled",
             "split", "model_p", "model_u", "spatial", "train_p", "train_u",
             "finetune", "eval", "checkpoints")


@dataclass
class ExperimentConfig:
    bundle: str
    seed: int = 0
    output_dir: str | None = None
    jobs: int = 1
    training_enabled: bool = True
    split_fractions: tuple = (0.8, 0.1, 0.1)
    measurement_count: int = 3
    split_file: str | None = None
    model_p: ModelPConfig = field(default_factory=ModelPConfig)
    model_u: ModelUConfig = field(default_factory=ModelUConfig)
    spatial: SpatialParams = field(default_factory=SpatialParams)
    train_p: TrainConfig = _TRAIN_P_DEFAULT
    train_u: TrainConfig = _TRAIN_U_DEFAULT
    finetune: TrainConfig = _FINETUNE_DEFAULT
    zeta_db: float = 6.0
    checkpoint_p: str | None = None
    checkpoint_u: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _check_keys(data, _TOP_KEYS, "config")
        fractions, count, split_file = _split_section(data.get("split", {}))
        eval_sec = data.get("eval", {})
        _check_keys(eval_sec, ("zeta_db",), "eval")
        ckpt = data.get("checkpoints", {})
        _check_keys(ckpt, ("model_p", "model_u"), "checkpoints")
        config = cls(
            bundle=_pull(data, "", "bundle", "str"),
            seed=_pull(data, "", "seed", "int", 0),
            output_dir=_pull(data, "", "output_dir", "optstr", None),
            jobs=_pull(data, "", "jobs", "int", 1),
            training_enabled=_pull(data, "", "training_enabled", "bool", True),
            split_fractions=fractions,
            measurement_count=count,
            split_file=split_file,
            model_p=_model_p_section(data.get("model_p", {})),
            model_u=_model_u_section(data.get("model_u", {})),
            spatial=_spatial_section(data.get("spatial", {})),
            train_p=_train_section(data.get("train_p", {}), "train_p",
                                   _TRAIN_P_DEFAULT),
            train_u=_train_section(data.get("train_u", {}), "train_u",
                                   _TRAIN_U_DEFAULT),
            finetune=_train_section(data.get("finetune", {}), "finetune",
                                    _FINETUNE_DEFAULT),
            zeta_db=_positive(_pull(eval_sec, "eval.", "zeta_db", "float",
                                    6.0), "eval.zeta_db"),
            checkpoint_p=_pull(ckpt, "checkpoints.", "model_p", "optstr",
                               None),
            checkpoint_u=_pull(ckpt, "checkpoints.", "model_u", "optstr",
                               None),
        )
        if config.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {config.seed}")
        if config.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {config.jobs}")
        return config

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") \
                from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)


def apply_overrides(data: dict, assignments) -> dict:
    """Apply ``section.key=value`` strings onto a raw config dict.

    Values parse as JSON when possible and fall back to plain strings, so
    ``train_p.lr=0.01`` and ``bundle=out/desk`` both work.
    """
    for text in assignments:
        key, sep, raw = text.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {text!r} is not of the form "
                              f"key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r} descends into a "
                                  f"non-object")
        node[parts[-1]] = value
    return data


# -- evaluation ------------------------------------------------------------


@dataclass(frozen=True)
class EvalRow:
    subject: str
    azimuth_deg: float
    elevation_deg: float
    lsd_db: float
    ild_err_db: float
    exceeds_zeta: bool


@dataclass
class EvalReport:
    method: str
    zeta_db: float
    rows: list

    @property
    def mean_lsd_db(self) -> float:
        return float(np.mean([r.lsd_db for r in self.rows]))

    @property
    def mean_ild_err_db(self) -> float:
        return float(np.mean([r.ild_err_db for r in self.rows]))

    @property
    def exceed_count(self) -> int:
        return sum(r.exceeds_zeta for r in self.rows)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.subject},{r.azimuth_deg!r},{r.elevation_deg!r},"
                f"{r.lsd_db!r},{r.ild_err_db!r},{int(r.exceeds_zeta)}"
            )
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        n = len(self.rows)
        subjects = len({r.subject for r in self.rows})
        exceed = self.exceed_count
        return (
            f"method: {self.method}\n"
            f"subjects: {subjects}  rows: {n}\n"
            f"mean LSD (dB): {self.mean_lsd_db:.4f}\n"
            f"mean ILD error (dB): {self.mean_ild_err_db:.4f}\n"
            f"rows with LSD > {self.zeta_db:g} dB: {exceed} "
            f"({100.0 * exceed / n:.2f}%)\n"
        )

    def write(self, out_dir, stem: str | None = None):
        """Write ``<stem>.csv`` and ``<stem>.summary.txt``; returns paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.method
        csv_path = out / f"{stem}.csv"
        txt_path = out / f"{stem}.summary.txt"
        csv_path.write_text(self.to_csv())
        txt_path.write_text(self.summary())
        return csv_path, txt_path


def evaluate(method: str, bundle: HrtfBundle, predictions: dict,
             zeta_db: float, exclude=()) -> EvalReport:
    """Per-direction LSD and ILD error against the bundle's spectra.

    ``predictions`` maps subject id to a [D, 2K] dB field.  Directions in
    ``exclude`` (the measured inputs of a personalization run) contribute
    no rows.  Rows are ordered by subject id, then direction index.
    """
    skip = {int(i) for i in exclude}
    rows = []
    for sid in sorted(predictions):
        r = bundle.subject_index(sid)
        truth = bundle.magnitudes[r].astype(np.float64)
        pred = np.asarray(predictions[sid], dtype=np.float64)
        if pred.shape != truth.shape:
            raise ValueError(
                f"prediction for {sid!r} has shape {pred.shape}, "
                f"expected {truth.shape}"
            )
        for d in range(truth.shape[0]):
            if d in skip:
                continue
            lsd = lsd_db(pred[d], truth[d])
            ild_err = abs(ild_scalar(pred[d]) - ild_scalar(truth[d]))
            rows.append(EvalRow(
                subject=str(sid),
                azimuth_deg=float(bundle.directions[d, 0]),
                elevation_deg=float(bundle.directions[d, 1]),
                lsd_db=float(lsd),
                ild_err_db=float(ild_err),
                exceeds_zeta=bool(lsd > zeta_db),
            ))
    if not rows:
        raise ValueError("evaluation produced no rows")
    return EvalReport(method=method, zeta_db=float(zeta_db), rows=rows)


# -- shared stages ---------------------------------------------------------


def prepare(config: ExperimentConfig):
    """Load the bundle and derive (or load) the split."""
    bundle = load_bundle(config.bundle)
    if config.split_file:
        split = SplitSpec.from_json(Path(config.split_file).read_text())
        for sid in (*split.train, *split.val, *split.test):
            bundle.subject_index(sid)
        D = bundle.directions.shape[0]
        for i in split.measurement_subset:
            if not 0 <= int(i) < D:
                raise ValueError(f"measurement index {i} outside [0, {D})")
    else:
        split = make_splits(
            bundle, config.split_fractions, config.measurement_count,
            seed=derive_seed(config.seed, TAG_SPLIT),
        )
    return bundle, split


def _write_log(path: Path, log):
    rows = [{k: (v if isinstance(v, (int, str)) else float(v))
             for k, v in row.items()} for row in log]
    path.write_text(json.dumps(rows, indent=2) + "\n")


def get_model_p(config: ExperimentConfig, bundle, split):
    """Load the personalization model from its checkpoint, else train it.

    A freshly trained model is saved back to the configured checkpoint
    path (with a ``.log.json`` training log beside it) so later runners
    reuse it.  Returns (model, log or None when loaded).
    """
    path = config.checkpoint_p
    if path and Path(path).exists():
        return load_model_p(path), None
    if not config.training_enabled:
        raise ConfigError(
            f"model-p checkpoint {path!r} not found and training is disabled"
        )
    model, log = train_model_p(
        bundle, split, config.model_p, config.train_p,
        seed=derive_seed(config.seed, TAG_TRAIN_P),
    )
    if path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        save_model_p(model, target)
        _write_log(target.with_name(target.name + ".log.json"), log)
    return model, log


def get_model_u(config: ExperimentConfig, bundle, split):
    """Checkpoint-or-train for the upsampling model; see get_model_p."""
    path = config.checkpoint_u
    if path and Path(path).exists():
        return load_model_u(path), None
    if not config.training_enabled:
        raise ConfigError(
            f"model-u checkpoint {path!r} not found and training is disabled"
        )
    model, log = train_model_u(
        bundle, split, config.model_u, config.train_u,
        spatial=config.spatial, seed=derive_seed(config.seed, TAG_TRAIN_U),
    )
    if path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        save_model_u(model, target)
        _write_log(target.with_name(target.name + ".log.json"), log)
    return model, log


def _parallel_map(fn, items, jobs: int) -> list:
    """Order-preserving map; with jobs > 1 the items run on a thread pool.

    Results are identical to the serial path because every call is
    independent and internally seeded.
    """
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def finetune_subject(config: ExperimentConfig, bundle, model_u, sid,
                     field: np.ndarray, subset, topologies=None):
    """Adapt the upsampling model's FC layer to one subject.

    ``field`` supplies pseudo-labels everywhere; the subject's true spectra
    at the ``subset`` directions anchor the fit.  The per-subject seed
    derives from the subject's bundle row, so the same subject fine-tunes
    identically no matter which runner asks.
    """
    row = bundle.subject_index(sid)
    measured = {int(d): bundle.magnitudes[row, d].astype(np.float64)
                for d in subset}
    return finetune_model_u(
        model_u, bundle.directions, field, measured, config.finetune,
        config.spatial, seed=derive_seed(config.seed, TAG_FINETUNE, row),
        topologies=topologies,
    )


# -- runners ---------------------------------------------------------------


def _predict_p_all(config, bundle, split, model) -> dict:
    subset = list(split.measurement_subset)

    def one(sid):
        return predict_field_p(model, bundle, split.train, subset, sid)

    fields = _parallel_map(one, list(split.test), config.jobs)
    return dict(zip(split.test, fields))


def run_graphnf(config: ExperimentConfig, *, bundle=None, split=None,
                model=None, label: str = "graphnf") -> EvalReport:
    """Personalization alone: predict every direction of each test subject
    from their measured subset and the training pool."""
    if bundle is None or split is None:
        bundle, split = prepare(config)
    if model is None:
        model, _ = get_model_p(config, bundle, split)
    preds = _predict_p_all(config, bundle, split, model)
    return evaluate(label, bundle, preds, config.zeta_db,
                    exclude=split.measurement_subset)


def run_graphnf_sca(config: ExperimentConfig, *, bundle=None, split=None,
                    model_p=None, model_u=None,
                    label: str = "graphnf-sca") -> EvalReport:
    """Personalization followed by per-subject spatial fine-tuning.

    The upsampling model's FC layer is adapted to each test subject using
    the personalized field as pseudo-labels and the subject's measured
    subset as anchors, then re-predicts the whole field.
    """
    if bundle is None or split is None:
        bundle, split = prepare(config)
    if model_p is None:
        model_p, _ = get_model_p(config, bundle, split)
    if model_u is None:
        model_u, _ = get_model_u(config, bundle, split)
    topo = direction_topologies(bundle.directions, config.spatial)
    subset = list(split.measurement_subset)

    def one(sid):
        field = predict_field_p(model_p, bundle, split.train, subset, sid)
        tuned = finetune_subject(config, bundle, model_u, sid, field, subset,
                                 topologies=topo)
        return predict_field_u(tuned, bundle.directions, field,
                               config.spatial, topologies=topo)

    fields = _parallel_map(one, list(split.test), config.jobs)
    preds = dict(zip(split.test, fields))
    return evaluate(label, bundle, preds, config.zeta_db, exclude=subset)


def run_baseline(config: ExperimentConfig, method: str, *, bundle=None,
                 split=None) -> EvalReport:
    """Classical references.

    ``nn`` and the ``sel-*`` selectors run the personalization protocol
    (sparse subset in, full field out, measured directions excluded from
    the report).  ``lininterp`` runs the upsampling protocol: every
    direction is interpolated from all the others, so nothing is excluded.
    """
    if bundle is None or split is None:
        bundle, split = prepare(config)
    subset = list(split.measurement_subset)
    dirs = bundle.directions
    D = dirs.shape[0]

    def field_for(sid) -> np.ndarray:
        row = bundle.subject_index(sid)
        mag = bundle.magnitudes[row].astype(np.float64)
        if method == "nn":
            return np.stack([
                nearest_neighbor(mag[subset], dirs[subset], dirs[d])
                for d in range(D)
            ])
        if method == "lininterp":
            out = np.empty_like(mag)
            for d in range(D):
                keep = [j for j in range(D) if j != d]
                out[d] = linear_interp(mag[keep], dirs[keep], dirs[d])
            return out
        _, spectra = hrtf_selection(bundle, split.train, sid, subset,
                                    kind=method.removeprefix("sel-"))
        return spectra

    if method not in ("nn", "lininterp", "sel-lsd", "sel-itd", "sel-ild"):
        raise ConfigError(f"unknown baseline {method!r}")
    fields = _parallel_map(field_for, list(split.test), config.jobs)
    preds = dict(zip(split.test, fields))
    exclude = () if method == "lininterp" else subset
    return evaluate(method, bundle, preds, config.zeta_db, exclude=exclude)


def run_hrtf_u(config: ExperimentConfig, *, bundle=None, split=None,
               model=None) -> EvalReport:
    """Upsampling protocol: re-predict each direction of each test
    subject's true field from its neighborhood (the target direction never
    sees its own spectrum)."""
    if bundle is None or split is None:
        bundle, split = prepare(config)
    if model is None:
        model, _ = get_model_u(config, bundle, split)
    topo = direction_topologies(bundle.directions, config.spatial)

    def one(sid):
        row = bundle.subject_index(sid)
        field = bundle.magnitudes[row].astype(np.float64)
        return predict_field_u(model, bundle.directions, field,
                               config.spatial, topologies=topo)

    fields = _parallel_map(one, list(split.test), config.jobs)
    preds = dict(zip(split.test, fields))
    return evaluate("hrtf-u", bundle, preds, config.zeta_db)


def run_ablation(config: ExperimentConfig) -> dict:
    """Reports for the four wirings, keyed by ABLATION_VARIANTS.

    Every wiring trains from the same derived seed, and the ``full``
    wiring goes through the exact code path of :func:`run_graphnf`, so its
    report is byte-identical to that runner's.
    """
    bundle, split = prepare(config)
    reports = {}
    for name, use_clue, use_fusion in (
        ("no_clue_no_fusion", False, False),
        ("clue_no_fusion", True, False),
    ):
        mconfig = replace(config.model_p, use_clue=use_clue,
                          use_fusion=use_fusion)
        model, _ = train_model_p(
            bundle, split, mconfig, config.train_p,
            seed=derive_seed(config.seed, TAG_TRAIN_P),
        )
        preds = _predict_p_all(config, bundle, split, model)
        reports[name] = evaluate(name, bundle, preds, config.zeta_db,
                                 exclude=split.measurement_subset)
    model_p, _ = get_model_p(config, bundle, split)
    reports["full"] = run_graphnf(config, bundle=bundle, split=split,
                                  model=model_p, label="full")
    reports["sca"] = run_graphnf_sca(config, bundle=bundle, split=split,
                                     model_p=model_p, label="sca")
    return reports


def run_method(config: ExperimentConfig, method: str) -> EvalReport:
    if method == "graphnf":
        return run_graphnf(config)
    if method == "graphnf-sca":
        return run_graphnf_sca(config)
    if method == "hrtf-u":
        return run_hrtf_u(config)
    if method in METHODS:
        return run_baseline(config, method)
    raise ConfigError(f"unknown method {method!r}; choose from "
                      f"{', '.join(METHODS)}")
