"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 broken or missing
data (bundle, split, checkpoint), 3 training divergence.  Set HRTFGRAPH_LOG
to debug/info/warning/error to control verbosity (default warning).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, save_model_u
from .dataset import (
    BundleError,
    generate_synthetic,
    load_bundle,
    make_splits,
    save_bundle,
    SyntheticConfig,
    verify_consistency,
)
from .model_p import predict_field_p
from .optim import TrainingDiverged
from .pipeline import (
    ABLATION_VARIANTS,
    apply_overrides,
    ConfigError,
    derive_seed,
    ExperimentConfig,
    finetune_subject,
    get_model_p,
    get_model_u,
    METHODS,
    prepare,
    run_ablation,
    run_method,
    TAG_SPLIT,
)

log = logging.getLogger("hrtfgraph")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this project reserves 2 for
    data problems, so remap usage errors to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_args(p: _Parser):
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. train_p.lr=0.01")
    p.add_argument("--bundle", help="shorthand for --set bundle=...")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=...")
    p.add_argument("--jobs", type=int, help="worker threads for per-subject "
                   "evaluation (results are identical to serial)")


def _load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") \
                from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    if args.bundle is not None:
        data["bundle"] = args.bundle
    if args.seed is not None:
        data["seed"] = args.seed
    if args.jobs is not None:
        data["jobs"] = args.jobs
    apply_overrides(data, args.set)
    return ExperimentConfig.from_dict(data)


def _out_dir(args, config) -> Path | None:
    if getattr(args, "out", None):
        return Path(args.out)
    if config.output_dir:
        return Path(config.output_dir)
    return None


# -- commands --------------------------------------------------------------


def cmd_gen_synth(args) -> int:
    config = SyntheticConfig(
        seed=args.seed, subject_count=args.subjects,
        direction_count=args.directions, K=args.K,
        sample_rate=args.sample_rate,
    )
    bundle = generate_synthetic(config)
    path = save_bundle(bundle, args.out)
    print(f"wrote bundle {path}  ({len(bundle.subjects)} subjects, "
          f"{bundle.directions.shape[0]} directions, K={bundle.K})")
    return 0


def cmd_make_splits(args) -> int:
    try:
        fractions = tuple(float(f) for f in args.fractions.split(","))
    except ValueError:
        raise ConfigError(f"bad fractions {args.fractions!r}") from None
    bundle = load_bundle(args.bundle)
    spec = make_splits(bundle, fractions, args.measurements,
                       seed=derive_seed(args.seed, TAG_SPLIT))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(spec.to_json())
    print(f"wrote split {out}  ({len(spec.train)} train / {len(spec.val)} "
          f"val / {len(spec.test)} test, "
          f"{len(spec.measurement_subset)} measured directions)")
    return 0


def _train_command(args, which: str) -> int:
    config = _load_config(args)
    ckpt = config.checkpoint_p if which == "p" else config.checkpoint_u
    if not ckpt:
        raise ConfigError(
            f"train-{which} needs checkpoints.model_{which} in the config"
        )
    path = Path(ckpt)
    if path.exists():
        if not args.force:
            print(f"checkpoint {path} already exists (use --force to "
                  f"retrain)")
            return 0
        path.unlink()
    bundle, split = prepare(config)
    log.info("training model-%s on %d subjects", which, len(split.train))
    getter = get_model_p if which == "p" else get_model_u
    _, train_log = getter(config, bundle, split)
    tail = (f"  (final val LSD {train_log[-1]['val_lsd']:.4f} dB)"
            if train_log else "")
    print(f"trained model-{which} -> {path}{tail}")
    return 0


def cmd_train_p(args) -> int:
    return _train_command(args, "p")


def cmd_train_u(args) -> int:
    return _train_command(args, "u")


def cmd_finetune(args) -> int:
    config = _load_config(args)
    bundle, split = prepare(config)
    model_p, _ = get_model_p(config, bundle, split)
    model_u, _ = get_model_u(config, bundle, split)
    subset = list(split.measurement_subset)
    field = predict_field_p(model_p, bundle, split.train, subset,
                            args.subject)
    tuned = finetune_subject(config, bundle, model_u, args.subject, field,
                             subset)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model_u(tuned, out)
    print(f"fine-tuned model-u for {args.subject} -> {out}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    report = run_method(config, args.method)
    out = _out_dir(args, config)
    if out is not None:
        csv_path, _ = report.write(out)
        log.info("wrote %s", csv_path)
    print(report.summary(), end="")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    reports = run_ablation(config)
    out = _out_dir(args, config)
    chunks = []
    for name in ABLATION_VARIANTS:
        if out is not None:
            reports[name].write(out, stem=name)
        chunks.append(reports[name].summary())
    print("\n".join(chunks), end="")
    return 0


def cmd_inspect_bundle(args) -> int:
    bundle = load_bundle(args.path)
    bundle.validate()
    print(f"subjects:    {len(bundle.subjects)}")
    print(f"directions:  {bundle.directions.shape[0]}")
    print(f"K:           {bundle.K}")
    print(f"sample rate: {bundle.sample_rate:g} Hz")
    if bundle.hrirs is not None:
        print(f"hrirs:       yes ({bundle.taps} taps)")
    else:
        print("hrirs:       no")
    print(f"provenance:  {bundle.provenance}")
    if args.check:
        if bundle.hrirs is None:
            raise BundleError("cannot --check a bundle without hrirs")
        worst = verify_consistency(bundle)
        print(f"consistency: magnitudes match hrirs within {worst:.2e} dB")
    return 0


# -- wiring ----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="hrtfgraph",
                     description="graph-based HRTF personalization and "
                                 "spatial upsampling")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic HRTF bundle")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=40)
    p.add_argument("--directions", type=int, default=200)
    p.add_argument("--K", type=int, default=64,
                   help="retained spectrum bins per ear")
    p.add_argument("--sample-rate", type=float, default=48000.0)
    p.set_defaults(fn=cmd_gen_synth)

    p = sub.add_parser("make-splits", help="write a subject split file")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True, help="split JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--measurements", type=int, default=3,
                   help="measured-direction subset size")
    p.set_defaults(fn=cmd_make_splits)

    p = sub.add_parser("train-p", help="train the personalization model")
    _add_config_args(p)
    p.add_argument("--force", action="store_true",
                   help="retrain even if the checkpoint exists")
    p.set_defaults(fn=cmd_train_p)

    p = sub.add_parser("train-u", help="train the upsampling model")
    _add_config_args(p)
    p.add_argument("--force", action="store_true",
                   help="retrain even if the checkpoint exists")
    p.set_defaults(fn=cmd_train_u)

    p = sub.add_parser("finetune",
                       help="adapt the upsampling model to one subject")
    _add_config_args(p)
    p.add_argument("--subject", required=True)
    p.add_argument("--out", required=True, help="tuned checkpoint path")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a method on the test split")
    _add_config_args(p)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--out", help="directory for the CSV report")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="run the four ablation wirings")
    _add_config_args(p)
    p.add_argument("--out", help="directory for the CSV reports")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("inspect-bundle", help="describe a bundle")
    p.add_argument("path")
    p.add_argument("--check", action="store_true",
                   help="recompute magnitudes from the hrirs and compare")
    p.set_defaults(fn=cmd_inspect_bundle)

    return parser


def entry(argv=None) -> int:
    level = os.environ.get("HRTFGRAPH_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TrainingDiverged as exc:
        print(f"hrtfgraph: error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"hrtfgraph: error: {exc}", file=sys.stderr)
        return 1
    except (BundleError, CheckpointError, FileNotFoundError, KeyError,
            OSError, ValueError) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"hrtfgraph: error: {msg}", file=sys.stderr)
        return 2
