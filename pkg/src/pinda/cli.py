"""Command-line entry points.

    pinda train --config run.json --out report.json [--checkpoint-dir DIR]
    pinda eval --checkpoint DIR/seed0.npz --config run.json
    pinda synth --spec blobs.json --out blobs.csv
    pinda gradcheck

Log verbosity comes from ``PINDA_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from pinda.config import ConfigError, ExperimentConfig
from pinda.data import SyntheticSpec, make_synthetic, write_csv
from pinda.experiment import ExperimentError, build_trainer, evaluate_trainer, load_dataset, run_experiment


def _train(args) -> int:
    report = run_experiment(args.config, args.out, args.checkpoint_dir)
    print(json.dumps({"knn": report.knn, "softmax": report.softmax}, sort_keys=True))
    return 0


def _eval(args) -> int:
    try:
        config = ExperimentConfig.load(args.config)
    except (OSError, ValueError) as exc:
        raise ExperimentError("config", str(exc)) from exc
    try:
        ds = load_dataset(config)
    except (OSError, ValueError) as exc:
        raise ExperimentError("load", str(exc)) from exc
    seed = config.seeds[0] if args.seed is None else args.seed
    trainer = build_trainer(config, ds.d, seed)
    try:
        trainer.load(args.checkpoint)
    except (OSError, KeyError, ValueError) as exc:
        raise ExperimentError("checkpoint", str(exc)) from exc
    metrics = evaluate_trainer(config, ds, trainer, seed)
    print(json.dumps({"knn": metrics.knn, "softmax": metrics.softmax, "seed": seed}, sort_keys=True))
    return 0


def _synth(args) -> int:
    try:
        spec = SyntheticSpec(**json.loads(Path(args.spec).read_text(encoding="utf-8")))
    except (OSError, ValueError, TypeError) as exc:
        raise ExperimentError("config", str(exc)) from exc
    write_csv(make_synthetic(spec), args.out)
    return 0


def _gradcheck(args) -> int:
    from pinda.gradcheck import TOLERANCE, run_suite

    ok = True
    for name, err in run_suite(args.instances).items():
        passed = err <= TOLERANCE
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: max relative error {err:.2e}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinda", description="Learned-noise augmentation for contrastive learning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate every configured seed, write a metrics report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint-dir")
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_eval)

    p = sub.add_parser("synth", help="write a synthetic blob dataset as CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_synth)

    p = sub.add_parser("gradcheck", help="run the gradient-check suite")
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=_gradcheck)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("PINDA_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if exc.stage == "config" else 1
    except ConfigError as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
