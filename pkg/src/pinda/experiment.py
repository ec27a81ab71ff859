"""Config-driven pipeline: load, rescale, train, evaluate, report."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from pinda.config import ExperimentConfig
from pinda.contrastive import ContrastiveConfig, EncoderModel
from pinda.data import VectorDataset, SyntheticSpec, concat_split, load_csv, make_synthetic, rescale, train_test_split
from pinda.evaluate import MetricsReport, evaluate
from pinda.noise import NoiseGenerator
from pinda.train import Augmentation, AugmentationSet, Trainer, TrainSettings

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def load_dataset(config: ExperimentConfig) -> VectorDataset:
    spec = config.dataset
    if spec.synthetic is not None:
        ds = make_synthetic(SyntheticSpec(**spec.synthetic))
    else:
        ds = load_csv(spec.csv, spec.has_labels, spec.has_header)
        if spec.test_csv:
            ds = concat_split(ds, load_csv(spec.test_csv, spec.has_labels, spec.has_header), name=ds.name)
    return rescale(ds, spec.rescale)


def augmentation_set(config: ExperimentConfig) -> AugmentationSet:
    user = [Augmentation.from_dict(a) for a in config.augmentations]
    if config.method == "pinda":
        return AugmentationSet(user, with_pinda=True)
    aug = AugmentationSet(user, with_pinda=False)
    if config.method == "random_noise":
        # untrained noise takes the slot the learned noise would occupy
        aug.augmentations.append(Augmentation("random_noise"))
    return aug


def build_trainer(config: ExperimentConfig, input_dim: int, seed: int) -> Trainer:
    enc_seq, gen_seq = np.random.SeedSequence(seed).spawn(2)
    enc = config.encoder
    encoder = EncoderModel(input_dim, np.random.default_rng(enc_seq), enc.hidden, enc.embed_dim, enc.head)
    generator = None
    if config.method == "pinda":
        g = config.generator
        generator = NoiseGenerator(
            input_dim, g.kind, np.random.default_rng(gen_seq), g.hidden, g.sigma_floor, epsilon0=g.epsilon0
        )
    settings = TrainSettings(
        contrastive=ContrastiveConfig(config.temperature, config.positive_loss_variant, config.symmetric),
        lambda_norm=config.lambda_norm,
        mc_samples=config.mc_samples,
        repr_noise_scale=config.simcl_scale if config.method == "simcl_repr_noise" else 0.0,
    )
    return Trainer(encoder, generator, augmentation_set(config), settings, config.lr, config.batch_size, seed)


def split(config: ExperimentConfig, ds: VectorDataset):
    return train_test_split(ds, config.eval.split_seed, config.eval.test_fraction)


def train(config: ExperimentConfig, dataset: VectorDataset, seed: int, epochs: int | None = None) -> Trainer:
    """Train on the training rows of ``dataset``; returns the fitted trainer."""
    train_idx, _ = split(config, dataset)
    trainer = build_trainer(config, dataset.d, seed)
    trainer.fit(dataset.features[train_idx], config.epochs if epochs is None else epochs)
    return trainer


def evaluate_trainer(config: ExperimentConfig, dataset: VectorDataset, trainer: Trainer, seed: int):
    if dataset.labels is None:
        raise ExperimentError("eval", "evaluation needs labels")
    train_idx, test_idx = split(config, dataset)
    return evaluate(trainer.encoder, dataset.features, dataset.labels, train_idx, test_idx, config.eval, seed)


def run_experiment(config: ExperimentConfig | str | Path, out_path=None, checkpoint_dir=None) -> MetricsReport:
    """Full pipeline over every configured seed; optionally writes the JSON report."""
    try:
        if not isinstance(config, ExperimentConfig):
            config = ExperimentConfig.load(config)
    except (OSError, ValueError) as exc:
        raise ExperimentError("config", str(exc)) from exc
    try:
        ds = load_dataset(config)
    except (OSError, ValueError) as exc:
        raise ExperimentError("load", str(exc)) from exc

    runs, histories = [], []
    for seed in config.seeds:
        try:
            trainer = train(config, ds, seed)
        except (ArithmeticError, ValueError) as exc:
            raise ExperimentError("train", f"seed {seed}: {exc}") from exc
        if checkpoint_dir is not None:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            trainer.save(Path(checkpoint_dir) / f"seed{seed}.npz")
        try:
            metrics = evaluate_trainer(config, ds, trainer, seed)
        except (ArithmeticError, ValueError) as exc:
            raise ExperimentError("eval", f"seed {seed}: {exc}") from exc
        log.info("seed %d: knn %.4f softmax %.4f", seed, metrics.knn, metrics.softmax)
        runs.append(metrics)
        histories.append(trainer.history)

    report = MetricsReport.from_runs(ds.name, config.config_hash(), config.seeds, config.method, runs, histories)
    if out_path is not None:
        try:
            Path(out_path).write_text(report.to_json(), encoding="utf-8")
        except OSError as exc:
            raise ExperimentError("write", str(exc)) from exc
    return report
