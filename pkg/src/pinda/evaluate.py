"""Frozen-representation evaluation: kNN and softmax regression."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from pinda import autodiff as ad
from pinda.autodiff import ContractError, DimensionError, Tensor
from pinda.train import OptimizerState, adam_step


@dataclass
class LabeledRepresentations:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    def __post_init__(self):
        self.train_x = np.asarray(self.train_x, dtype=np.float64)
        self.test_x = np.asarray(self.test_x, dtype=np.float64)
        self.train_y = np.asarray(self.train_y, dtype=np.int64)
        self.test_y = np.asarray(self.test_y, dtype=np.int64)
        if len(self.train_x) != len(self.train_y) or len(self.test_x) != len(self.test_y):
            raise DimensionError("representation rows and label counts differ")
        if self.train_x.shape[1:] != self.test_x.shape[1:]:
            raise DimensionError("train and test representations differ in width")
        if np.any(self.train_y < 0) or np.any(self.test_y < 0):
            raise ContractError("labels must be non-negative")

    @property
    def n_classes(self) -> int:
        return int(max(self.train_y.max(initial=-1), self.test_y.max(initial=-1))) + 1


def knn_predict(train_x: np.ndarray, train_y: np.ndarray, query: np.ndarray, k: int = 5, chunk: int = 256) -> np.ndarray:
    """Majority vote of the ``k`` nearest rows (Euclidean).

    Equal distances prefer the smaller train index, tied votes the smaller
    class index.
    """
    if k < 1:
        raise ContractError("k must be positive")
    if k > len(train_x):
        raise ContractError(f"k={k} exceeds the {len(train_x)} training rows")
    n_classes = int(train_y.max()) + 1
    train_sq = np.sum(train_x * train_x, axis=1)
    preds = np.empty(len(query), dtype=np.int64)
    for start in range(0, len(query), chunk):
        q = query[start:start + chunk]
        d2 = np.sum(q * q, axis=1)[:, None] + train_sq[None, :] - 2.0 * q @ train_x.T
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        for row, idx in enumerate(nearest):
            preds[start + row] = np.argmax(np.bincount(train_y[idx], minlength=n_classes))
    return preds


def knn_accuracy(reps: LabeledRepresentations, k: int = 5) -> float:
    preds = knn_predict(reps.train_x, reps.train_y, reps.test_x, k)
    return float(np.mean(preds == reps.test_y))


def softmax_regression_loss(weight: Tensor, bias: Tensor, x: np.ndarray, y: np.ndarray) -> Tensor:
    """Mean cross-entropy of a linear layer followed by softmax."""
    logits = ad.matmul(Tensor(x), weight) + bias
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(y)), y] = 1.0
    picked = ad.tsum(logits * onehot, axis=1)
    return ad.mean(ad.logsumexp(logits, axis=1) - picked)


@dataclass
class SoftmaxRegression:
    weight: np.ndarray
    bias: np.ndarray
    shift: np.ndarray
    scale: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.shift) / self.scale
        return np.argmax(z @ self.weight + self.bias, axis=1)


def fit_softmax_regression(
    train_x: np.ndarray,
    train_y: np.ndarray,
    n_classes: int,
    epochs: int = 50,
    batch_size: int = 256,
    lr: float = 1e-3,
    seed: int = 0,
) -> SoftmaxRegression:
    """Adam on cross-entropy; sees the training split only."""
    if len(train_x) == 0:
        raise ContractError("softmax regression needs training rows")
    shift = train_x.mean(axis=0)
    scale = train_x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    x = (train_x - shift) / scale
    weight = Tensor(np.zeros((x.shape[1], n_classes)), requires_grad=True)
    bias = Tensor(np.zeros(n_classes), requires_grad=True)
    params = [weight, bias]
    state = OptimizerState.for_params(params, lr=lr)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            weight.grad = bias.grad = None
            loss = softmax_regression_loss(weight, bias, x[idx], train_y[idx])
            ad.backward(loss)
            adam_step(params, [weight.grad, bias.grad], state)
    return SoftmaxRegression(weight.data, bias.data, shift, scale)


def softmax_regression_accuracy(
    reps: LabeledRepresentations, epochs: int = 50, batch_size: int = 256, lr: float = 1e-3, seed: int = 0
) -> float:
    if len(reps.test_x) == 0:
        raise ContractError("softmax regression needs test rows")
    model = fit_softmax_regression(reps.train_x, reps.train_y, reps.n_classes, epochs, batch_size, lr, seed)
    return float(np.mean(model.predict(reps.test_x) == reps.test_y))


@dataclass
class RunMetrics:
    knn: float
    softmax: float


def evaluate(encoder, features: np.ndarray, labels: np.ndarray, train_idx, test_idx, settings, seed: int = 0) -> RunMetrics:
    """Both evaluators on backbone representations computed once."""
    reps = encoder.represent_numpy(features)
    lab = LabeledRepresentations(reps[train_idx], labels[train_idx], reps[test_idx], labels[test_idx])
    knn = knn_accuracy(lab, settings.k)
    sr = softmax_regression_accuracy(lab, settings.sr_epochs, settings.sr_batch_size, settings.sr_lr, seed)
    return RunMetrics(knn, sr)


@dataclass
class MetricsReport:
    dataset: str
    config_hash: str
    seeds: list[int]
    method: str
    knn: dict = field(default_factory=dict)
    softmax: dict = field(default_factory=dict)
    runs: list[dict] = field(default_factory=list)
    loss_history: list[list[float]] = field(default_factory=list)

    @classmethod
    def from_runs(cls, dataset, config_hash, seeds, method, runs: list[RunMetrics], histories) -> MetricsReport:
        knn = np.array([r.knn for r in runs])
        sr = np.array([r.softmax for r in runs])
        return cls(
            dataset=dataset,
            config_hash=config_hash,
            seeds=list(seeds),
            method=method,
            knn={"mean": float(knn.mean()), "std": float(knn.std())},
            softmax={"mean": float(sr.mean()), "std": float(sr.std())},
            runs=[{"seed": s, "knn": r.knn, "softmax": r.softmax} for s, r in zip(seeds, runs)],
            loss_history=[list(map(float, h)) for h in histories],
        )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "config_hash": self.config_hash,
            "method": self.method,
            "seeds": self.seeds,
            "knn": self.knn,
            "softmax": self.softmax,
            "runs": self.runs,
            "loss_history": self.loss_history,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
