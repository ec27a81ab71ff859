"""Vector datasets: CSV ingestion, rescaling, synthetic blobs and splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

RESCALE_MODES = ("standardize", "minmax", "none")


class IngestionError(ValueError):
    pass


@dataclass
class VectorDataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    # True marks a test row; None means no declared split
    test_mask: np.ndarray | None = None
    name: str = "dataset"
    scaling: dict = field(default_factory=lambda: {"mode": "none"})

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise IngestionError("features must be a 2-d matrix")
        if not np.all(np.isfinite(self.features)):
            raise IngestionError("features contain NaN or Inf")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.features),):
                raise IngestionError("label count differs from row count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1


def load_csv(path, has_labels: bool = True, has_header: bool = False, name: str | None = None) -> VectorDataset:
    """Parse a comma-separated numeric file; the label is the last column."""
    path = Path(path)
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise IngestionError(f"{path}:{lineno}: expected {width} columns, found {len(values)}")
            if not all(np.isfinite(values)):
                raise IngestionError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    if has_labels:
        if table.shape[1] < 2:
            raise IngestionError(f"{path}: a labelled file needs at least one feature column")
        raw = table[:, -1]
        if np.any(raw != np.round(raw)) or np.any(raw < 0):
            raise IngestionError(f"{path}: labels must be non-negative integers")
        return VectorDataset(table[:, :-1], raw.astype(np.int64), name=name or path.stem)
    return VectorDataset(table, name=name or path.stem)


def concat_split(train: VectorDataset, test: VectorDataset, name: str | None = None) -> VectorDataset:
    """Join a declared train/test pair into one dataset with a test mask."""
    if train.d != test.d:
        raise IngestionError("train and test files differ in width")
    labels = None
    if train.labels is not None and test.labels is not None:
        labels = np.concatenate([train.labels, test.labels])
    mask = np.concatenate([np.zeros(train.n, bool), np.ones(test.n, bool)])
    return VectorDataset(np.vstack([train.features, test.features]), labels, mask, name or train.name)


def rescale(ds: VectorDataset, mode: str = "standardize") -> VectorDataset:
    """Per-feature rescaling; statistics come from the training rows only."""
    if mode not in RESCALE_MODES:
        raise ValueError(f"unknown rescale mode {mode!r}")
    if mode == "none":
        return replace(ds, features=ds.features.copy(), scaling={"mode": "none"})
    fit = ds.features if ds.test_mask is None else ds.features[~ds.test_mask]
    if mode == "standardize":
        shift = fit.mean(axis=0)
        scale = fit.std(axis=0)
    else:
        shift = fit.min(axis=0)
        scale = fit.max(axis=0) - shift
    # constant features map to zero
    scale = np.where(scale > 0, scale, 1.0)
    features = (ds.features - shift) / scale
    scaling = {"mode": mode, "shift": shift.tolist(), "scale": scale.tolist()}
    return replace(ds, features=features, scaling=scaling)


def inverse_rescale(ds: VectorDataset) -> np.ndarray:
    if ds.scaling["mode"] == "none":
        return ds.features.copy()
    return ds.features * np.asarray(ds.scaling["scale"]) + np.asarray(ds.scaling["shift"])


@dataclass
class SyntheticSpec:
    generator: str = "gaussian_blobs"
    n_per_class: int = 100
    d: int = 2
    n_classes: int = 2
    spacing: float = 10.0
    sigma: float = 1.0
    seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.generator != "gaussian_blobs":
            raise ValueError(f"unknown synthetic generator {self.generator!r}")
        if self.n_per_class < 1 or self.d < 1 or self.n_classes < 1:
            raise ValueError("synthetic sizes must be positive")
        if self.sigma < 0 or self.spacing < 0:
            raise ValueError("spacing and sigma must be non-negative")


def blob_centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Centers at distance ``spacing`` from the origin along random directions."""
    directions = rng.standard_normal((spec.n_classes, spec.d))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    return spec.spacing * directions / np.where(norms > 0, norms, 1.0)


def make_synthetic(spec: SyntheticSpec) -> VectorDataset:
    rng = np.random.default_rng(spec.seed)
    centers = blob_centers(spec, rng)
    labels = np.repeat(np.arange(spec.n_classes), spec.n_per_class)
    features = centers[labels] + spec.sigma * rng.standard_normal((len(labels), spec.d))
    order = rng.permutation(len(labels))
    features, labels = features[order], labels[order]
    n_test = int(round(spec.test_fraction * len(labels)))
    mask = np.zeros(len(labels), bool)
    mask[len(labels) - n_test:] = True
    return VectorDataset(features, labels, mask, name=f"blobs{spec.n_classes}x{spec.d}")


def train_test_split(ds: VectorDataset, seed: int = 0, test_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of the train and test parts; a declared split wins."""
    if ds.test_mask is not None:
        return np.flatnonzero(~ds.test_mask), np.flatnonzero(ds.test_mask)
    order = np.random.default_rng(seed).permutation(ds.n)
    n_test = int(round(test_fraction * ds.n))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def write_csv(ds: VectorDataset, path) -> None:
    table = ds.features if ds.labels is None else np.column_stack([ds.features, ds.labels])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in table:
            cells = [repr(float(v)) for v in row]
            if ds.labels is not None:
                cells[-1] = str(int(row[-1]))
            writer.writerow(cells)
