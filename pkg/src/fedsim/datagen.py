"""Synthetic classification data and Dirichlet label-skew partitioning."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import RngStream

__all__ = [
    "Dataset",
    "dirichlet_partition",
    "generate_gaussian_classes",
    "label_histograms",
    "load_csv",
    "sample_minibatch",
    "save_csv",
    "train_test_split",
]


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, p) float64
    labels: np.ndarray  # (N,) int64 in [0, n_classes)
    n_classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be 2-D and labels 1-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on N")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        missing = np.setdiff1d(np.arange(self.n_classes), self.labels)
        if missing.size:
            raise ValueError(f"classes {missing.tolist()} never appear in the dataset")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx].copy(), self.labels[idx].copy(), self.n_classes)


def generate_gaussian_classes(
    n_per_class: int, p: int, C: int, sep: float, rng: RngStream
) -> Dataset:
    """Draw ``C`` unit-covariance Gaussian clusters in ``R^p``.

    Cluster means have norm ``sep``. When ``C <= p`` the mean directions are
    orthonormal, so any two means sit ``sep * sqrt(2)`` apart; otherwise the
    directions are independent uniform unit vectors. Rows come back shuffled.
    """
    if n_per_class < 1 or p < 1 or C < 1:
        raise ValueError("n_per_class, p and C must be positive")
    if not sep > 0:
        raise ValueError("sep must be positive")
    gen = rng.generator
    raw = gen.normal(size=(p, C))
    if C <= p:
        q, r = np.linalg.qr(raw)
        directions = (q * np.sign(np.diag(r))).T
    else:
        directions = raw.T / np.linalg.norm(raw.T, axis=1, keepdims=True)
    means = sep * directions

    labels = np.repeat(np.arange(C), n_per_class)
    features = means[labels] + gen.normal(size=(labels.size, p))
    order = gen.permutation(labels.size)
    return Dataset(features[order], labels[order].astype(np.int64), C)


def train_test_split(ds: Dataset, n_test: int, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Hold out ``n_test`` uniformly chosen rows as a global test set."""
    if not 0 < n_test < ds.n:
        raise ValueError("n_test must be in (0, N)")
    test_idx = np.sort(rng.choice(ds.n, size=n_test, replace=False))
    train_idx = np.setdiff1d(np.arange(ds.n), test_idx)
    return ds.subset(train_idx), ds.subset(test_idx)


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    exact = proportions * total
    counts = np.floor(exact).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        # stable sort keeps the lower client index first among equal remainders
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def dirichlet_partition(ds: Dataset, m: int, beta: float, rng: RngStream) -> list[np.ndarray]:
    """Split ``ds`` across ``m`` clients with Dirichlet(beta) label skew.

    For each class, proportions over clients are drawn from
    ``Dirichlet(beta * ones(m))`` and turned into integer counts by
    largest-remainder rounding. Any client left empty receives one sample
    taken from the currently largest shard.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if ds.n < m:
        raise ValueError(f"cannot give {m} clients a sample each from {ds.n} rows")

    shards: list[list[int]] = [[] for _ in range(m)]
    for c in range(ds.n_classes):
        members = rng.permutation(np.flatnonzero(ds.labels == c))
        if m == 1:
            shards[0].extend(members.tolist())
            continue
        props = rng.dirichlet(np.full(m, beta))
        counts = _largest_remainder(props, members.size)
        start = 0
        for i, k in enumerate(counts):
            shards[i].extend(members[start:start + k].tolist())
            start += k

    while True:
        sizes = np.array([len(s) for s in shards])
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        donor = int(np.argmax(sizes))
        shards[empty[0]].append(shards[donor].pop())

    return [np.sort(np.array(s, dtype=np.int64)) for s in shards]


def label_histograms(ds: Dataset, shards) -> np.ndarray:
    """Row-normalised label histogram of each shard, shape ``(m, C)``."""
    hist = np.zeros((len(shards), ds.n_classes))
    for i, s in enumerate(shards):
        hist[i] = np.bincount(ds.labels[s], minlength=ds.n_classes)
    return hist / hist.sum(axis=1, keepdims=True)


def sample_minibatch(shard: np.ndarray, batch: int, rng: RngStream) -> np.ndarray:
    """Uniform minibatch; without replacement unless the shard is too small."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    if len(shard) == 0:
        raise ValueError("cannot sample from an empty shard")
    return rng.choice(shard, size=batch, replace=batch > len(shard))


# CSV layout: one header row; a column named ``label`` (configurable) holding
# integer classes 0..C-1; every other column is a numeric feature, in order.
def load_csv(path, label_column: str = "label") -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(f"{path}: no {label_column!r} column in header {header}")
        li = header.index(label_column)
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                lab = float(row[li])
                labels.append(int(lab))
                if lab != int(lab):
                    raise ValueError
                feats.append([float(v) for j, v in enumerate(row) if j != li])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric or non-integer label field") from None
    if not labels:
        raise ValueError(f"{path}: no data rows")
    labels = np.array(labels, dtype=np.int64)
    if labels.min() < 0:
        raise ValueError(f"{path}: negative label")
    return Dataset(np.array(feats, dtype=np.float64), labels, int(labels.max()) + 1)


def save_csv(ds: Dataset, path, label_column: str = "label") -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.p)] + [label_column])
        for row, lab in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])
