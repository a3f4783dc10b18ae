"""Three isotropic 2-D Gaussians, evaluation grids and far-field probes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SIDE = 9.0
SIGMA = 4.0


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be an (N, D) matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("need exactly one label per feature row")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative class indices")

    def __len__(self):
        return len(self.labels)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], dict(self.metadata))


def triangle_means(side: float = SIDE) -> np.ndarray:
    """Vertices of an equilateral triangle centred at the origin, first vertex on +y."""
    radius = side / math.sqrt(3.0)
    angles = np.pi / 2 + np.arange(3) * 2 * np.pi / 3
    return np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])


def gen_gaussian_triplet(seed: int, samples_per_class: int = 500, side: float = SIDE,
                         sigma: float = SIGMA) -> LabeledDataset:
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    means = triangle_means(side)
    labels = np.repeat(np.arange(3), samples_per_class)
    features = means[labels] + sigma * rng.standard_normal((labels.size, 2))
    meta = {
        "generator": "gaussian_triplet",
        "seed": seed,
        "samples_per_class": samples_per_class,
        "side": side,
        "sigma": sigma,
        "orientation": "centroid at origin, class 0 vertex on +y, counter-clockwise",
        "means": ";".join(f"{float(x)!r},{float(y)!r}" for x, y in means),
    }
    return LabeledDataset(features, labels, meta)


def grid_points(bounds=((-20.0, 20.0), (-20.0, 20.0)), resolution: int = 200) -> np.ndarray:
    """Row-major lattice: y is the slow axis, x the fast one."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    (x0, x1), (y0, y1) = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def far_field_probes(means: np.ndarray, radius: float, count: int, seed: int) -> np.ndarray:
    """``count`` points drawn uniformly on the circle of ``radius`` about the origin.

    Every probe is at least ``radius - max|mean|`` from every class mean.
    """
    means = np.asarray(means, dtype=np.float64)
    reach = float(np.max(np.linalg.norm(means, axis=1)))
    if radius <= reach:
        raise ValueError(f"radius {radius} must exceed the largest mean norm {reach:.6g}")
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2 * np.pi, count)
    return radius * np.column_stack([np.cos(theta), np.sin(theta)])


def bayes_accuracy_oracle(num_mc: int = 100_000, seed: int = 0, side: float = SIDE,
                          sigma: float = SIGMA) -> tuple[float, float]:
    """Monte-Carlo accuracy of the true-density argmax classifier.

    With equal priors and a shared isotropic covariance, the Bayes rule is the
    nearest mean.  Returns ``(accuracy, standard_error)``.
    """
    rng = np.random.default_rng(seed)
    means = triangle_means(side)
    labels = rng.integers(0, 3, num_mc)
    x = means[labels] + sigma * rng.standard_normal((num_mc, 2))
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    acc = float(np.mean(np.argmin(d2, axis=1) == labels))
    return acc, math.sqrt(acc * (1.0 - acc) / num_mc)


def train_test_split(data: LabeledDataset, train_fraction: float, seed: int):
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    cut = int(round(train_fraction * len(data)))
    return data.subset(np.sort(order[:cut])), data.subset(np.sort(order[cut:]))


# -- delimited text I/O -------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(data: LabeledDataset, path, with_labels: bool = True) -> None:
    path = Path(path)
    d = data.num_features
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(d)] + (["label"] if with_labels else []))
        for row, lab in zip(data.features, data.labels):
            w.writerow([_fmt(v) for v in row] + ([int(lab)] if with_labels else []))
    meta_path = path.with_suffix(path.suffix + ".meta")
    with meta_path.open("w") as fh:
        for key in sorted(data.metadata):
            fh.write(f"{key} = {data.metadata[key]}\n")


def save_features(features: np.ndarray, path) -> None:
    features = np.asarray(features, dtype=np.float64)
    save_dataset(LabeledDataset(features, np.zeros(len(features), dtype=np.int64)), path, with_labels=False)


def load_dataset(path) -> LabeledDataset:
    """Read a delimited file written by :func:`save_dataset`.

    The trailing ``label`` column is optional; without it every label is 0
    and ``metadata["has_labels"]`` is False.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    has_labels = bool(header) and header[-1] == "label"
    n_feat = len(header) - (1 if has_labels else 0)
    body = [r for r in rows[1:] if r]
    feats = np.array([[float(v) for v in r[:n_feat]] for r in body], dtype=np.float64).reshape(len(body), n_feat)
    labels = np.array([int(r[n_feat]) for r in body] if has_labels else [0] * len(body), dtype=np.int64)
    meta = {}
    meta_path = path.with_suffix(path.suffix + ".meta")
    if meta_path.exists():
        for line in meta_path.read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k.strip()] = v.strip()
    meta["has_labels"] = has_labels
    return LabeledDataset(feats, labels, meta)
