"""Synthetic classification data, per-device partitions, and dataset files."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDatasetError, InvalidConfigError

FILE_MAGIC = "# uavfed-dataset v1"


@dataclass
class Dataset:
    """A labeled sample set; labels are ints in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise InvalidConfigError("feature/label row counts differ")
        if len(self.labels) and not (
            (self.labels >= 0).all() and (self.labels < self.num_classes).all()
        ):
            raise InvalidConfigError("label outside class range")

    def __len__(self) -> int:
        return len(self.labels)

    def require_nonempty(self):
        if len(self) == 0:
            raise EmptyDatasetError("dataset is empty")


class BlobModel:
    """Gaussian class blobs: one isotropic cluster per class.

    Class means are drawn once (seeded) on a sphere of radius `separation`;
    samples are mean + N(0, noise_std^2 I).
    """

    def __init__(self, num_features: int, num_classes: int, rng: np.random.Generator,
                 separation: float = 3.0, noise_std: float = 1.0):
        means = rng.normal(size=(num_classes, num_features))
        norms = np.linalg.norm(means, axis=1, keepdims=True)
        self.means = separation * means / norms
        self.noise_std = noise_std
        self.num_features = num_features
        self.num_classes = num_classes

    def sample(self, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        noise = rng.normal(scale=self.noise_std, size=(len(labels), self.num_features))
        return self.means[labels] + noise

    def make_iid(self, n: int, rng: np.random.Generator) -> Dataset:
        labels = rng.integers(0, self.num_classes, size=n)
        return Dataset(self.sample(labels, rng), labels, self.num_classes)

    def make_skewed(self, n: int, alpha: float, rng: np.random.Generator) -> Dataset:
        """Draw `n` samples with Dirichlet(alpha)-skewed class proportions."""
        props = rng.dirichlet(np.full(self.num_classes, alpha))
        labels = rng.choice(self.num_classes, size=n, p=props)
        return Dataset(self.sample(labels, rng), labels, self.num_classes)


def flip_labels(ds: Dataset, rate: float, rng: np.random.Generator) -> Dataset:
    """Return a copy with a fraction `rate` of labels flipped to a wrong class.

    The flip is systematic per call: one nonzero class shift is drawn and
    applied to every hit sample, the way a miscalibrated or mislabeled
    source corrupts consistently rather than uniformly at random.
    """
    labels = ds.labels.copy()
    hit = rng.random(len(labels)) < rate
    shift = int(rng.integers(1, ds.num_classes))
    if hit.any():
        labels[hit] = (labels[hit] + shift) % ds.num_classes
    return Dataset(ds.features, labels, ds.num_classes)


def save_dataset(path, ds: Dataset):
    """Write the documented CSV layout: two comment lines (magic, then
    samples/features/classes counts), a header row, then one row per sample
    with float features and an integer label column."""
    n, d = ds.features.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{FILE_MAGIC}\n")
        fh.write(f"# samples={n} features={d} classes={ds.num_classes}\n")
        fh.write(",".join(f"f{j}" for j in range(d)) + ",label\n")
        for i in range(n):
            row = ",".join(repr(float(v)) for v in ds.features[i])
            fh.write(f"{row},{int(ds.labels[i])}\n")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != FILE_MAGIC:
            raise InvalidConfigError(f"not a dataset file: {path}")
        meta = fh.readline().strip().lstrip("# ").split()
        fields = dict(kv.split("=") for kv in meta)
        n, d, c = int(fields["samples"]), int(fields["features"]), int(fields["classes"])
        fh.readline()  # column header
        feats = np.empty((n, d))
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            parts = fh.readline().rstrip("\n").split(",")
            if len(parts) != d + 1:
                raise InvalidConfigError(f"row {i} has {len(parts)} columns, expected {d + 1}")
            feats[i] = [float(v) for v in parts[:d]]
            labels[i] = int(parts[d])
    return Dataset(feats, labels, c)


def generate_dataset(seed: int, samples: int, num_features: int = 20,
                     num_classes: int = 10, separation: float = 3.0,
                     noise_std: float = 1.0) -> Dataset:
    """Deterministic pooled dataset, as emitted by the `gen-data` command."""
    rng = np.random.default_rng(seed)
    blobs = BlobModel(num_features, num_classes, rng, separation, noise_std)
    return blobs.make_iid(samples, rng)
