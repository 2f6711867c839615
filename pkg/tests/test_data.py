import numpy as np
import pytest

from uavfed.data import (
    BlobModel,
    Dataset,
    FILE_MAGIC,
    flip_labels,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from uavfed.errors import EmptyDatasetError, InvalidConfigError


def test_generator_deterministic():
    a = generate_dataset(seed=11, samples=100)
    b = generate_dataset(seed=11, samples=100)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_generator_seed_sensitivity():
    a = generate_dataset(seed=11, samples=100)
    b = generate_dataset(seed=12, samples=100)
    assert not np.array_equal(a.features, b.features)


def test_blobs_roughly_separable():
    rng = np.random.default_rng(3)
    blobs = BlobModel(20, 10, rng, separation=3.0, noise_std=1.0)
    ds = blobs.make_iid(500, rng)
    # nearest-mean classification should beat chance by a wide margin
    d2 = ((ds.features[:, None, :] - blobs.means[None]) ** 2).sum(axis=2)
    acc = (d2.argmin(axis=1) == ds.labels).mean()
    assert acc > 0.8


def test_skewed_split_is_skewed():
    rng = np.random.default_rng(5)
    blobs = BlobModel(10, 10, rng, separation=3.0)
    maxshares = []
    for _ in range(30):
        ds = blobs.make_skewed(60, alpha=0.5, rng=rng)
        counts = np.bincount(ds.labels, minlength=10)
        maxshares.append(counts.max() / counts.sum())
    # Dirichlet(0.5) concentrates mass: the top class should usually dominate
    assert np.mean(maxshares) > 0.3


def test_flip_labels_rate_and_validity():
    rng = np.random.default_rng(9)
    blobs = BlobModel(5, 4, rng)
    ds = blobs.make_iid(4000, rng)
    noisy = flip_labels(ds, 0.3, rng)
    frac = (noisy.labels != ds.labels).mean()
    assert 0.25 < frac < 0.35
    assert ((noisy.labels >= 0) & (noisy.labels < 4)).all()
    # a flipped label never stays the same class
    changed = noisy.labels != ds.labels
    assert (noisy.labels[changed] != ds.labels[changed]).all()


def test_roundtrip_exact(tmp_path):
    ds = generate_dataset(seed=2, samples=50, num_features=6, num_classes=3)
    path = tmp_path / "data.csv"
    save_dataset(path, ds)
    back = load_dataset(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.num_classes == 3
    first = path.read_text().splitlines()[0]
    assert first == FILE_MAGIC


def test_load_rejects_other_files(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(InvalidConfigError):
        load_dataset(path)


def test_label_range_validated():
    with pytest.raises(InvalidConfigError):
        Dataset(np.zeros((2, 3)), np.array([0, 5]), num_classes=3)


def test_empty_guard():
    ds = Dataset(np.zeros((0, 3)), np.zeros(0, dtype=int), num_classes=2)
    with pytest.raises(EmptyDatasetError):
        ds.require_nonempty()
