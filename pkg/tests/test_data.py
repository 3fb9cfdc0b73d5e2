import gzip
import struct

import numpy as np
import pytest

from pkgcn import data
from pkgcn.errors import ConfigError, FormatError

from conftest import make_template_dataset


def write_idx_images(path, images):
    """images: (N, rows, cols) uint8."""
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", data.MNIST_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", data.MNIST_LABEL_MAGIC, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


@pytest.fixture
def mnist_files(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (20, 28, 28), dtype=np.uint8)
    labels = np.tile(np.arange(10), 2).astype(np.uint8)
    img_path, lbl_path = tmp_path / "img", tmp_path / "lbl"
    write_idx_images(img_path, images)
    write_idx_labels(lbl_path, labels)
    return img_path, lbl_path, images, labels


class TestLoadMnist:
    def test_parses_and_scales(self, mnist_files):
        img_path, lbl_path, images, labels = mnist_files
        ds = data.load_mnist(img_path, lbl_path)
        assert ds.images.shape == (20, 1, 28, 28)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
        np.testing.assert_array_equal(ds.images[:, 0] * 255.0, images.astype(np.float64))
        np.testing.assert_array_equal(ds.labels, labels)

    def test_gzip_transparent(self, mnist_files, tmp_path):
        img_path, lbl_path, _, _ = mnist_files
        gz_img = tmp_path / "img.gz"
        gz_img.write_bytes(gzip.compress(img_path.read_bytes()))
        gz_lbl = tmp_path / "lbl.gz"
        gz_lbl.write_bytes(gzip.compress(lbl_path.read_bytes()))
        ds = data.load_mnist(gz_img, gz_lbl)
        ref = data.load_mnist(img_path, lbl_path)
        np.testing.assert_array_equal(ds.images, ref.images)

    def test_bad_magic(self, mnist_files, tmp_path):
        img_path, lbl_path, _, _ = mnist_files
        bad = tmp_path / "bad"
        raw = bytearray(img_path.read_bytes())
        raw[3] = 0x42
        bad.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            data.load_mnist(bad, lbl_path)

    def test_truncated_payload(self, mnist_files, tmp_path):
        img_path, lbl_path, _, _ = mnist_files
        bad = tmp_path / "trunc"
        bad.write_bytes(img_path.read_bytes()[:-100])
        with pytest.raises(FormatError, match="truncated"):
            data.load_mnist(bad, lbl_path)

    def test_count_mismatch(self, mnist_files, tmp_path):
        img_path, _, _, _ = mnist_files
        lbl_path = tmp_path / "short_labels"
        write_idx_labels(lbl_path, np.zeros(5, dtype=np.uint8))
        with pytest.raises(FormatError, match="count"):
            data.load_mnist(img_path, lbl_path)

    def test_loader_is_pure(self, mnist_files):
        img_path, lbl_path, _, _ = mnist_files
        a = data.load_mnist(img_path, lbl_path)
        b = data.load_mnist(img_path, lbl_path)
        assert np.array_equal(a.images, b.images)


class TestLoadCifar10:
    def test_parses_records(self, tmp_path):
        rng = np.random.default_rng(1)
        n = 12
        records = np.zeros((n, data.CIFAR_RECORD_BYTES), dtype=np.uint8)
        labels = rng.integers(0, 10, n, dtype=np.uint8)
        pixels = rng.integers(0, 256, (n, 3072), dtype=np.uint8)
        records[:, 0] = labels
        records[:, 1:] = pixels
        path = tmp_path / "batch.bin"
        path.write_bytes(records.tobytes())
        ds = data.load_cifar10([path])
        assert ds.images.shape == (n, 3, 32, 32)
        np.testing.assert_array_equal(ds.labels, labels)
        # independent decode of one image: R plane first, row-major
        img0 = pixels[0].reshape(3, 32, 32).astype(np.float64) / 255.0
        np.testing.assert_array_equal(ds.images[0], img0)
        assert ds.images[0, 0, 1, 2] == pixels[0, 34] / 255.0

    def test_bad_record_size(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 5000)
        with pytest.raises(FormatError, match="3073"):
            data.load_cifar10([path])

    def test_multiple_batches_concatenate(self, tmp_path):
        rec = np.zeros((2, data.CIFAR_RECORD_BYTES), dtype=np.uint8)
        rec[:, 0] = [3, 7]
        p1, p2 = tmp_path / "b1.bin", tmp_path / "b2.bin"
        p1.write_bytes(rec.tobytes())
        p2.write_bytes(rec.tobytes())
        ds = data.load_cifar10([p1, p2])
        assert len(ds) == 4
        np.testing.assert_array_equal(ds.labels, [3, 7, 3, 7])


class TestStratifiedSplit:
    def test_exact_per_class_counts(self):
        ds = make_template_dataset(50)
        train, val = data.stratified_split(ds, 300, 100, seed=0)
        assert len(train) == 300 and len(val) == 100
        for cls in range(10):
            assert (train.labels == cls).sum() == 30
            assert (val.labels == cls).sum() == 10

    @pytest.mark.parametrize("seed", range(5))
    def test_disjoint(self, seed):
        ds = make_template_dataset(20)
        train, val = data.stratified_split(ds, 100, 50, seed=seed)
        # identify picked examples by their bytes
        train_keys = {img.tobytes() for img in train.images}
        val_keys = {img.tobytes() for img in val.images}
        assert not train_keys & val_keys

    def test_same_seed_identical(self):
        ds = make_template_dataset(20)
        t1, v1 = data.stratified_split(ds, 100, 50, seed=3)
        t2, v2 = data.stratified_split(ds, 100, 50, seed=3)
        assert np.array_equal(t1.images, t2.images)
        assert np.array_equal(v1.images, v2.images)

    def test_indivisible_size_rejected(self):
        ds = make_template_dataset(20)
        with pytest.raises(ConfigError):
            data.stratified_split(ds, 105, 50, seed=0)

    def test_insufficient_population_rejected(self):
        ds = make_template_dataset(5)
        with pytest.raises(ConfigError):
            data.stratified_split(ds, 100, 50, seed=0)


class TestBatches:
    def test_sizes_and_coverage(self):
        ds = make_template_dataset(1)  # N = 10
        sizes = [len(y) for _, y in data.batches(ds, 3, epoch_seed=0)]
        assert sizes == [3, 3, 3, 1]

    def test_union_is_dataset(self):
        ds = make_template_dataset(2)
        seen = np.concatenate([y for _, y in data.batches(ds, 7, epoch_seed=1)])
        assert sorted(seen.tolist()) == sorted(ds.labels.tolist())
        imgs = np.concatenate([x for x, _ in data.batches(ds, 7, epoch_seed=1)])
        assert {i.tobytes() for i in imgs} == {i.tobytes() for i in ds.images}

    def test_different_epoch_seeds_reorder_same_multiset(self):
        ds = make_template_dataset(3)
        o1 = np.concatenate([y for _, y in data.batches(ds, 4, epoch_seed=0)])
        o2 = np.concatenate([y for _, y in data.batches(ds, 4, epoch_seed=1)])
        assert not np.array_equal(o1, o2)
        assert sorted(o1.tolist()) == sorted(o2.tolist())

    def test_bad_batch_size(self):
        ds = make_template_dataset(1)
        with pytest.raises(ConfigError):
            list(data.batches(ds, 0, epoch_seed=0))
