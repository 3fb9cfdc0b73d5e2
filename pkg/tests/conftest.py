import numpy as np
import pytest

from pkgcn.data import LabeledDataset


def make_template_dataset(
    n_per_class, m=10, size=12, noise=0.3, seed=0, template_seed=1234, dtype=np.float64
):
    """Tiny learnable image dataset: one fixed template per class plus noise.

    Templates depend only on ``template_seed`` so different splits share
    the same class structure; ``seed`` controls the noise and ordering.
    A small CNN separates the classes easily but imperfectly at high
    noise, which keeps the misclassification graph non-trivial.
    """
    templates = np.random.default_rng(template_seed).random((m, 1, size, size))
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(m), n_per_class)
    images = templates[labels] + noise * rng.standard_normal((len(labels), 1, size, size))
    images = np.clip(images, 0.0, 1.0).astype(dtype)
    order = rng.permutation(len(labels))
    return LabeledDataset(images[order], labels[order], m=m)


@pytest.fixture
def template_splits():
    train = make_template_dataset(8, seed=1)
    val = make_template_dataset(6, seed=2)
    test = make_template_dataset(6, seed=3)
    return train, val, test
