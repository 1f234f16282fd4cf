"""Build the classifier dataset from the two autoencoders' outputs.

The labeled feature sets are concatenated, exact duplicates removed,
Gaussian noise added for regularization, and the result rounded and clamped
back onto the integer index range the embedding layer expects.  Splitting
reserves most of the data for testing and carves the small remainder into
train and validation parts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import gaussian_sample


@dataclass
class SplitSpec:
    """Fractions for the test / train / validation partition.

    ``test_fraction`` of the whole set is held out for testing;
    ``train_fraction`` of the remainder becomes the training set and the
    rest of the remainder the validation set.
    """

    test_fraction: float = 0.95
    train_fraction: float = 0.05

    def validate(self):
        for name, value in (("test_fraction", self.test_fraction),
                            ("train_fraction", self.train_fraction)):
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        return self


def _round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def assemble(pos, neg, vocab_size: int, rng: np.random.Generator, noise_variance: float = 0.1):
    """Concatenate, dedupe, add noise, and discretize the feature sets.

    ``pos`` and ``neg`` are FeatureSequence lists of equal length L.
    Duplicates are exact matches of (feature vector, label); the first
    occurrence wins.  Noise is drawn per entry before rounding
    half-away-from-zero and clamping to [0, vocab_size].

    Returns ``(indices, labels)`` as an (N, L) int64 array and an (N,)
    label array.
    """
    if not pos and not neg:
        raise ValueError("no features to assemble")
    lengths = {f.values.shape[0] for f in pos} | {f.values.shape[0] for f in neg}
    if len(lengths) != 1:
        raise ValueError(f"feature length mismatch between classes: {sorted(lengths)}")

    features = np.stack([f.values for f in pos] + [f.values for f in neg]).astype(np.float64)
    labels = np.array([f.label for f in pos] + [f.label for f in neg], dtype=np.int64)

    seen = set()
    keep = []
    for i in range(features.shape[0]):
        key = (features[i].tobytes(), int(labels[i]))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    features = features[keep]
    labels = labels[keep]

    noise = gaussian_sample(rng, 0.0, noise_variance, features.size).reshape(features.shape)
    noisy = features + noise
    indices = np.clip(_round_half_away_from_zero(noisy), 0, vocab_size).astype(np.int64)
    return indices, labels


def split_sizes(n: int, spec: SplitSpec):
    """Partition sizes ``(train, validation, test)`` for ``n`` examples.

    The test count is rounded half-up; the train count is the floor of its
    fraction of the remainder, which reproduces the reference corpus counts
    exactly; validation takes what is left.
    """
    spec.validate()
    n_test = int(np.floor(spec.test_fraction * n + 0.5))
    remainder = n - n_test
    n_train = int(np.floor(spec.train_fraction * remainder))
    n_val = remainder - n_train
    return n_train, n_val, n_test


def split(indices: np.ndarray, labels: np.ndarray, spec: SplitSpec, rng: np.random.Generator):
    """Shuffle and partition into ``(train, validation, test)`` datasets.

    Each part is an ``(indices, labels)`` pair; the three parts are disjoint
    and together contain every input row exactly once.
    """
    n = indices.shape[0]
    if n < 20:
        raise ValueError(f"need at least 20 examples to split, got {n}")
    n_train, n_val, n_test = split_sizes(n, spec)
    if min(n_train, n_val, n_test) == 0:
        raise ValueError(
            f"empty partition for n={n} with fractions "
            f"({spec.test_fraction}, {spec.train_fraction}): "
            f"train={n_train} val={n_val} test={n_test}"
        )
    perm = rng.permutation(n)
    test_part = perm[:n_test]
    train_part = perm[n_test:n_test + n_train]
    val_part = perm[n_test + n_train:]
    return (
        (indices[train_part], labels[train_part]),
        (indices[val_part], labels[val_part]),
        (indices[test_part], labels[test_part]),
    )
