"""Per-class feed-forward autoencoder used as a feature extractor.

One network is trained per label on that label's sequences only.  The input
index vector is normalized to a distribution over its positions, pushed
through two encoder layers, one decoder layer and a softmax output of the
input size, and trained to reconstruct the normalized input under
categorical cross entropy with an L1 penalty on the first layer.  After
training, reconstructions are rescaled back to the index range and carried
forward as the extracted features for the classifier stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import storage
from .ingest import TokenSequence
from .numerics import (
    LOG_FLOOR,
    Adam,
    DivergenceError,
    ensure_finite,
    glorot_uniform,
    make_rng,
    seeded_shuffle,
    softmax,
)

WEIGHT_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")


@dataclass
class AeConfig:
    """Training settings for one autoencoder."""

    batch_size: int = 128
    max_epochs: int = 100
    dropout: float = 0.8
    patience: int = 5
    validation_fraction: float = 0.1
    learning_rate: float = 0.001
    l1_coeff: float = 0.01
    hidden: tuple = (400, 200, 200)
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self.hidden) != 3 or any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden must be three positive layer sizes, got {self.hidden}")
        return self


class AutoencoderParams:
    """Weights and biases of the four dense layers, plus input geometry."""

    def __init__(self, arrays: dict, length: int, vocab_size: int, l1_coeff: float):
        self.arrays = arrays
        self.length = length
        self.vocab_size = vocab_size
        self.l1_coeff = l1_coeff

    @classmethod
    def init(cls, rng, length: int, vocab_size: int, hidden=(400, 200, 200), l1_coeff=0.01):
        h1, h2, h3 = hidden
        arrays = {
            "W1": glorot_uniform(rng, (length, h1)),
            "b1": np.zeros(h1),
            "W2": glorot_uniform(rng, (h1, h2)),
            "b2": np.zeros(h2),
            "W3": glorot_uniform(rng, (h2, h3)),
            "b3": np.zeros(h3),
            "W4": glorot_uniform(rng, (h3, length)),
            "b4": np.zeros(length),
        }
        return cls(arrays, length, vocab_size, l1_coeff)

    @property
    def hidden(self):
        return (self.arrays["W1"].shape[1], self.arrays["W2"].shape[1], self.arrays["W3"].shape[1])

    def copy(self):
        return AutoencoderParams(
            {k: v.copy() for k, v in self.arrays.items()},
            self.length,
            self.vocab_size,
            self.l1_coeff,
        )


@dataclass
class FeatureSequence:
    """Autoencoder reconstruction rescaled to the index range, with label."""

    values: np.ndarray
    label: int


def normalize_input(indices, vocab_size: int):
    """Scale indices into [0, 1] by V and renormalize each row to sum to 1.

    Returns ``(t, s)`` where ``t`` is the per-row distribution target and
    ``s`` the pre-normalization row sum needed to undo the scaling later.
    """
    x = np.asarray(indices, dtype=np.float64) / vocab_size
    s = x.sum(axis=-1)
    if np.any(s == 0):
        raise ValueError("all-padding input: cannot normalize a zero sequence")
    return x / s[..., None], s


def _dropout_masks(shapes, dropout: float, train_mode: bool, rng):
    if not train_mode or dropout == 0.0:
        return [None] * len(shapes)
    keep = 1.0 - dropout
    return [(rng.random(shape) >= dropout) / keep for shape in shapes]


def _forward_batch(params: AutoencoderParams, t: np.ndarray, dropout=0.0, train_mode=False, rng=None):
    """Dense forward over a (B, L) batch of normalized inputs."""
    a = params.arrays
    h1 = np.tanh(t @ a["W1"] + a["b1"])
    m1, m2, m3 = _dropout_masks(
        [h1.shape, (t.shape[0], a["W2"].shape[1]), (t.shape[0], a["W3"].shape[1])],
        dropout, train_mode, rng,
    )
    h1d = h1 if m1 is None else h1 * m1
    h2 = np.tanh(h1d @ a["W2"] + a["b2"])
    h2d = h2 if m2 is None else h2 * m2
    h3 = np.tanh(h2d @ a["W3"] + a["b3"])
    h3d = h3 if m3 is None else h3 * m3
    p = softmax(h3d @ a["W4"] + a["b4"], axis=-1)
    cache = {"t": t, "h1": h1, "h2": h2, "h3": h3, "h1d": h1d, "h2d": h2d, "h3d": h3d,
             "p": p, "masks": (m1, m2, m3)}
    return p, cache


def ae_forward(params: AutoencoderParams, inp, train_mode=False, rng=None, dropout=0.0):
    """Forward one sequence; returns the output distribution and layer cache.

    ``inp`` is a TokenSequence or a length-L index vector.  Dropout masks are
    drawn from ``rng`` only when ``train_mode`` is set.
    """
    indices = inp.indices if isinstance(inp, TokenSequence) else np.asarray(inp)
    t, s = normalize_input(indices[None, :], params.vocab_size)
    p, cache = _forward_batch(params, t, dropout=dropout, train_mode=train_mode, rng=rng)
    cache["scale"] = s
    return p[0], cache


def ae_loss(target, output, params: AutoencoderParams = None, l1_coeff: float = None) -> float:
    """Categorical cross entropy plus the first-layer L1 penalty.

    ``target`` is the normalized input distribution, ``output`` the softmax
    reconstruction; logs are floored at 1e-12 so the loss is always finite.
    """
    t = np.asarray(target, dtype=np.float64)
    p = np.asarray(output, dtype=np.float64)
    cce = -float(np.sum(t * np.log(np.maximum(p, LOG_FLOOR))))
    if params is not None and l1_coeff is None:
        l1_coeff = params.l1_coeff
    if l1_coeff:
        cce += l1_coeff * float(np.sum(np.abs(params.arrays["W1"])))
    return cce


def _batch_loss(params: AutoencoderParams, cache: dict, l1_coeff: float) -> float:
    """Mean CCE over the batch plus the L1 penalty (the training objective)."""
    t, p = cache["t"], cache["p"]
    cce = -np.sum(t * np.log(np.maximum(p, LOG_FLOOR))) / t.shape[0]
    return float(cce + l1_coeff * np.sum(np.abs(params.arrays["W1"])))


def _backward_batch(params: AutoencoderParams, cache: dict, l1_coeff: float) -> dict:
    """Gradients of the training objective for every parameter array."""
    a = params.arrays
    t, p = cache["t"], cache["p"]
    m1, m2, m3 = cache["masks"]
    batch = t.shape[0]

    dz4 = (p - t) / batch
    grads = {"W4": cache["h3d"].T @ dz4, "b4": dz4.sum(axis=0)}
    dh3d = dz4 @ a["W4"].T
    dh3 = dh3d if m3 is None else dh3d * m3
    da3 = dh3 * (1.0 - cache["h3"] ** 2)
    grads["W3"] = cache["h2d"].T @ da3
    grads["b3"] = da3.sum(axis=0)
    dh2d = da3 @ a["W3"].T
    dh2 = dh2d if m2 is None else dh2d * m2
    da2 = dh2 * (1.0 - cache["h2"] ** 2)
    grads["W2"] = cache["h1d"].T @ da2
    grads["b2"] = da2.sum(axis=0)
    dh1d = da2 @ a["W2"].T
    dh1 = dh1d if m1 is None else dh1d * m1
    da1 = dh1 * (1.0 - cache["h1"] ** 2)
    grads["W1"] = cache["t"].T @ da1 + l1_coeff * np.sign(a["W1"])
    grads["b1"] = da1.sum(axis=0)
    return grads


def _mean_cce(params: AutoencoderParams, t: np.ndarray) -> float:
    p, _ = _forward_batch(params, t)
    return float(-np.sum(t * np.log(np.maximum(p, LOG_FLOOR))) / t.shape[0])


def ae_train(class_data, config: AeConfig, vocab_size: int = None):
    """Train one autoencoder on a single class's sequences.

    Mini-batch ADAM on the CCE+L1 objective with inverted dropout between
    layers and early stopping on a held-out slice of the class data; the
    parameters from the best validation epoch are returned together with the
    per-epoch loss log.
    """
    config.validate()
    if isinstance(class_data, (list, tuple)):
        if not class_data:
            raise ValueError("class_data is empty")
        indices = np.stack([seq.indices for seq in class_data]).astype(np.float64)
        if vocab_size is None:
            raise ValueError("vocab_size is required")
    else:
        indices = np.asarray(class_data, dtype=np.float64)
        if vocab_size is None:
            raise ValueError("vocab_size is required")
    rng = make_rng(config.seed)
    t, _ = normalize_input(indices, vocab_size)
    length = t.shape[1]

    t = seeded_shuffle(t, rng)
    n_val = int(round(config.validation_fraction * t.shape[0]))
    if config.validation_fraction > 0 and t.shape[0] >= 2:
        n_val = max(1, min(n_val, t.shape[0] - 1))
    else:
        n_val = 0
    t_val, t_train = t[:n_val], t[n_val:]
    monitor = t_val if n_val else t_train

    params = AutoencoderParams.init(rng, length, vocab_size, config.hidden, config.l1_coeff)
    opt = Adam(lr=config.learning_rate)
    best = params.copy()
    best_val = np.inf
    since_best = 0
    log = []

    for epoch in range(config.max_epochs):
        order = rng.permutation(t_train.shape[0])
        epoch_loss = 0.0
        for start in range(0, t_train.shape[0], config.batch_size):
            batch = t_train[order[start:start + config.batch_size]]
            _, cache = _forward_batch(params, batch, config.dropout, train_mode=True, rng=rng)
            loss = _batch_loss(params, cache, config.l1_coeff)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, f"training loss became non-finite at epoch {epoch}")
            epoch_loss += loss * batch.shape[0]
            opt.step(params.arrays, _backward_batch(params, cache, config.l1_coeff))
        val_loss = _mean_cce(params, monitor)
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch, f"validation loss became non-finite at epoch {epoch}")
        if val_loss < best_val:
            best_val = val_loss
            best = params.copy()
            since_best = 0
        else:
            since_best += 1
        log.append({
            "epoch": epoch,
            "train_loss": epoch_loss / max(1, t_train.shape[0]),
            "val_loss": val_loss,
            "best_val_loss": best_val,
        })
        if since_best > config.patience:
            break
    for name, arr in best.arrays.items():
        ensure_finite(f"autoencoder parameter {name}", arr)
    return best, log


def ae_extract(params: AutoencoderParams, inputs, class_label: int):
    """Run inputs through the trained network in inference mode.

    Each reconstruction is rescaled by its input's normalization sum and the
    vocabulary size, landing back on the index scale, and tagged with the
    class label the network was trained on.
    """
    if isinstance(inputs, (list, tuple)):
        indices = np.stack([seq.indices for seq in inputs]).astype(np.float64)
    else:
        indices = np.asarray(inputs, dtype=np.float64)
    t, s = normalize_input(indices, params.vocab_size)
    p, _ = _forward_batch(params, t)
    features = p * s[:, None] * params.vocab_size
    return [FeatureSequence(row, int(class_label)) for row in features]


def save_autoencoder(path: str, params: AutoencoderParams, config_hash: str = storage.NO_HASH):
    meta = {
        "length": params.length,
        "vocab_size": params.vocab_size,
        "l1_coeff": params.l1_coeff,
        "hidden": list(params.hidden),
    }
    storage.save_checkpoint(path, "autoencoder", params.arrays, meta, config_hash)


def load_autoencoder(path: str):
    kind, arrays, meta, config_hash = storage.load_checkpoint(path)
    if kind != "autoencoder":
        raise ValueError(f"{path}: expected an autoencoder checkpoint, got {kind!r}")
    params = AutoencoderParams(arrays, meta["length"], meta["vocab_size"], meta["l1_coeff"])
    return params, config_hash
