"""LSTM, BLSTM and GRU sequence classifiers with hand-written BPTT.

Each classifier embeds the integer index sequence, runs a single recurrent
layer of gated cells over all time steps (both directions for the BLSTM),
and maps the final hidden state through a dense softmax head to two class
probabilities.  Gradients are exact backpropagation through time, written
out gate by gate; training is mini-batch ADAM with inverted dropout on the
recurrent output, k-fold cross-validation and per-fold early stopping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import storage
from .numerics import (
    LOG_FLOOR,
    Adam,
    DivergenceError,
    clip_global_norm,
    ensure_finite,
    glorot_uniform,
    make_rng,
    sigmoid,
    softmax,
)

ARCHS = ("lstm", "blstm", "gru")

LSTM_GATES = ("i", "f", "o", "C")
GRU_GATES = ("r", "z", "h")


@dataclass
class ClfConfig:
    """Training settings for one classifier."""

    hidden_size: int = 100
    embedding_dim: int = 64
    folds: int = 10
    batch_size: int = 128
    max_epochs: int = 100
    dropout: float = 0.8
    patience: int = 5
    learning_rate: float = 0.001
    clip_norm: float = 5.0
    seed: int = 0

    def validate(self):
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        return self


@dataclass
class LstmState:
    """Block output h and cell state C after one step."""

    h: np.ndarray
    C: np.ndarray


@dataclass
class LstmCellParams:
    """Per-gate input weights W (hidden x embed), recurrent weights U
    (hidden x hidden) and biases b for the input/forget/output gates and
    the candidate."""

    W_i: np.ndarray
    U_i: np.ndarray
    b_i: np.ndarray
    W_f: np.ndarray
    U_f: np.ndarray
    b_f: np.ndarray
    W_o: np.ndarray
    U_o: np.ndarray
    b_o: np.ndarray
    W_C: np.ndarray
    U_C: np.ndarray
    b_C: np.ndarray


@dataclass
class GruCellParams:
    """Reset gate, update gate and candidate weights of a GRU cell."""

    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray


def _zero_state(x_t, hidden):
    shape = (x_t.shape[0], hidden) if x_t.ndim == 2 else (hidden,)
    return np.zeros(shape)


def lstm_step(cell: LstmCellParams, x_t, prev: LstmState = None) -> LstmState:
    """One LSTM step: gate the candidate into the cell state, emit h.

    Accepts a single embedding vector or a (batch, embed) matrix; ``prev``
    defaults to the zero state.
    """
    state, _ = _lstm_step_full(cell, np.asarray(x_t, dtype=np.float64), prev)
    return state


def _lstm_step_full(cell, x_t, prev):
    if prev is None:
        z = _zero_state(x_t, cell.b_i.shape[0])
        prev = LstmState(z, z)
    i = sigmoid(x_t @ cell.W_i.T + prev.h @ cell.U_i.T + cell.b_i)
    f = sigmoid(x_t @ cell.W_f.T + prev.h @ cell.U_f.T + cell.b_f)
    o = sigmoid(x_t @ cell.W_o.T + prev.h @ cell.U_o.T + cell.b_o)
    c_hat = np.tanh(x_t @ cell.W_C.T + prev.h @ cell.U_C.T + cell.b_C)
    C = f * prev.C + i * c_hat
    tanh_C = np.tanh(C)
    h = o * tanh_C
    cache = {"x": x_t, "h_prev": prev.h, "C_prev": prev.C,
             "i": i, "f": f, "o": o, "c_hat": c_hat, "tanh_C": tanh_C}
    return LstmState(h, C), cache


def gru_step(cell: GruCellParams, x_t, prev_h=None) -> np.ndarray:
    """One GRU step: blend the previous hidden state with the reset-gated
    candidate according to the update gate."""
    h, _ = _gru_step_full(cell, np.asarray(x_t, dtype=np.float64), prev_h)
    return h


def _gru_step_full(cell, x_t, prev_h):
    if prev_h is None:
        prev_h = _zero_state(x_t, cell.b_r.shape[0])
    r = sigmoid(x_t @ cell.W_r.T + prev_h @ cell.U_r.T + cell.b_r)
    z = sigmoid(x_t @ cell.W_z.T + prev_h @ cell.U_z.T + cell.b_z)
    rh = r * prev_h
    c = np.tanh(x_t @ cell.W_h.T + rh @ cell.U_h.T + cell.b_h)
    h = z * prev_h + (1.0 - z) * c
    cache = {"x": x_t, "h_prev": prev_h, "r": r, "z": z, "rh": rh, "c": c}
    return h, cache


def blstm_concat(forward_h, backward_h) -> np.ndarray:
    """Concatenate the two directions' final block outputs."""
    forward_h = np.asarray(forward_h)
    backward_h = np.asarray(backward_h)
    if forward_h.shape != backward_h.shape:
        raise ValueError(f"direction outputs differ in shape: {forward_h.shape} vs {backward_h.shape}")
    return np.concatenate([forward_h, backward_h], axis=-1)


class ClassifierParams:
    """Embedding table, recurrent cell weights and the dense softmax head."""

    def __init__(self, arch: str, arrays: dict, hidden_size: int, embedding_dim: int, vocab_size: int):
        if arch not in ARCHS:
            raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
        self.arch = arch
        self.arrays = arrays
        self.hidden_size = hidden_size
        self.embedding_dim = embedding_dim
        self.vocab_size = vocab_size

    @classmethod
    def init(cls, rng, arch: str, vocab_size: int, hidden_size: int, embedding_dim: int):
        arrays = {"emb": rng.uniform(-0.05, 0.05, size=(vocab_size + 1, embedding_dim))}
        gates = GRU_GATES if arch == "gru" else LSTM_GATES
        prefixes = ("fw_", "bw_") if arch == "blstm" else ("",)
        for prefix in prefixes:
            for gate in gates:
                arrays[f"{prefix}W_{gate}"] = glorot_uniform(rng, (hidden_size, embedding_dim))
                arrays[f"{prefix}U_{gate}"] = glorot_uniform(rng, (hidden_size, hidden_size))
                arrays[f"{prefix}b_{gate}"] = np.zeros(hidden_size)
        head_in = 2 * hidden_size if arch == "blstm" else hidden_size
        arrays["W_y"] = glorot_uniform(rng, (2, head_in))
        arrays["b_y"] = np.zeros(2)
        return cls(arch, arrays, hidden_size, embedding_dim, vocab_size)

    def cell(self, prefix: str = ""):
        a = self.arrays
        if self.arch == "gru":
            return GruCellParams(*(a[f"{prefix}{kind}_{g}"] for g in GRU_GATES for kind in ("W", "U", "b")))
        return LstmCellParams(*(a[f"{prefix}{kind}_{g}"] for g in LSTM_GATES for kind in ("W", "U", "b")))

    def copy(self):
        return ClassifierParams(
            self.arch,
            {k: v.copy() for k, v in self.arrays.items()},
            self.hidden_size,
            self.embedding_dim,
            self.vocab_size,
        )


def _run_direction(params, embedded, reverse: bool, prefix: str, want_cache: bool):
    """Run one recurrent direction over (B, L, E) embeddings; return final h."""
    cell = params.cell(prefix)
    steps = range(embedded.shape[1] - 1, -1, -1) if reverse else range(embedded.shape[1])
    caches = [] if want_cache else None
    if params.arch == "gru":
        h = None
        for t in steps:
            h, cache = _gru_step_full(cell, embedded[:, t, :], h)
            if want_cache:
                caches.append(cache)
    else:
        state = None
        for t in steps:
            state, cache = _lstm_step_full(cell, embedded[:, t, :], state)
            if want_cache:
                caches.append(cache)
        h = state.h
    return h, caches


def _forward_batch(params: ClassifierParams, X: np.ndarray, train_mode=False, rng=None, dropout=0.0):
    """Forward a (B, L) index batch to (B, 2) class probabilities."""
    X = np.asarray(X)
    if np.any((X < 0) | (X > params.vocab_size)):
        raise ValueError(f"token index out of range [0, {params.vocab_size}]")
    embedded = params.arrays["emb"][X]
    want_cache = train_mode
    if params.arch == "blstm":
        h_fw, caches_fw = _run_direction(params, embedded, False, "fw_", want_cache)
        h_bw, caches_bw = _run_direction(params, embedded, True, "bw_", want_cache)
        h = blstm_concat(h_fw, h_bw)
        caches = {"fw": caches_fw, "bw": caches_bw}
    else:
        h, direction_caches = _run_direction(params, embedded, False, "", want_cache)
        caches = {"fw": direction_caches}
    if train_mode and dropout > 0.0:
        mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
    else:
        mask = None
    h_dropped = h if mask is None else h * mask
    probs = softmax(h_dropped @ params.arrays["W_y"].T + params.arrays["b_y"], axis=-1)
    cache = {"X": X, "probs": probs, "h_dropped": h_dropped, "mask": mask, "caches": caches}
    return probs, cache


def classify_forward(params: ClassifierParams, indices, train_mode=False, rng=None, dropout=0.0):
    """Class probabilities for one index sequence (returns (2,) probs + cache)."""
    indices = np.asarray(indices)
    probs, cache = _forward_batch(params, indices[None, :], train_mode=train_mode, rng=rng, dropout=dropout)
    return probs[0], cache


def _lstm_backward_seq(cell, caches, d_h_final, grads, prefix):
    """BPTT through one LSTM direction; returns d(embedded inputs) per step."""
    dh = d_h_final
    dC = np.zeros_like(dh)
    dx_steps = []
    for cache in reversed(caches):
        i, f, o, c_hat, tanh_C = cache["i"], cache["f"], cache["o"], cache["c_hat"], cache["tanh_C"]
        dC = dC + dh * o * (1.0 - tanh_C ** 2)
        do = dh * tanh_C * o * (1.0 - o)
        di = dC * c_hat * i * (1.0 - i)
        df = dC * cache["C_prev"] * f * (1.0 - f)
        dc_hat = dC * i * (1.0 - c_hat ** 2)
        gate_grads = {"i": di, "f": df, "o": do, "C": dc_hat}
        dx = np.zeros_like(cache["x"])
        dh = np.zeros_like(dh)
        for gate, dg in gate_grads.items():
            grads[f"{prefix}W_{gate}"] += dg.T @ cache["x"]
            grads[f"{prefix}U_{gate}"] += dg.T @ cache["h_prev"]
            grads[f"{prefix}b_{gate}"] += dg.sum(axis=0)
            dx += dg @ getattr(cell, f"W_{gate}")
            dh += dg @ getattr(cell, f"U_{gate}")
        dC = dC * f
        dx_steps.append(dx)
    dx_steps.reverse()
    return dx_steps


def _gru_backward_seq(cell, caches, d_h_final, grads, prefix):
    """BPTT through one GRU direction; returns d(embedded inputs) per step."""
    dh = d_h_final
    dx_steps = []
    for cache in reversed(caches):
        r, z, c, h_prev = cache["r"], cache["z"], cache["c"], cache["h_prev"]
        dz = dh * (h_prev - c) * z * (1.0 - z)
        dc = dh * (1.0 - z)
        da = dc * (1.0 - c ** 2)
        drh = da @ cell.U_h
        dr = drh * h_prev * r * (1.0 - r)
        gate_grads = {"r": dr, "z": dz}
        dx = da @ cell.W_h
        grads[f"{prefix}W_h"] += da.T @ cache["x"]
        grads[f"{prefix}U_h"] += da.T @ cache["rh"]
        grads[f"{prefix}b_h"] += da.sum(axis=0)
        dh_next = dh * z + drh * r
        for gate, dg in gate_grads.items():
            grads[f"{prefix}W_{gate}"] += dg.T @ cache["x"]
            grads[f"{prefix}U_{gate}"] += dg.T @ cache["h_prev"]
            grads[f"{prefix}b_{gate}"] += dg.sum(axis=0)
            dx += dg @ getattr(cell, f"W_{gate}")
            dh_next += dg @ getattr(cell, f"U_{gate}")
        dh = dh_next
        dx_steps.append(dx)
    dx_steps.reverse()
    return dx_steps


def classify_backward(params: ClassifierParams, cache: dict, labels) -> dict:
    """Exact gradients of the summed cross entropy over the batch.

    ``cache`` must come from a train-mode forward.  Every parameter array
    gets a gradient, including only the embedding rows that were looked up.
    """
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    probs = cache["probs"]
    batch = probs.shape[0]
    if labels.shape[0] != batch:
        raise ValueError(f"{labels.shape[0]} labels for a batch of {batch}")
    if cache["caches"]["fw"] is None:
        raise ValueError("cache came from an inference forward; rerun with train_mode")

    grads = {name: np.zeros_like(arr) for name, arr in params.arrays.items()}
    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    grads["W_y"] += dlogits.T @ cache["h_dropped"]
    grads["b_y"] += dlogits.sum(axis=0)
    dh = dlogits @ params.arrays["W_y"]
    if cache["mask"] is not None:
        dh = dh * cache["mask"]

    hidden = params.hidden_size
    backward_seq = _gru_backward_seq if params.arch == "gru" else _lstm_backward_seq
    if params.arch == "blstm":
        dx_fw = backward_seq(params.cell("fw_"), cache["caches"]["fw"], dh[:, :hidden], grads, "fw_")
        dx_bw = backward_seq(params.cell("bw_"), cache["caches"]["bw"], dh[:, hidden:], grads, "bw_")
    else:
        dx_fw = backward_seq(params.cell(""), cache["caches"]["fw"], dh, grads, "")
        dx_bw = None

    X = cache["X"]
    d_embedded = np.stack(dx_fw, axis=1)
    if dx_bw is not None:
        # the backward direction consumed the sequence reversed; undo that
        d_embedded = d_embedded + np.stack(dx_bw[::-1], axis=1)
    np.add.at(grads["emb"], X, d_embedded)
    return grads


def _batch_cce(probs, labels) -> float:
    picked = probs[np.arange(probs.shape[0]), labels]
    return float(-np.sum(np.log(np.maximum(picked, LOG_FLOOR))))


def predict(params: ClassifierParams, indices: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Predicted labels for an (N, L) index array."""
    out = np.empty(indices.shape[0], dtype=np.int64)
    for start in range(0, indices.shape[0], batch_size):
        probs, _ = _forward_batch(params, indices[start:start + batch_size])
        out[start:start + batch_size] = np.argmax(probs, axis=1)
    return out


def dataset_loss_accuracy(params: ClassifierParams, indices, labels, batch_size: int = 512):
    """Mean cross entropy and accuracy over a dataset, inference mode."""
    total = 0.0
    correct = 0
    for start in range(0, indices.shape[0], batch_size):
        X = indices[start:start + batch_size]
        y = labels[start:start + batch_size]
        probs, _ = _forward_batch(params, X)
        total += _batch_cce(probs, y)
        correct += int(np.sum(np.argmax(probs, axis=1) == y))
    n = indices.shape[0]
    return total / n, correct / n


def _train_one_model(X, y, X_val, y_val, arch, config, vocab_size, init_rng, train_rng):
    """Train a single model with early stopping on (X_val, y_val)."""
    params = ClassifierParams.init(init_rng, arch, vocab_size, config.hidden_size, config.embedding_dim)
    opt = Adam(lr=config.learning_rate)
    best = params.copy()
    best_val_loss = np.inf
    since_best = 0
    epochs_run = 0
    for epoch in range(config.max_epochs):
        order = train_rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            Xb, yb = X[batch_idx], y[batch_idx]
            probs, cache = _forward_batch(params, Xb, train_mode=True, rng=train_rng, dropout=config.dropout)
            loss = _batch_cce(probs, yb)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, f"classifier loss became non-finite at epoch {epoch}")
            grads = classify_backward(params, cache, yb)
            for g in grads.values():
                g /= Xb.shape[0]
            clip_global_norm(grads, config.clip_norm)
            opt.step(params.arrays, grads)
        epochs_run = epoch + 1
        val_loss, _ = dataset_loss_accuracy(params, X_val, y_val, config.batch_size)
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch, f"validation loss became non-finite at epoch {epoch}")
        if val_loss < best_val_loss:
            best_val_loss = val_loss
            best = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best > config.patience:
                break
    return best, epochs_run


def train_classifier(train, validation, arch: str, config: ClfConfig, vocab_size: int):
    """K-fold cross-validated training; returns the best fold model + report.

    ``train`` and ``validation`` are ``(indices, labels)`` pairs.  Each fold
    trains on the other folds with early stopping on its own held-out fold;
    the report carries per-fold train/validation accuracy and loss with
    their means and standard deviations.  The fold model with the highest
    held-out accuracy (ties: lowest fold index) is returned, with its
    accuracy on the provided validation set in the report.
    """
    config.validate()
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
    X, y = train
    X_val, y_val = validation
    if X.shape[0] < config.folds:
        raise ValueError(f"{config.folds} folds need at least {config.folds} training examples, got {X.shape[0]}")

    fold_chunks = np.array_split(make_rng(config.seed, 0).permutation(X.shape[0]), config.folds)
    fold_entries = []
    fold_models = []
    for k, chunk in enumerate(fold_chunks):
        train_idx = np.setdiff1d(np.arange(X.shape[0]), chunk, assume_unique=False)
        model, epochs_run = _train_one_model(
            X[train_idx], y[train_idx], X[chunk], y[chunk],
            arch, config, vocab_size,
            init_rng=make_rng(config.seed, 1, k),
            train_rng=make_rng(config.seed, 2, k),
        )
        train_loss, train_acc = dataset_loss_accuracy(model, X[train_idx], y[train_idx], config.batch_size)
        fold_val_loss, fold_val_acc = dataset_loss_accuracy(model, X[chunk], y[chunk], config.batch_size)
        fold_entries.append({
            "fold": k,
            "train_accuracy": train_acc,
            "train_loss": train_loss,
            "val_accuracy": fold_val_acc,
            "val_loss": fold_val_loss,
            "epochs": epochs_run,
        })
        fold_models.append(model)

    val_accs = np.array([e["val_accuracy"] for e in fold_entries])
    selected = int(np.argmax(val_accs))
    model = fold_models[selected]
    for name, arr in model.arrays.items():
        ensure_finite(f"classifier parameter {name}", arr)
    _, validation_accuracy = dataset_loss_accuracy(model, X_val, y_val, config.batch_size)

    def stats(key):
        values = np.array([e[key] for e in fold_entries])
        return float(values.mean()), float(values.std())

    report = {
        "arch": arch,
        "folds": fold_entries,
        "selected_fold": selected,
        "validation_accuracy": validation_accuracy,
    }
    for key, label in (("train_accuracy", "train_accuracy"), ("val_accuracy", "val_accuracy"),
                       ("train_loss", "train_loss")):
        mean, std = stats(key)
        report[f"mean_{label}"] = mean
        report[f"std_{label}"] = std
    return model, report


def save_classifier(path: str, params: ClassifierParams, config_hash: str = storage.NO_HASH):
    meta = {
        "arch": params.arch,
        "hidden_size": params.hidden_size,
        "embedding_dim": params.embedding_dim,
        "vocab_size": params.vocab_size,
    }
    storage.save_checkpoint(path, "classifier", params.arrays, meta, config_hash)


def load_classifier(path: str):
    kind, arrays, meta, config_hash = storage.load_checkpoint(path)
    if kind != "classifier":
        raise ValueError(f"{path}: expected a classifier checkpoint, got {kind!r}")
    params = ClassifierParams(
        meta["arch"], arrays, meta["hidden_size"], meta["embedding_dim"], meta["vocab_size"]
    )
    return params, config_hash
