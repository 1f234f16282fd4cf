"""On-disk formats shared across the pipeline stages.

Three formats, all carrying a format version and the config hash of the run
that produced them so stale or foreign artifacts are caught before use:

* vocabulary -- text; a ``# logad-vocab 1 <hash>`` header line followed by
  ``<token> <index>`` lines sorted by index.
* sequences  -- text; a ``logad-seqs 1 L=.. V=.. n=.. config=..`` header
  line followed by one row per record: L integer indices then the label.
  Used both for encoded corpora and for assembled classifier datasets.
* checkpoint -- binary; a one-line JSON header (kind, metadata, array names
  and shapes) followed by the raw little-endian float64 array bytes in
  header order.  Round-trips bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .ingest import Vocabulary

NO_HASH = "-"


def save_vocabulary(path: str, vocab: Vocabulary, config_hash: str = NO_HASH) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# logad-vocab 1 {config_hash}\n")
        for token, index in vocab.items():
            fh.write(f"{token} {index}\n")


def load_vocabulary(path: str):
    """Return ``(vocab, config_hash)`` from a vocabulary file."""
    index_by_token = {}
    config_hash = NO_HASH
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("# logad-vocab"):
            parts = first.split()
            if len(parts) != 4 or parts[2] != "1":
                raise ValueError(f"{path}: unsupported vocabulary header {first.strip()!r}")
            config_hash = parts[3]
        else:
            raise ValueError(f"{path}: missing vocabulary header")
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: malformed vocabulary line {line.strip()!r}")
            index_by_token[parts[0]] = int(parts[1])
    return Vocabulary(index_by_token), config_hash


def save_sequences(
    path: str,
    indices: np.ndarray,
    labels: np.ndarray,
    vocab_size: int,
    config_hash: str = NO_HASH,
) -> None:
    """Write an (N, L) index array plus (N,) labels as one row per record."""
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    if indices.ndim != 2 or labels.shape != (indices.shape[0],):
        raise ValueError(f"bad shapes: indices {indices.shape}, labels {labels.shape}")
    n, length = indices.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"logad-seqs 1 L={length} V={vocab_size} n={n} config={config_hash}\n")
        for row, label in zip(indices, labels):
            fh.write(" ".join(map(str, row)) + f" {label}\n")


def load_sequences(path: str):
    """Return ``(indices, labels, vocab_size, config_hash)`` from a sequence file."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "logad-seqs" or header[1] != "1":
            raise ValueError(f"{path}: not a version-1 sequence file")
        fields = dict(part.split("=", 1) for part in header[2:])
        length = int(fields["L"])
        vocab_size = int(fields["V"])
        n = int(fields["n"])
        indices = np.empty((n, length), dtype=np.int64)
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            row = fh.readline().split()
            if len(row) != length + 1:
                raise ValueError(f"{path}: row {i} has {len(row)} fields, expected {length + 1}")
            indices[i] = [int(v) for v in row[:length]]
            labels[i] = int(row[length])
    return indices, labels, vocab_size, fields["config"]


def save_checkpoint(
    path: str,
    kind: str,
    arrays: dict,
    meta: dict = None,
    config_hash: str = NO_HASH,
) -> None:
    """Write named float64 arrays with a JSON header; bit-exact on reload."""
    names = list(arrays)
    header = {
        "format": "logad-ckpt",
        "version": 1,
        "kind": kind,
        "config": config_hash,
        "meta": meta or {},
        "arrays": [[name, list(arrays[name].shape)] for name in names],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for name in names:
            arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str):
    """Return ``(kind, arrays, meta, config_hash)`` from a checkpoint file."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not a checkpoint file") from exc
        if header.get("format") != "logad-ckpt" or header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint header")
        blob = fh.read()
    arrays = {}
    offset = 0
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise ValueError(f"{path}: truncated checkpoint (array {name!r})")
        arrays[name] = np.frombuffer(blob[offset:offset + nbytes], dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes after arrays")
    return header["kind"], arrays, header["meta"], header["config"]


def write_json(path: str, payload: dict) -> None:
    """Canonical JSON writer: sorted keys, stable float repr, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
