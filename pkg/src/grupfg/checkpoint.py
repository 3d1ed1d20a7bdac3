"""Checkpoint file: a JSON header line followed by raw little-endian float64 arrays.

Layout::

    GRUPFG-CHECKPOINT\\n
    {"schema_version": 1, "kind": ..., "hidden_size": ..., "frozen": [...],
     "meta": {...}, "arrays": [{"key": ..., "shape": [...], "offset": ...}, ...]}\\n
    <concatenated array bytes>

Array keys are the parameter names documented in :mod:`grupfg.model`
(``gru.w_z``, ``mix.w_a``, ``head.w`` ...) and, for the MLP baseline,
``mlp.w1``, ``mlp.b1``, ``mlp.w2``, ``mlp.b2``. Arrays are stored in sorted
key order and the header is written with sorted keys, so identical
parameters give byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .baselines import KINDS, ModelVariant
from .errors import CheckpointError

MAGIC = b"GRUPFG-CHECKPOINT\n"
CHECKPOINT_VERSION = 1


def save_checkpoint(variant: ModelVariant, path, meta: dict | None = None) -> None:
    arrays, blobs, offset = [], [], 0
    for key in sorted(variant.params):
        data = np.asarray(variant.params[key].values, dtype="<f8")  # tobytes() is C-order; keeps 0-d shape
        arrays.append({"key": key, "shape": list(data.shape), "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = {
        "schema_version": CHECKPOINT_VERSION,
        "kind": variant.kind,
        "hidden_size": variant.hidden_size,
        "frozen": sorted(variant.frozen),
        "meta": meta or {},
        "arrays": arrays,
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, hidden_size: int | None = None) -> tuple[ModelVariant, dict]:
    """Read a checkpoint; ``hidden_size`` (if given) must match the stored one."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a GRU-PFG checkpoint")
    end = raw.index(b"\n", len(MAGIC))
    try:
        header = json.loads(raw[len(MAGIC):end])
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}") from exc
    if header.get("schema_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('schema_version')}")
    if header.get("kind") not in KINDS:
        raise CheckpointError(f"unknown model kind {header.get('kind')!r} in checkpoint")
    body = memoryview(raw)[end + 1:]
    params = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        if start + 8 * count > len(body):
            raise CheckpointError(f"checkpoint truncated at array {entry['key']}")
        data = np.frombuffer(body[start:start + 8 * count], dtype="<f8").reshape(entry["shape"])
        params[entry["key"]] = ad.parameter(data.astype(np.float64))
    variant = ModelVariant(header["kind"], params, frozenset(header["frozen"]))
    try:
        stored = variant.hidden_size
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing parameter {exc}") from exc
    if stored != header["hidden_size"]:
        raise CheckpointError(f"checkpoint header says hidden size {header['hidden_size']}, arrays say {stored}")
    if hidden_size is not None and hidden_size != stored:
        raise CheckpointError(f"hidden size mismatch: checkpoint has {stored}, expected {hidden_size}")
    return variant, header["meta"]
