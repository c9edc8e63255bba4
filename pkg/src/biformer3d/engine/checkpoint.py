"""Checkpoint container: magic line, JSON manifest, raw float32 payloads.

Layout on disk:

    BF3DCKPT1\n
    {"params": [{"name": ..., "shape": [...]}, ...], "optimizer": {...},
     "step": ..., "model_config": {...}, "extra": {...}}\n
    <float32 little-endian payloads, concatenated in manifest order>

Round trips are bit-exact for float32 parameters.
"""

import json
import os
import tempfile

import numpy as np

from ..errors import DataError

CHECKPOINT_MAGIC = b"BF3DCKPT1"


def save_checkpoint(path, params, optimizer: dict, step: int,
                    model_config: dict, extra: dict = None) -> None:
    """params: ordered name -> array-like (Tensors or ndarrays)."""
    entries = []
    payloads = []
    for name, value in params.items():
        arr = np.ascontiguousarray(
            getattr(value, "data", value), dtype="<f4"
        )
        entries.append({"name": name, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    manifest = {
        "params": entries,
        "optimizer": dict(optimizer),
        "step": int(step),
        "model_config": dict(model_config),
        "extra": dict(extra or {}),
    }
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(b"\n")
            f.write(json.dumps(manifest).encode("utf-8"))
            f.write(b"\n")
            for p in payloads:
                f.write(p)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Returns (params: name -> float32 ndarray, manifest: dict)."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    first = raw.find(b"\n")
    if first < 0 or raw[:first] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic")
    second = raw.find(b"\n", first + 1)
    if second < 0:
        raise DataError(f"{path}: missing manifest")
    try:
        manifest = json.loads(raw[first + 1 : second].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: bad manifest JSON: {e}") from e
    if not isinstance(manifest, dict) or "params" not in manifest:
        raise DataError(f"{path}: manifest missing params")
    body = raw[second + 1 :]
    params = {}
    offset = 0
    for entry in manifest["params"]:
        try:
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}: bad param entry {entry}: {e}") from e
        count = 1
        for s in shape:
            count *= s
        nbytes = count * 4
        if offset + nbytes > len(body):
            raise DataError(f"{path}: payload truncated at {name}")
        params[name] = (
            np.frombuffer(body, dtype="<f4", count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    if offset != len(body):
        raise DataError(f"{path}: {len(body) - offset} trailing payload bytes")
    return params, manifest
