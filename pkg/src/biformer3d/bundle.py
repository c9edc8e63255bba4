"""Native on-disk corpus format.

A bundle file is a one-line JSON header followed by raw samples:

    {"magic": "HRIRB1", "subject_id": ..., "sample_rate_hz": ...,
     "K": ..., "L": ..., "directions": [[az, el, r], ...]}\n
    <L * 2K little-endian float32, row-major; row = left || right>

Cue labels ride in a sidecar JSON next to the bundle (same order as the
bundle's direction list). Converters from measurement formats such as SOFA
are expected to produce exactly this layout; see README for the contract.
"""

import json
import os
import tempfile
from typing import Optional

import numpy as np

from .domain import Direction, StackedHrirs
from .errors import DataError

BUNDLE_MAGIC = "HRIRB1"


def write_bundle(stacked: StackedHrirs, path: str) -> None:
    """Write a bundle atomically (temp file + rename)."""
    header = {
        "magic": BUNDLE_MAGIC,
        "subject_id": stacked.subject_id,
        "sample_rate_hz": stacked.sample_rate_hz,
        "K": stacked.n_taps,
        "L": stacked.n_directions,
        "directions": [[float(v) for v in row] for row in stacked.directions],
    }
    payload = np.ascontiguousarray(stacked.payload, dtype="<f4")
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(json.dumps(header).encode("utf-8"))
            f.write(b"\n")
            f.write(payload.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_bundle(path: str) -> StackedHrirs:
    """Read and validate a bundle file."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataError(f"cannot read bundle {path}: {e}") from e
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: bad header JSON: {e}") from e
    if not isinstance(header, dict) or header.get("magic") != BUNDLE_MAGIC:
        raise DataError(f"{path}: bad magic {header.get('magic')!r}"
                        if isinstance(header, dict)
                        else f"{path}: header is not an object")
    for key in ("subject_id", "sample_rate_hz", "K", "L", "directions"):
        if key not in header:
            raise DataError(f"{path}: header missing {key!r}")
    k, l = int(header["K"]), int(header["L"])
    if k < 1 or l < 1:
        raise DataError(f"{path}: bad dimensions K={k} L={l}")
    dirs = header["directions"]
    if len(dirs) != l:
        raise DataError(f"{path}: {len(dirs)} directions, header says L={l}")
    directions = np.empty((l, 3), dtype=np.float64)
    for i, row in enumerate(dirs):
        if len(row) != 3:
            raise DataError(f"{path}: direction {i} is not [az, el, r]")
        Direction(float(row[0]), float(row[1]), float(row[2]))  # validate
        directions[i] = row
    body = raw[nl + 1 :]
    expect = l * 2 * k * 4
    if len(body) != expect:
        raise DataError(
            f"{path}: payload is {len(body)} bytes, expected {expect}"
        )
    payload = np.frombuffer(body, dtype="<f4").reshape(l, 2 * k).copy()
    if not np.all(np.isfinite(payload)):
        raise DataError(f"{path}: payload contains non-finite samples")
    return StackedHrirs(
        subject_id=str(header["subject_id"]),
        directions=directions,
        payload=payload,
        sample_rate_hz=float(header["sample_rate_hz"]),
    )


def write_labels(subject_id: str, itd_us, ild_db, path: str) -> None:
    """Write the per-direction cue sidecar (order matches the bundle)."""
    doc = {
        "subject_id": subject_id,
        "itd_us": [float(v) for v in itd_us],
        "ild_db": [float(v) for v in ild_db],
    }
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(doc, f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_labels(path: str, expect_l: Optional[int] = None):
    """Read a cue sidecar; returns (subject_id, itd_us, ild_db) arrays."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read labels {path}: {e}") from e
    try:
        itd = np.asarray(doc["itd_us"], dtype=np.float64)
        ild = np.asarray(doc["ild_db"], dtype=np.float64)
        sid = str(doc["subject_id"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: bad label schema: {e}") from e
    if itd.shape != ild.shape or itd.ndim != 1:
        raise DataError(f"{path}: label arrays disagree")
    if expect_l is not None and itd.shape[0] != expect_l:
        raise DataError(f"{path}: {itd.shape[0]} labels for {expect_l} rows")
    if not (np.all(np.isfinite(itd)) and np.all(np.isfinite(ild))):
        raise DataError(f"{path}: non-finite labels")
    return sid, itd, ild
