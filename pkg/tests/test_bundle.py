import json

import numpy as np
import pytest

from biformer3d.bundle import (
    BUNDLE_MAGIC,
    read_bundle,
    read_labels,
    write_bundle,
    write_labels,
)
from biformer3d.domain import StackedHrirs, fibonacci_grid
from biformer3d.errors import DataError


def _stacked(l=7, k=16, seed=3):
    rng = np.random.default_rng(seed)
    dirs = np.array([d.as_array() for d in fibonacci_grid(l)])
    return StackedHrirs(
        subject_id="s042",
        directions=dirs,
        payload=rng.normal(size=(l, 2 * k)).astype(np.float32),
        sample_rate_hz=48000.0,
    )


def test_round_trip_bit_exact(tmp_path):
    st = _stacked()
    path = str(tmp_path / "a.hrir")
    write_bundle(st, path)
    back = read_bundle(path)
    assert back.subject_id == "s042"
    assert back.sample_rate_hz == 48000.0
    np.testing.assert_array_equal(back.payload, st.payload)
    np.testing.assert_array_equal(back.directions, st.directions)


def test_header_is_one_json_line(tmp_path):
    path = str(tmp_path / "a.hrir")
    write_bundle(_stacked(), path)
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
    assert header["magic"] == BUNDLE_MAGIC
    assert header["K"] == 16 and header["L"] == 7


def test_bad_magic(tmp_path):
    path = str(tmp_path / "a.hrir")
    write_bundle(_stacked(), path)
    raw = open(path, "rb").read()
    mangled = raw.replace(BUNDLE_MAGIC.encode(), b"NOPEv1")
    open(path, "wb").write(mangled)
    with pytest.raises(DataError, match="magic"):
        read_bundle(path)


def test_truncated_payload(tmp_path):
    path = str(tmp_path / "a.hrir")
    write_bundle(_stacked(), path)
    raw = open(path, "rb").read()
    open(path, "wb").write(raw[:-4])
    with pytest.raises(DataError, match="bytes"):
        read_bundle(path)


def test_trailing_garbage(tmp_path):
    path = str(tmp_path / "a.hrir")
    write_bundle(_stacked(), path)
    with open(path, "ab") as f:
        f.write(b"\x00\x00\x00\x00")
    with pytest.raises(DataError):
        read_bundle(path)


def test_non_finite_payload(tmp_path):
    st = _stacked()
    path = str(tmp_path / "a.hrir")
    write_bundle(st, path)
    raw = bytearray(open(path, "rb").read())
    nl = raw.index(b"\n")
    nan = np.array([np.nan], dtype="<f4").tobytes()
    raw[nl + 1 : nl + 5] = nan
    open(path, "wb").write(bytes(raw))
    with pytest.raises(DataError, match="finite"):
        read_bundle(path)


def test_bad_direction_in_header(tmp_path):
    st = _stacked()
    path = str(tmp_path / "a.hrir")
    write_bundle(st, path)
    raw = open(path, "rb").read()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    header["directions"][0][1] = 123.0  # elevation out of range
    open(path, "wb").write(json.dumps(header).encode() + raw[nl:])
    with pytest.raises(DataError):
        read_bundle(path)


def test_missing_file():
    with pytest.raises(DataError):
        read_bundle("/nonexistent/nowhere.hrir")


def test_labels_round_trip(tmp_path):
    path = str(tmp_path / "a.labels.json")
    itd = [1.5, -2.5, 0.0]
    ild = [0.25, 0.0, -3.0]
    write_labels("s042", itd, ild, path)
    sid, itd2, ild2 = read_labels(path, expect_l=3)
    assert sid == "s042"
    np.testing.assert_array_equal(itd2, itd)
    np.testing.assert_array_equal(ild2, ild)
    with pytest.raises(DataError):
        read_labels(path, expect_l=4)


def test_labels_schema_errors(tmp_path):
    path = str(tmp_path / "bad.json")
    open(path, "w").write('{"subject_id": "x", "itd_us": [1.0]}')
    with pytest.raises(DataError):
        read_labels(path)
    open(path, "w").write('{"subject_id": "x", "itd_us": [1.0], "ild_db": ["a"]}')
    with pytest.raises(DataError):
        read_labels(path)
