import struct

import numpy as np
import pytest

from utils.errors import ValidationError
from utils.store import MAGIC, read_header, read_store, write_store


def test_write_and_read(tmp_path):
    arrays = {
        "samples": np.random.default_rng(0).normal(size=(5, 3, 3)),
        "accepted": np.array([1.0, 0.0, 1.0, 1.0, 0.0]),
        "scalar": np.float64(2.5),
    }
    path = write_store(tmp_path / "nested" / "s.lflow", arrays, {"L": 3, "kind": "chain"})

    loaded, meta = read_store(path)
    assert meta == {"L": 3, "kind": "chain"}
    assert list(loaded) == ["samples", "accepted", "scalar"]
    np.testing.assert_array_equal(loaded["samples"], arrays["samples"])
    assert loaded["scalar"].shape == ()
    assert loaded["samples"].flags.writeable



def test_zero_dim_and_transposed_arrays_keep_their_shape(tmp_path):
    grid = np.arange(6.0).reshape(2, 3)
    path = write_store(tmp_path / "a.lflow", {"zero_d": np.array(-1.25), "transposed": grid.T})
    assert read_header(path)["arrays"][0]["shape"] == []

    loaded, _ = read_store(path)
    assert loaded["zero_d"].shape == ()
    assert float(loaded["zero_d"]) == -1.25
    np.testing.assert_array_equal(loaded["transposed"], grid.T)

def test_layout(tmp_path):
    path = write_store(tmp_path / "a.lflow", {"x": np.arange(3.0)})
    raw = path.read_bytes()
    assert raw[:6] == MAGIC
    (length,) = struct.unpack("<Q", raw[6:14])
    assert len(raw) == 14 + length + 3 * 8
    assert np.frombuffer(raw[-24:], dtype="<f8").tolist() == [0.0, 1.0, 2.0]


def test_header_only(tmp_path):
    path = write_store(tmp_path / "a.lflow", {"x": np.zeros((2, 2))}, {"schema_version": "1.0.0"})
    header = read_header(path)
    assert header["meta"]["schema_version"] == "1.0.0"
    assert header["arrays"][0]["shape"] == [2, 2]


def test_wrong_magic(tmp_path):
    path = tmp_path / "bad.lflow"
    path.write_bytes(b"NOTAFLOW" + b"\0" * 16)
    with pytest.raises(ValidationError):
        read_store(path)


def test_truncated_payload(tmp_path):
    path = write_store(tmp_path / "a.lflow", {"x": np.arange(10.0)})
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ValidationError):
        read_store(path)
