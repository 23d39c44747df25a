import struct

import numpy as np
import pytest

from ranslice import checkpoint
from ranslice.checkpoint import CheckpointError


def sample():
    return {"a/w": np.arange(6, dtype=float).reshape(2, 3), "b": np.array([np.pi]),
            "empty": np.zeros((0, 4))}


def test_round_trip(tmp_path):
    checkpoint.save(tmp_path / "c.bin", sample(), {"seed": 3, "note": "x"})
    arrays, meta = checkpoint.load(tmp_path / "c.bin")
    assert meta == {"seed": 3, "note": "x"}
    assert list(arrays) == list(sample())
    for k, v in sample().items():
        np.testing.assert_array_equal(arrays[k], v)
        assert arrays[k].shape == v.shape


def test_layout():
    blob = checkpoint.dumps({"x": np.array([1.5, -2.0])}, {"k": 1})
    assert blob[:8] == b"RSLICECK"
    version, hlen = struct.unpack("<II", blob[8:16])
    assert version == 1
    assert blob[16:16 + hlen] == b'{"meta":{"k":1},"tensors":[{"name":"x","shape":[2]}]}'
    assert blob[16 + hlen:] == struct.pack("<2d", 1.5, -2.0)


def test_byte_identical():
    assert checkpoint.dumps(sample(), {"z": 1, "a": 2}) == checkpoint.dumps(sample(), {"a": 2, "z": 1})


def test_loaded_arrays_writable():
    arrays, _ = checkpoint.loads(checkpoint.dumps(sample()))
    arrays["b"][0] = 1.0


@pytest.mark.parametrize("mangle, match", [
    (lambda b: b"NOTACKPT" + b[8:], "magic"),
    (lambda b: b[:12], "truncated"),
    (lambda b: b[:8] + struct.pack("<I", 9) + b[12:], "version"),
    (lambda b: b[:-3], "truncated data"),
    (lambda b: b + b"\0", "trailing"),
    (lambda b: b[:16] + b"#" + b[17:], "corrupt header"),
])
def test_corruption_detected(mangle, match):
    with pytest.raises(CheckpointError, match=match):
        checkpoint.loads(mangle(checkpoint.dumps(sample())))
