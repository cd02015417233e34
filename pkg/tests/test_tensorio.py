import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from bridgealign.resampler import TirWeights, init_tir_weights
from bridgealign.tensorio import MAGIC, TensorFormatError, decode_records, encode_record, read_tensors, write_tensors


def test_record_layout():
    arr = np.arange(6, dtype=float).reshape(2, 3)
    blob = encode_record("x", arr, "f32")
    assert blob[:8] == MAGIC == b"BRALIGN1"
    (hlen,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12:12 + hlen])
    assert header == {"name": "x", "shape": [2, 3], "dtype": "f32"}
    payload = blob[12 + hlen:]
    np.testing.assert_array_equal(np.frombuffer(payload, dtype="<f4").reshape(2, 3), arr)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, min_side=0, max_side=4),
                  elements=st.floats(allow_nan=False, width=64)))
def test_f64_round_trip_is_exact(arr):
    (header, back), = decode_records(encode_record("a", arr, "f64"))
    assert back.shape == arr.shape
    np.testing.assert_array_equal(back, arr)


def test_f32_quantizes():
    arr = np.array([0.1, 1 / 3])
    (_, back), = decode_records(encode_record("a", arr, "f32"))
    np.testing.assert_array_equal(back, arr.astype(np.float32).astype(np.float64))


def test_multi_record_file_and_meta(tmp_path):
    path = tmp_path / "t.bin"
    write_tensors(path, {"a": np.ones((2, 2)), "b": np.zeros(3)}, dtype="f64", meta={"kind": "linear"})
    tensors, meta = read_tensors(path)
    assert list(tensors) == ["a", "b"] and meta == {"kind": "linear"}
    np.testing.assert_array_equal(tensors["a"], np.ones((2, 2)))


def test_tir_weights_through_file(tmp_path):
    weights = init_tir_weights(np.random.default_rng(0), 4, 2)
    write_tensors(tmp_path / "tir.bin", weights.to_tensors(), dtype="f64")
    restored = TirWeights.from_tensors(read_tensors(tmp_path / "tir.bin")[0])
    for x, y in zip(weights.to_tensors().values(), restored.to_tensors().values()):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXXXXXX" + b[8:],
    lambda b: b[:10],
    lambda b: b[:-4],
    lambda b: b[:12] + b"\xff" * 5 + b[17:],
])
def test_corrupt_files_rejected(mutate):
    blob = encode_record("x", np.ones(3), "f64")
    with pytest.raises(TensorFormatError):
        decode_records(mutate(blob))


def test_unknown_dtype():
    with pytest.raises(TensorFormatError):
        encode_record("x", np.ones(2), "f16")
