import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mspac.autodiff import mspd


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5), elements=st.floats(-1e6, 1e6, width=32)))
def test_round_trip_is_bit_exact(arr):
    out = mspd.decode(mspd.encode(arr))
    assert out.dtype == np.float32 and out.shape == arr.shape
    assert out.tobytes() == arr.tobytes()


def test_header_layout():
    buf = mspd.encode(np.array([[1.0, 2.0, 3.0]], dtype=np.float32))
    assert buf[:4] == b"MSPD"
    version, rank = struct.unpack("<II", buf[4:12])
    assert (version, rank) == (1, 2)
    assert struct.unpack("<II", buf[12:20]) == (1, 3)
    assert struct.unpack("<3f", buf[20:]) == (1.0, 2.0, 3.0)


def test_rank_zero_and_empty_extents_rejected():
    with pytest.raises(mspd.MSPDError):
        mspd.encode(np.float32(1.0))
    with pytest.raises(mspd.MSPDError):
        mspd.encode(np.zeros((2, 0), dtype=np.float32))


def test_bad_magic_and_truncation():
    buf = mspd.encode(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(mspd.MSPDError):
        mspd.decode(b"XXXX" + buf[4:])
    with pytest.raises(mspd.MSPDError):
        mspd.decode(buf[:-1])


def test_file_round_trip_and_missing_path(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    mspd.save(tmp_path / "a" / "x.mspd", arr)
    np.testing.assert_array_equal(mspd.load(tmp_path / "a" / "x.mspd"), arr)
    with pytest.raises(mspd.MSPDError) as exc:
        mspd.load(tmp_path / "missing.mspd")
    assert "missing.mspd" in str(exc.value)
