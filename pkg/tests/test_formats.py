import struct

import numpy as np
import pytest

from even import formats
from even.formats import FormatError


def test_depth_file_layout(tmp_path):
    depth = np.arange(12, dtype=np.float32).reshape(3, 4) + 0.5
    formats.write_depth_file(tmp_path / "d.dpt", depth)
    raw = (tmp_path / "d.dpt").read_bytes()
    assert raw[:4] == b"DPT1"
    assert struct.unpack_from("<HH", raw, 4) == (4, 3)
    assert len(raw) == 12 + 4 * 12
    np.testing.assert_array_equal(formats.read_depth_file(tmp_path / "d.dpt"), depth)


def test_event_file_layout(tmp_path):
    formats.write_event_file(tmp_path / "e.evs", [1, 2], [3, 4], [0.5, 0.75], [1, -1], (10, 8))
    raw = (tmp_path / "e.evs").read_bytes()
    assert raw[:4] == b"EVS1" and struct.unpack_from("<HH", raw, 4) == (10, 8)
    assert struct.unpack_from("<HHdb", raw, 8) == (1, 3, 0.5, 1)
    assert struct.unpack_from("<HHdb", raw, 21) == (2, 4, 0.75, -1)
    records, res = formats.read_event_file(tmp_path / "e.evs")
    assert res == (10, 8) and list(records["p"]) == [1, -1]


def test_params_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"w": rng.normal(size=(2, 3, 5, 5)).astype(np.float32), "b": np.zeros(3, np.float32),
               "scalar": np.float32(2.5), "ünï": np.ones((1,), np.float32)}
    formats.write_params(tmp_path / "p.evnp", tensors)
    back = formats.read_params(tmp_path / "p.evnp")
    assert list(back) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])
    raw = (tmp_path / "p.evnp").read_bytes()
    assert raw[:5] == b"EVNP\x01"


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(1).integers(0, 256, (5, 7, 3)) / 255.0
    formats.write_png(tmp_path / "i.png", img)
    np.testing.assert_allclose(formats.read_png(tmp_path / "i.png"), img, atol=1e-6)


@pytest.mark.parametrize("reader, payload", [
    (formats.read_depth_file, b"NOPE" + bytes(8)),
    (formats.read_depth_file, b"DPT1" + struct.pack("<HHI", 2, 2, 0) + bytes(4)),
    (formats.read_event_file, b"EVS1" + struct.pack("<HH", 2, 2) + bytes(5)),
    (formats.read_params, b"EVNP\x02"),
    (formats.read_params, b"EVNP\x01" + struct.pack("<H", 1) + b"w" + struct.pack("<BI", 1, 10) + bytes(8)),
])
def test_corrupt_files_rejected(tmp_path, reader, payload):
    path = tmp_path / "bad"
    path.write_bytes(payload)
    with pytest.raises(FormatError):
        reader(path)
