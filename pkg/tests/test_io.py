import numpy as np
import pytest

from flowsr.dataset import read_frame, write_frame
from flowsr.flow_io import flow_to_color, make_colorwheel, read_flo, write_flo


def test_flo_round_trip(tmp_path, rng):
    flow = rng.standard_normal((7, 9, 2)).astype(np.float32)
    write_flo(tmp_path / "a.flo", flow)
    back = read_flo(tmp_path / "a.flo")
    assert back.shape == (7, 9, 2)
    np.testing.assert_array_equal(back, flow)


def test_flo_header_layout(tmp_path):
    write_flo(tmp_path / "a.flo", np.zeros((3, 5, 2)))
    raw = (tmp_path / "a.flo").read_bytes()
    assert raw[:4] == b"PIEH"
    assert np.frombuffer(raw[4:12], "<i4").tolist() == [5, 3]
    assert len(raw) == 12 + 3 * 5 * 2 * 4


def test_flo_rejects_bad_magic(tmp_path):
    (tmp_path / "bad.flo").write_bytes(b"\x00" * 32)
    with pytest.raises(ValueError):
        read_flo(tmp_path / "bad.flo")


def test_flo_rejects_truncated(tmp_path):
    write_flo(tmp_path / "a.flo", np.zeros((4, 4, 2)))
    data = (tmp_path / "a.flo").read_bytes()
    (tmp_path / "b.flo").write_bytes(data[:-8])
    with pytest.raises(ValueError):
        read_flo(tmp_path / "b.flo")


def test_write_flo_shape_check(tmp_path):
    with pytest.raises(ValueError):
        write_flo(tmp_path / "a.flo", np.zeros((4, 4, 3)))


def test_colorwheel_size():
    assert make_colorwheel().shape == (55, 3)


def test_zero_flow_is_uniform_white():
    img = flow_to_color(np.zeros((6, 8, 2)))
    assert img.dtype == np.uint8 and img.shape == (6, 8, 3)
    assert np.all(img == 255)


def test_directions_have_distinct_hues():
    flow = np.zeros((1, 4, 2))
    flow[0, :, 0] = [1, -1, 0, 0]
    flow[0, :, 1] = [0, 0, 1, -1]
    img = flow_to_color(flow).reshape(4, 3)
    assert len({tuple(c) for c in img}) == 4


def test_magnitude_controls_saturation():
    flow = np.zeros((1, 2, 2))
    flow[0, :, 0] = [0.25, 1.0]
    img = flow_to_color(flow, max_radius=1.0).astype(int)
    assert img[0, 0].min() > img[0, 1].min()


def test_png_round_trip_16bit(tmp_path, rng):
    frame = rng.uniform(size=(5, 6, 3))
    write_frame(tmp_path / "f.png", frame)
    back = read_frame(tmp_path / "f.png")
    assert np.abs(back - frame).max() <= 0.5 / 65535 + 1e-12


def test_png_channel_order(tmp_path):
    frame = np.zeros((2, 2, 3))
    frame[..., 0] = 1.0
    write_frame(tmp_path / "r.png", frame, bit_depth=8)
    back = read_frame(tmp_path / "r.png")
    assert back[0, 0].tolist() == [1.0, 0.0, 0.0]
