import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specden.imageio import ImageFormatError, decode, encode, list_images, load_image, save_image


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.booleans(), st.integers(0, 2 ** 31))
def test_round_trip_quantization_bound(h, w, rgb, seed):
    g = np.random.default_rng(seed)
    x = g.uniform(-0.2, 1.2, (3, h, w) if rgb else (h, w))
    back = decode(encode(x))
    assert back.shape == x.shape
    assert np.max(np.abs(back - np.clip(x, 0, 1))) <= 1 / 510 + 1e-15


def test_exact_levels_survive(tmp_path):
    x = np.arange(256, dtype=float).reshape(16, 16) / 255
    save_image(tmp_path / "a.pgm", x)
    np.testing.assert_array_equal(load_image(tmp_path / "a.pgm"), x)


def test_header_layout_and_channel_order():
    x = np.zeros((3, 1, 2))
    x[0, 0, 0] = 1.0  # red of the first pixel
    x[2, 0, 1] = 1.0  # blue of the second
    data = encode(x)
    assert data.startswith(b"P6\n2 1\n255\n")
    assert data[-6:] == bytes([255, 0, 0, 0, 0, 255])


def test_header_comments_and_whitespace():
    data = b"P5 # a comment\n# another\n 3\t2\n255\n" + bytes(range(6))
    np.testing.assert_array_equal(decode(data) * 255, np.arange(6).reshape(2, 3))


@pytest.mark.parametrize("data", [
    b"P2\n2 2\n255\n0 0 0 0",
    b"P5\n2 2\n65535\n" + bytes(8),
    b"P5\n2 2\n255\n" + bytes(3),
    b"P5\n2",
    b"P5\nx 2\n255\n" + bytes(4),
])
def test_malformed(data):
    with pytest.raises(ImageFormatError):
        decode(data)


def test_encode_rejects_bad_input():
    with pytest.raises(ImageFormatError):
        encode(np.zeros((2, 4, 4)))
    with pytest.raises(ImageFormatError):
        encode(np.full((4, 4), np.nan))


def test_list_images(tmp_path):
    for name in ("b.pgm", "a.ppm", "c.txt"):
        (tmp_path / name).write_bytes(b"")
    assert [p.name for p in list_images(tmp_path)] == ["a.ppm", "b.pgm"]
