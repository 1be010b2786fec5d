import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from llsiscope.pnm import (
    MAXVAL,
    Image16,
    ImageFormatError,
    decode_pgm,
    decode_ppm,
    encode_pgm,
    encode_ppm,
    from_values,
    quantize,
    read_pgm,
    write_pgm,
)


def test_pgm_round_trip_with_metadata(tmp_path):
    px = np.arange(12, dtype=np.uint16).reshape(3, 4) * 5000
    img = Image16(px, {"scale": 0.125, "offset": -3.5, "pitch-um": 0.25, "kind": "llsi", "seed": 7})
    path = tmp_path / "a.pgm"
    write_pgm(img, path)
    back = read_pgm(path)
    assert back == img
    assert back.meta["seed"] == 7 and back.meta["kind"] == "llsi"


def test_pgm_header_is_standard():
    data = encode_pgm(Image16(np.zeros((2, 3), np.uint16), {"scale": 1.0}))
    assert data.startswith(b"P5\n#llsi-scale=1.0\n3 2\n65535\n")
    assert len(data.split(b"65535\n", 1)[1]) == 12


def test_big_endian_samples():
    data = encode_pgm(Image16(np.array([[0x0102]], np.uint16)))
    assert data.endswith(b"\x01\x02")


@pytest.mark.parametrize("data", [
    b"P2\n1 1\n65535\n\x00\x00",
    b"P5\n1 1\n255\n\x00",
    b"P5\n2 2\n65535\n\x00\x00",
    b"P5\n1 1",
])
def test_bad_pgm_rejected(data):
    with pytest.raises(ImageFormatError):
        decode_pgm(data)


def test_ppm_round_trip():
    rgb = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    np.testing.assert_array_equal(decode_ppm(encode_ppm(rgb)), rgb)


def test_constant_input_quantizes_exactly():
    codes, scale, offset = quantize(np.full((4, 4), 0.37))
    assert not codes.any() and offset == 0.37


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, (8, 9), elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_quantization_error_below_one_code(values):
    img = from_values(values)
    err = np.abs(img.dequantized() - values)
    assert err.max() <= img.scale * (1 + 1e-9) or np.ptp(values) == 0
    assert img.pixels.max() <= MAXVAL


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, (16, 16), elements=st.floats(0, 10, allow_nan=False)))
def test_quantization_preserves_sum(values):
    img = from_values(values)
    assert abs(img.dequantized().sum() - values.sum()) <= 0.5 * img.scale + 1e-9 * max(1.0, abs(values.sum()))


def test_scale_is_power_of_two_and_offset_on_grid():
    _, scale, offset = quantize(np.linspace(-2.3, 7.9, 1000))
    assert np.log2(scale) == int(np.log2(scale))
    assert offset / scale == int(offset / scale)


def test_multiline_metadata_rejected():
    with pytest.raises(ImageFormatError):
        encode_pgm(Image16(np.zeros((1, 1), np.uint16), {"k": "a\nb"}))


def test_image16_requires_uint16():
    with pytest.raises(ImageFormatError):
        Image16(np.zeros((2, 2), np.int32))
