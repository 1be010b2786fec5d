"""16-bit snapshot container and binary PGM/PPM files.

Snapshot metadata travels in ``#llsi-<key>=<value>`` header comments, e.g.
``#llsi-scale=``, ``#llsi-offset=`` and ``#llsi-pitch-um=``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAXVAL = 65535
COMMENT_PREFIX = "#llsi-"


class ImageFormatError(ValueError):
    pass


@dataclass
class Image16:
    pixels: np.ndarray                      # uint16, shape (height, width)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.dtype != np.uint16 or self.pixels.ndim != 2:
            raise ImageFormatError("Image16 pixels must be a 2-D uint16 array")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def scale(self) -> float:
        return float(self.meta.get("scale", 1.0))

    @property
    def offset(self) -> float:
        return float(self.meta.get("offset", 0.0))

    @property
    def pitch_um(self) -> float:
        return float(self.meta["pitch-um"])

    @property
    def origin_um(self) -> tuple[float, float]:
        return float(self.meta.get("x0-um", 0.0)), float(self.meta.get("y0-um", 0.0))

    def dequantized(self) -> np.ndarray:
        return self.offset + self.scale * self.pixels.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, Image16):
            return NotImplemented
        return self.meta == other.meta and np.array_equal(self.pixels, other.pixels)


def quantize(values: np.ndarray, margin: float = 0.0) -> tuple[np.ndarray, float, float]:
    """Affinely map ``[min - margin, max + margin]`` onto ``[0, 65535]``.

    Returns ``(codes, scale, offset)`` with ``value ~= offset + scale * code``.
    A constant input maps to code 0 with ``offset`` equal to the constant.
    """
    values = np.asarray(values, dtype=np.float64)
    lo = float(values.min()) - margin
    hi = float(values.max()) + margin
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        return np.zeros(values.shape, np.uint16), 1.0, float(values.mean())
    scale = 2.0 ** math.ceil(math.log2((hi - lo) / (MAXVAL - 1)))
    offset = math.floor(lo / scale) * scale
    return _sum_preserving_round((values - offset) / scale), scale, offset


def _sum_preserving_round(x: np.ndarray) -> np.ndarray:
    """Round to integers in [0, 65535] so the total matches ``round(x.sum())``.

    Largest-remainder rounding: floor everything, then bump the pixels with
    the largest fractional parts.  Per-pixel error stays below one code and
    the integrated value is preserved to half a code.
    """
    x = np.clip(x, 0.0, MAXVAL)
    flat = x.ravel()
    base = np.floor(flat)
    frac = flat - base
    need = int(round(float(flat.sum()) - float(base.sum())))
    if need > 0:
        order = np.argsort(-frac, kind="stable")[:need]
        base[order] += 1.0
    return np.clip(base, 0, MAXVAL).astype(np.uint16).reshape(x.shape)


def from_values(values: np.ndarray, meta: dict | None = None, margin: float = 0.0) -> Image16:
    codes, scale, offset = quantize(values, margin)
    m = dict(meta or {})
    m["scale"] = scale
    m["offset"] = offset
    return Image16(codes, m)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def encode_pgm(img: Image16) -> bytes:
    head = ["P5"]
    for key, value in img.meta.items():
        text = _format_value(value)
        if "\n" in text or "\n" in key:
            raise ImageFormatError(f"metadata {key!r} must be single-line")
        head.append(f"{COMMENT_PREFIX}{key}={text}")
    head.append(f"{img.width} {img.height}")
    head.append(str(MAXVAL))
    return ("\n".join(head) + "\n").encode("utf-8") + img.pixels.astype(">u2").tobytes()


def _read_header(data: bytes, n_tokens: int):
    """Return ``(tokens, comments, data_offset)`` for a netpbm header."""
    tokens, comments = [], []
    i = 0
    while len(tokens) < n_tokens:
        if i >= len(data):
            raise ImageFormatError("truncated header")
        ch = data[i:i + 1]
        if ch.isspace():
            i += 1
        elif ch == b"#":
            end = data.find(b"\n", i)
            if end < 0:
                raise ImageFormatError("unterminated header comment")
            comments.append(data[i:end].decode("utf-8"))
            i = end + 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j].decode("ascii"))
            i = j
    if i >= len(data) or not data[i:i + 1].isspace():
        raise ImageFormatError("missing whitespace after header")
    return tokens, comments, i + 1


def decode_pgm(data: bytes) -> Image16:
    tokens, comments, off = _read_header(data, 4)
    magic, w, h, maxval = tokens
    if magic != "P5":
        raise ImageFormatError(f"expected P5, got {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != MAXVAL:
        raise ImageFormatError(f"expected maxval {MAXVAL}, got {maxval}")
    body = data[off:]
    if len(body) != 2 * w * h:
        raise ImageFormatError(f"expected {2 * w * h} data bytes, got {len(body)}")
    pixels = np.frombuffer(body, dtype=">u2").reshape(h, w).astype(np.uint16)
    meta = {}
    for c in comments:
        if c.startswith(COMMENT_PREFIX):
            key, _, value = c[len(COMMENT_PREFIX):].partition("=")
            meta[key] = _parse_value(value)
    return Image16(pixels, meta)


def write_pgm(img: Image16, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


def read_pgm(path) -> Image16:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def encode_ppm(rgb: np.ndarray) -> bytes:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ImageFormatError("PPM data must be uint8 with shape (h, w, 3)")
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    tokens, _, off = _read_header(data, 4)
    magic, w, h, maxval = tokens
    if magic != "P6" or int(maxval) != 255:
        raise ImageFormatError("expected 8-bit P6")
    w, h = int(w), int(h)
    return np.frombuffer(data[off:off + 3 * w * h], np.uint8).reshape(h, w, 3).copy()


def write_ppm(rgb: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(rgb))
