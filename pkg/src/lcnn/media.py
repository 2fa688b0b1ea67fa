"""Frame ingestion: binary PPM/PGM decoding, bilinear resize, normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, UsageError


@dataclass(frozen=True)
class ImageRGB:
    """8-bit interleaved RGB image; ``pixels`` has shape ``(height, width, 3)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise UsageError(f"expected (H, W, 3) pixels, got {px.shape}")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()


def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last one.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("unexpected end of header", pos)
        tokens.append(data[start:pos])
    if pos >= n or not data[pos:pos + 1].isspace():
        raise FormatError("header must end with a single whitespace byte", pos)
    return tokens, pos


def decode_pnm(data: bytes) -> ImageRGB:
    """Decode binary P6 (RGB) or P5 (gray, replicated to RGB), maxval 255 only."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}; only binary P5/P6 are read", 0)
    tokens, end = _header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"non-numeric header field in {tokens[1:]!r}", end) from None
    if width < 1 or height < 1:
        raise FormatError(f"invalid image size {width}x{height}", end)
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 8-bit (255) images are read", end)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = data[end + 1:end + 1 + need]
    if len(payload) < need:
        raise FormatError(f"short payload: expected {need} bytes, got {len(payload)}", end + 1)
    px = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    if channels == 1:
        px = np.repeat(px, 3, axis=2)
    return ImageRGB(px)


def load_image(path) -> ImageRGB:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read())


def encode_ppm(img: ImageRGB) -> bytes:
    return b"P6\n%d %d\n255\n" % (img.width, img.height) + img.to_bytes()


def save_ppm(img: ImageRGB, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img))


def _sample_axis(n_in: int, n_out: int):
    """Half-pixel-center source coordinates, edge-clamped."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: ImageRGB, out_w: int, out_h: int) -> ImageRGB:
    """Bilinear resize, channels independent, rounded half-up to uint8."""
    if out_w < 1 or out_h < 1:
        raise UsageError(f"output size must be positive, got {out_w}x{out_h}")
    if (out_w, out_h) == (img.width, img.height):
        return img
    px = img.pixels.astype(np.float64)
    y0, y1, fy = _sample_axis(img.height, out_h)
    x0, x1, fx = _sample_axis(img.width, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = px[y0][:, x0] * (1 - fx) + px[y0][:, x1] * fx
    bottom = px[y1][:, x0] * (1 - fx) + px[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return ImageRGB(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def normalize_to_tensor(img: ImageRGB) -> np.ndarray:
    """``(3, H, W)`` float32 tensor in RGB order with ``pixel / 127.5 - 1``."""
    chw = img.pixels.transpose(2, 0, 1).astype(np.float64)
    return np.ascontiguousarray(chw / 127.5 - 1.0, dtype=np.float32)


def preprocess(img: ImageRGB, size: int) -> np.ndarray:
    return normalize_to_tensor(resize_bilinear(img, size, size))
