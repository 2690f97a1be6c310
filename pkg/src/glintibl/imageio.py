"""Radiance RGBE (.hdr), PFM and 8-bit PNG image files.

Images are float arrays of shape (height, width, 3), row 0 at the top.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_RES_RE = re.compile(rb"^-Y (\d+) \+X (\d+)$")


class ImageFormatError(ValueError):
    pass


def rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    """Decode RGBE bytes (..., 4): component = mantissa * 2^(e - 136), zero when e = 0."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    e = rgbe[..., 3].astype(np.int32)
    scale = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return (rgbe[..., :3].astype(np.float64) * scale[..., None]).astype(np.float32)


def float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    v = rgb.max(axis=-1)
    mant, exp = np.frexp(v)
    scale = np.where(v > 1e-32, mant * 256.0 / np.where(v > 1e-32, v, 1.0), 0.0)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    out[..., :3] = np.clip(np.floor(rgb * scale[..., None]), 0, 255).astype(np.uint8)
    out[..., 3] = np.where(v > 1e-32, np.clip(exp + 128, 0, 255), 0).astype(np.uint8)
    return out


def _read_rle_scanline(buf: memoryview, pos: int, width: int) -> tuple[np.ndarray, int]:
    line = np.empty((4, width), dtype=np.uint8)
    for ch in range(4):
        x = 0
        while x < width:
            if pos >= len(buf):
                raise ImageFormatError("truncated RLE scanline")
            count = buf[pos]
            pos += 1
            if count > 128:
                count -= 128
                if x + count > width or pos >= len(buf):
                    raise ImageFormatError("bad RLE run")
                line[ch, x:x + count] = buf[pos]
                pos += 1
            else:
                if count == 0 or x + count > width or pos + count > len(buf):
                    raise ImageFormatError("bad RLE dump")
                line[ch, x:x + count] = np.frombuffer(buf[pos:pos + count], dtype=np.uint8)
                pos += count
            x += count
    return line.T, pos


def read_hdr(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not (data.startswith(b"#?RADIANCE") or data.startswith(b"#?RGBE")):
        raise ImageFormatError(f"{path}: missing Radiance header")
    pos = 0
    fmt = None
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise ImageFormatError(f"{path}: unterminated header")
        line = data[pos:end].strip()
        pos = end + 1
        if not line:
            break
        if line.startswith(b"FORMAT="):
            fmt = line[7:]
    if fmt not in (None, b"32-bit_rle_rgbe"):
        raise ImageFormatError(f"{path}: unsupported pixel format {fmt!r}")
    end = data.find(b"\n", pos)
    m = _RES_RE.match(data[pos:end].strip())
    if not m:
        raise ImageFormatError(f"{path}: unsupported resolution line")
    height, width = int(m.group(1)), int(m.group(2))
    pos = end + 1
    buf = memoryview(data)
    rows = []
    for _ in range(height):
        head = bytes(buf[pos:pos + 4])
        if (8 <= width < 32768 and len(head) == 4 and head[0] == 2 and head[1] == 2
                and (head[2] << 8 | head[3]) == width):
            row, pos = _read_rle_scanline(buf, pos + 4, width)
        else:
            nbytes = 4 * width
            if pos + nbytes > len(buf):
                raise ImageFormatError(f"{path}: truncated pixel data")
            row = np.frombuffer(buf[pos:pos + nbytes], dtype=np.uint8).reshape(width, 4)
            pos += nbytes
        rows.append(row)
    return rgbe_to_float(np.stack(rows))


def write_hdr(path, img: np.ndarray) -> None:
    """Write flat (uncompressed) RGBE scanlines."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    header = f"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n".encode()
    Path(path).write_bytes(header + float_to_rgbe(img).tobytes())


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data) and data[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tag, pos = _read_token(data, 0)
    if tag not in (b"PF", b"Pf"):
        raise ImageFormatError(f"{path}: not a PFM file")
    try:
        w_tok, pos = _read_token(data, pos)
        h_tok, pos = _read_token(data, pos)
        s_tok, pos = _read_token(data, pos)
        width, height, scale = int(w_tok), int(h_tok), float(s_tok)
    except ValueError as exc:
        raise ImageFormatError(f"{path}: malformed PFM header") from exc
    pos += 1  # single whitespace byte ends the header
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    if len(data) - pos < 4 * count:
        raise ImageFormatError(f"{path}: truncated PFM data")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).reshape(height, width, channels)
    arr = arr[::-1].astype(np.float32)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr


def write_pfm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    h, w = img.shape[:2]
    header = f"PF\n{w} {h}\n-1.0\n".encode()
    Path(path).write_bytes(header + np.ascontiguousarray(img[::-1], dtype="<f4").tobytes())


def read_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    suffix = path.suffix.lower()
    if suffix in (".hdr", ".rgbe", ".pic"):
        return read_hdr(path)
    if suffix == ".pfm":
        return read_pfm(path)
    raise ImageFormatError(f"{path}: unsupported format {suffix!r} (expected .hdr or .pfm)")


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def to_srgb8(img: np.ndarray, exposure_stops: float = 0.0) -> np.ndarray:
    lin = np.asarray(img, dtype=np.float64) * 2.0 ** exposure_stops
    return np.floor(linear_to_srgb(lin) * 255.0 + 0.5).astype(np.uint8)


def write_png(path, img: np.ndarray, exposure_stops: float = 0.0) -> None:
    from PIL import Image

    Image.fromarray(to_srgb8(img, exposure_stops)).save(path)
