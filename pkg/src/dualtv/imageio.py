"""Grayscale PGM input/output, synthetic test images and additive noise.

Images are returned as cell fields of shape ``(width, height)``: the first
array index runs along x (left to right), the second along y (top to
bottom in file order).
"""

from __future__ import annotations

import os
import re

import numpy as np

from .grid import CellField, GridGeometry


class ImageIOError(OSError):
    """Unreadable, malformed or unsupported image file."""


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header(raw: bytes, path) -> tuple[bytes, int, int, int, int]:
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise ImageIOError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P2", b"P5"):
        raise ImageIOError(f"{path}: unsupported format {magic[:8]!r}, expected P2 or P5")
    try:
        width, height, maxval = (int(x) for x in fields[1:])
    except ValueError:
        raise ImageIOError(f"{path}: non-integer PGM header field") from None
    if width < 1 or height < 1:
        raise ImageIOError(f"{path}: bad image size {width}x{height}")
    if not 0 < maxval < 65536:
        raise ImageIOError(f"{path}: maxval {maxval} outside 1..65535")
    return magic, width, height, maxval, pos


def load_image(path: str | os.PathLike) -> tuple[CellField, int]:
    """Read a P2 or P5 file; returns ``(image in [0, 1], maxval)``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise ImageIOError(f"{path}: {err.strerror or err}") from err
    magic, width, height, maxval, pos = _header(raw, path)
    n = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        if pos >= len(raw) or not raw[pos : pos + 1].isspace():
            raise ImageIOError(f"{path}: missing separator after header")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = n * dtype.itemsize
        if len(raw) - pos < need:
            raise ImageIOError(f"{path}: truncated raster, {len(raw) - pos} of {need} bytes")
        pixels = np.frombuffer(raw, dtype=dtype, count=n, offset=pos).astype(float)
    else:
        body = re.sub(rb"#[^\n]*", b"", raw[pos:]).split()
        if len(body) < n:
            raise ImageIOError(f"{path}: truncated raster, {len(body)} of {n} samples")
        try:
            pixels = np.array([int(t) for t in body[:n]], dtype=float)
        except ValueError:
            raise ImageIOError(f"{path}: non-integer sample in raster") from None
    if pixels.max(initial=0) > maxval:
        raise ImageIOError(f"{path}: sample exceeds maxval {maxval}")
    values = pixels.reshape(height, width).T / maxval
    return CellField(GridGeometry(width, height), values), maxval


def save_image(u: CellField, path: str | os.PathLike, maxval: int = 255, binary: bool = True) -> None:
    """Clamp to [0, 1], quantize to ``maxval`` levels and write a PGM."""
    if not 0 < maxval < 65536:
        raise ImageIOError(f"maxval {maxval} outside 1..65535")
    q = np.rint(np.clip(u.values, 0.0, 1.0) * maxval).astype(np.int64).T
    height, width = q.shape
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n{maxval}\n".encode()
    if binary:
        payload = q.astype(">u2" if maxval > 255 else "u1").tobytes()
    else:
        payload = "\n".join(" ".join(map(str, row)) for row in q).encode() + b"\n"
    try:
        with open(path, "wb") as fh:
            fh.write(header + payload)
    except OSError as err:
        raise ImageIOError(f"{path}: {err.strerror or err}") from err


def add_gaussian_noise(u: CellField, variance: float, seed: int) -> CellField:
    """``u`` plus i.i.d. N(0, variance) noise; not clamped."""
    if variance < 0:
        raise ValueError(f"noise variance must be nonnegative, got {variance}")
    if variance == 0:
        return CellField(u.geometry, u.values.copy())
    noise = np.random.default_rng(seed).normal(0.0, np.sqrt(variance), u.geometry.shape)
    return CellField(u.geometry, u.values + noise)


SYNTHETIC_KINDS = ("blocks", "blocks-ramp")


def synthetic_image(kind: str, m: int) -> CellField:
    """Piecewise-constant test image in [0, 1], optionally with a linear ramp."""
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic image {kind!r}; choose from {', '.join(SYNTHETIC_KINDS)}")
    if m < 8:
        raise ValueError("synthetic images need at least 8x8 pixels")
    u = np.full((m, m), 0.2)
    u[m // 4 : 3 * m // 4, m // 4 : m // 2] = 0.8
    u[m // 2 : 7 * m // 8, m // 2 : 7 * m // 8] = 0.5
    if kind == "blocks-ramp":
        u[: m // 4, :] += np.linspace(0.0, 0.3, m)[None, :]
    return CellField(GridGeometry(m, m), u)
