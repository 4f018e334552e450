"""Binary PGM (P5, maxval 255) reading and writing.

Values are clamped to [0, 1] and quantized only here; the numeric pipeline
stays unclamped.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError


def write_pgm(path, image01: np.ndarray) -> None:
    img = np.asarray(image01, dtype=float)
    if img.ndim != 2:
        raise ParameterError(f"expected a 2-D image, got shape {img.shape}")
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 PGM into a float array in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ParameterError(f"{path}: not a binary PGM (P5) file")
    # header = magic, width, height, maxval; '#' comments allowed between tokens
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval != 255:
        raise ParameterError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(data[pos : pos + w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise ParameterError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w).astype(float) / 255.0
