"""Grayscale image container with PGM (P5) and PNG file support."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    """Image file is malformed or not grayscale."""


@dataclass(frozen=True)
class GrayImage:
    """Float grayscale image, values in [0, 1], row 0 at the top."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float32)
        if p.ndim != 2 or p.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "GrayImage":
        return cls(np.asarray(arr, dtype=np.float32) / 255.0)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix.lower() == ".pgm":
            data = self.to_uint8()
            header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
            path.write_bytes(header + data.tobytes())
        else:
            Image.fromarray(self.to_uint8(), mode="L").save(path)

    @classmethod
    def load(cls, path: str | Path) -> "GrayImage":
        path = Path(path)
        if path.suffix.lower() == ".pgm":
            return cls.from_uint8(_read_pgm(path))
        with Image.open(path) as im:
            return cls.from_uint8(np.asarray(im.convert("L")))


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    # header = magic, width, height, maxval; '#' comments allowed between tokens
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4 and i < len(raw):
        if raw[i:i + 1].isspace():
            i += 1
        elif raw[i:i + 1] == b"#":
            i = raw.find(b"\n", i)
            if i < 0:
                break
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j:j + 1].isspace():
                j += 1
            tokens.append(raw[i:j])
            i = j
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ImageFormatError(f"{path}: not a binary PGM file")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ImageFormatError(f"{path}: bad PGM header") from exc
    if maxval != 255 or width <= 0 or height <= 0:
        raise ImageFormatError(f"{path}: unsupported PGM header")
    data = raw[i + 1:i + 1 + width * height]
    if len(data) != width * height:
        raise ImageFormatError(f"{path}: truncated PGM data")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width)
