"""Image loading, band collapsing, and normalization.

Produces the canonical single-band ``GrayImage`` consumed by the rest of the
pipeline. Supported inputs: PNG (8/16-bit, 1-4 channels), PGM/PPM, and the
``RAWF`` raw-float container for hyperspectral / LiDAR-derived stacks.
"""
from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptStreamError, FormatError, ImageReadError
from .filters import gaussian_blur

RAWF_MAGIC = b"RAWF"
_SUPPORTED_SUFFIXES = {".png", ".pgm", ".ppm", ".pnm", ".rawf"}


@dataclass(frozen=True)
class MultiBandImage:
    """Raw decoded image: samples shaped (bands, height, width), band-major."""

    samples: np.ndarray

    def __post_init__(self):
        a = self.samples
        if a.ndim != 3:
            raise ValueError(f"samples must be 3-D (bands, h, w), got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1 or a.shape[2] < 1:
            raise ValueError(f"empty image: shape {a.shape}")

    @property
    def bands(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]


@dataclass(frozen=True)
class GrayImage:
    """Single-band image; ``normalize_denoise`` rescales samples into [0, 1]."""

    samples: np.ndarray

    def __post_init__(self):
        a = self.samples
        if a.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"empty image: shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("samples must be finite")

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)"""
        return (self.samples.shape[1], self.samples.shape[0])


def load(path: str | Path) -> MultiBandImage:
    """Decode an image file losslessly to real-valued samples.

    Raises ImageReadError if the file cannot be read, FormatError for
    unsupported formats, CorruptStreamError for undecodable content.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in _SUPPORTED_SUFFIXES:
        raise FormatError(f"unsupported format {suffix!r} for {path}")
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageReadError(f"cannot read {path}: {exc}") from exc
    if suffix == ".rawf":
        return _decode_rawf(data, path)
    if suffix == ".png" and _png_bit_depth(data) == 16 and _png_color_type(data) != 0:
        # Pillow quantizes 16-bit multi-channel PNGs to 8 bits; decode ourselves.
        return _decode_png16(data, path)
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptStreamError(f"cannot decode {path}: {exc}") from exc
    arr = np.atleast_3d(arr).astype(np.float64)
    return MultiBandImage(samples=np.ascontiguousarray(arr.transpose(2, 0, 1)))


def collapse_bands(img: MultiBandImage, mode: str | int = "sum") -> GrayImage:
    """Reduce a multi-band image to one band: ``"sum"`` or a band index."""
    if mode == "sum":
        return GrayImage(samples=img.samples.sum(axis=0))
    band = int(mode)
    if not 0 <= band < img.bands:
        raise ValueError(f"band {band} out of range for {img.bands}-band image")
    return GrayImage(samples=np.array(img.samples[band], copy=True))


def normalize_denoise(img: GrayImage, denoise: bool = False) -> GrayImage:
    """Rescale samples so min -> 0 and max -> 1; constant images become all zeros.

    With ``denoise`` set, a 3x3 Gaussian (sigma 0.5) is applied before rescaling.
    """
    a = np.asarray(img.samples, dtype=np.float64)
    if denoise:
        a = gaussian_blur(a, sigma=0.5, truncate=2.0)
    lo = a.min()
    hi = a.max()
    if hi == lo:
        return GrayImage(samples=np.zeros_like(a))
    return GrayImage(samples=(a - lo) / (hi - lo))


def load_gray(path: str | Path, band: str | int = "sum", denoise: bool = False) -> GrayImage:
    """load + collapse_bands + normalize_denoise in one step."""
    return normalize_denoise(collapse_bands(load(path), band), denoise=denoise)


# --- RAWF: ASCII header "RAWF width height bands\n", then little-endian
# --- float32, row-major within each band, bands concatenated.


def _decode_rawf(data: bytes, path: Path) -> MultiBandImage:
    nl = data.find(b"\n")
    if nl < 0 or not data.startswith(RAWF_MAGIC):
        raise CorruptStreamError(f"{path}: missing RAWF header")
    fields = data[:nl].split()
    if len(fields) != 4:
        raise CorruptStreamError(f"{path}: malformed RAWF header {data[:nl]!r}")
    try:
        width, height, bands = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise CorruptStreamError(f"{path}: malformed RAWF header") from exc
    if width < 1 or height < 1 or bands < 1:
        raise CorruptStreamError(f"{path}: bad RAWF dimensions {width}x{height}x{bands}")
    body = data[nl + 1 :]
    expected = width * height * bands * 4
    if len(body) != expected:
        raise CorruptStreamError(
            f"{path}: RAWF body has {len(body)} bytes, expected {expected}"
        )
    flat = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return MultiBandImage(samples=flat.reshape(bands, height, width))


def write_rawf(path: str | Path, samples: np.ndarray) -> None:
    """Write a (bands, h, w) or (h, w) array in the RAWF container."""
    a = np.asarray(samples, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ValueError(f"expected 2-D or 3-D array, got shape {a.shape}")
    header = f"RAWF {a.shape[2]} {a.shape[1]} {a.shape[0]}\n".encode()
    Path(path).write_bytes(header + a.astype("<f4").tobytes())


# --- Minimal PNG decoding for 16-bit multi-channel files (Pillow is lossy there).


def _png_bit_depth(data: bytes) -> int:
    return data[24] if len(data) > 25 and data[:8] == b"\x89PNG\r\n\x1a\n" else 0


def _png_color_type(data: bytes) -> int:
    return data[25] if len(data) > 25 and data[:8] == b"\x89PNG\r\n\x1a\n" else 0


_PNG_CHANNELS = {0: 1, 2: 3, 4: 2, 6: 4}


def _decode_png16(data: bytes, path: Path) -> MultiBandImage:
    try:
        width, height, depth, color, _, _, interlace = struct.unpack(
            ">IIBBBBB", data[16:29]
        )
        if interlace != 0:
            raise FormatError(f"{path}: interlaced 16-bit PNG is not supported")
        channels = _PNG_CHANNELS[color]
        idat = b""
        pos = 8
        while pos + 8 <= len(data):
            (length,) = struct.unpack(">I", data[pos : pos + 4])
            tag = data[pos + 4 : pos + 8]
            if tag == b"IDAT":
                idat += data[pos + 8 : pos + 8 + length]
            pos += 12 + length
            if tag == b"IEND":
                break
        raw = zlib.decompress(idat)
    except FormatError:
        raise
    except Exception as exc:
        raise CorruptStreamError(f"{path}: cannot decode 16-bit PNG: {exc}") from exc
    bpp = channels * depth // 8
    stride = width * bpp
    if len(raw) != height * (stride + 1):
        raise CorruptStreamError(f"{path}: truncated PNG pixel data")
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    for row in range(height):
        ftype = raw[row * (stride + 1)]
        line = np.frombuffer(
            raw, dtype=np.uint8, count=stride, offset=row * (stride + 1) + 1
        ).copy()
        out[row] = _png_unfilter(line, prev, ftype, bpp, path)
        prev = out[row]
    pixels = out.reshape(height, width, bpp).view(">u2").astype(np.float64)
    return MultiBandImage(samples=np.ascontiguousarray(pixels.transpose(2, 0, 1)))


def _png_unfilter(line, prev, ftype, bpp, path):
    if ftype == 0:
        return line
    if ftype == 2:
        return line + prev
    # Sub, average, and Paeth need the running left neighbor.
    out = np.zeros_like(line)
    for i in range(len(line)):
        left = int(out[i - bpp]) if i >= bpp else 0
        up = int(prev[i])
        if ftype == 1:
            val = line[i] + left
        elif ftype == 3:
            val = line[i] + (left + up) // 2
        elif ftype == 4:
            upleft = int(prev[i - bpp]) if i >= bpp else 0
            p = left + up - upleft
            pa, pb, pc = abs(p - left), abs(p - up), abs(p - upleft)
            if pa <= pb and pa <= pc:
                pred = left
            elif pb <= pc:
                pred = up
            else:
                pred = upleft
            val = line[i] + pred
        else:
            raise CorruptStreamError(f"{path}: unknown PNG filter type {ftype}")
        out[i] = val & 0xFF
    return out


def save_png(path: str | Path, array: np.ndarray) -> None:
    """Write a [0, 1] grayscale or RGB float array as an 8-bit PNG."""
    a = np.clip(np.asarray(array, dtype=np.float64), 0.0, 1.0)
    a8 = np.round(a * 255.0).astype(np.uint8)
    Image.fromarray(a8).save(str(path), format="PNG")
