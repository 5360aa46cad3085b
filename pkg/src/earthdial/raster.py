"""Multi-band raster model plus the statistics used by the curation filters.

Pixel values are normalized to [0, 1] at ingestion so the filters stay
source-agnostic; per-source scale factors belong in the loaders. Rasters are
immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AllPixelsInvalid, IndexOutOfRange, ParseError
from .tags import ModalityTag

__all__ = [
    "Raster",
    "mean_luminance",
    "valid_coverage",
    "masked_fraction",
    "select_bands",
    "load_raster",
    "read_bgrid",
    "write_bgrid",
]

_BGRID_MAGIC = b"BGRD"
_BGRID_HEADER = struct.Struct("<4sIIIf")


@dataclass(frozen=True)
class Raster:
    """Image with ``bands`` shaped (band_count, height, width) in [0, 1].

    ``nodata_mask`` is (height, width) boolean, True marking invalid pixels.
    ``gsd`` is the ground-sample distance in meters per pixel.
    """

    bands: np.ndarray
    nodata_mask: np.ndarray
    gsd: float = 1.0
    modality: ModalityTag | None = field(default=None)

    def __post_init__(self) -> None:
        bands = np.ascontiguousarray(self.bands, dtype=np.float64)
        if bands.ndim != 3 or min(bands.shape) < 1:
            raise ValueError("bands must be a non-empty (band_count, h, w) array")
        mask = np.ascontiguousarray(self.nodata_mask, dtype=bool)
        if mask.shape != bands.shape[1:]:
            raise ValueError(
                f"mask shape {mask.shape} does not match image shape {bands.shape[1:]}"
            )
        if not self.gsd > 0:
            raise ValueError("gsd must be positive")
        valid = bands[:, ~mask]
        if valid.size and (
            not np.isfinite(valid).all() or valid.min() < 0.0 or valid.max() > 1.0
        ):
            raise ValueError("valid pixels must be finite and within [0, 1]")
        # Freeze copies so callers keep ownership of the arrays they passed in.
        if bands.flags.writeable:
            bands = bands.copy()
            bands.flags.writeable = False
        if mask.flags.writeable:
            mask = mask.copy()
            mask.flags.writeable = False
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "nodata_mask", mask)

    @property
    def band_count(self) -> int:
        return self.bands.shape[0]

    @property
    def height(self) -> int:
        return self.bands.shape[1]

    @property
    def width(self) -> int:
        return self.bands.shape[2]


def mean_luminance(raster: Raster) -> float:
    """Mean over valid pixels of the per-pixel mean of the first <=3 bands."""
    valid = ~raster.nodata_mask
    if not valid.any():
        raise AllPixelsInvalid("cannot compute luminance: all pixels masked")
    lum = raster.bands[: min(3, raster.band_count)].mean(axis=0)
    return float(lum[valid].mean())


def valid_coverage(raster: Raster) -> float:
    """Fraction of pixels not covered by the nodata mask."""
    return 1.0 - masked_fraction(raster)


def masked_fraction(raster: Raster) -> float:
    """Fraction of pixels covered by the nodata mask."""
    return float(raster.nodata_mask.mean())


def select_bands(raster: Raster, indices: Sequence[int]) -> Raster:
    """New raster with bands reordered/repeated per ``indices``."""
    if len(indices) == 0:
        raise IndexOutOfRange("band selection must not be empty")
    for idx in indices:
        if not 0 <= idx < raster.band_count:
            raise IndexOutOfRange(
                f"band index {idx} out of range for {raster.band_count} bands"
            )
    return Raster(
        bands=raster.bands[list(indices)].copy(),
        nodata_mask=raster.nodata_mask,
        gsd=raster.gsd,
        modality=raster.modality,
    )


# --- loaders ----------------------------------------------------------------

def load_raster(
    path: str | Path,
    gsd: float | None = None,
    modality: ModalityTag | None = None,
) -> Raster:
    """Load a raster from a .png (1/3/4 band) or .bgrid file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".bgrid":
        raster = read_bgrid(path)
        if gsd is not None or modality is not None:
            raster = Raster(
                bands=raster.bands,
                nodata_mask=raster.nodata_mask,
                gsd=gsd if gsd is not None else raster.gsd,
                modality=modality if modality is not None else raster.modality,
            )
        return raster
    if suffix == ".png":
        return _read_png(path, gsd=gsd or 1.0, modality=modality)
    raise ParseError(0, f"unsupported raster format {suffix!r}")


def _read_png(path: Path, gsd: float, modality: ModalityTag | None) -> Raster:
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16 or arr.dtype == np.int32:
        scale = 65535.0
    else:
        raise ParseError(0, f"unsupported PNG pixel type {arr.dtype}")
    data = arr.astype(np.float64) / scale
    if data.ndim == 2:
        bands = data[None, :, :]
    else:
        bands = np.moveaxis(data, -1, 0)
    if bands.shape[0] not in (1, 3, 4):
        raise ParseError(0, f"expected 1/3/4 PNG bands, got {bands.shape[0]}")
    mask = np.zeros(bands.shape[1:], dtype=bool)
    return Raster(bands=bands, nodata_mask=mask, gsd=gsd, modality=modality)


def read_bgrid(path: str | Path) -> Raster:
    """Read the flat binary sidecar format.

    Layout (little endian): magic ``BGRD``, u32 width, u32 height, u32 bands,
    f32 gsd, then band-major float32 data, then the nodata mask packed
    row-major 8 pixels per byte, most significant bit first.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _BGRID_HEADER.size:
        raise ParseError(0, "truncated bgrid header")
    magic, width, height, bands, gsd = _BGRID_HEADER.unpack_from(raw)
    if magic != _BGRID_MAGIC:
        raise ParseError(0, f"bad magic {magic!r}")
    n_px = width * height
    data_bytes = 4 * bands * n_px
    mask_bytes = (n_px + 7) // 8
    expected = _BGRID_HEADER.size + data_bytes + mask_bytes
    if len(raw) != expected:
        raise ParseError(0, f"expected {expected} bytes, file has {len(raw)}")
    data = np.frombuffer(
        raw, dtype="<f4", count=bands * n_px, offset=_BGRID_HEADER.size
    ).astype(np.float64)
    packed = np.frombuffer(raw, dtype=np.uint8, offset=_BGRID_HEADER.size + data_bytes)
    mask = np.unpackbits(packed, count=n_px).astype(bool).reshape(height, width)
    return Raster(
        bands=data.reshape(bands, height, width),
        nodata_mask=mask,
        gsd=float(gsd),
    )


def write_bgrid(raster: Raster, path: str | Path) -> None:
    """Write a raster in the .bgrid sidecar format (float32 data)."""
    header = _BGRID_HEADER.pack(
        _BGRID_MAGIC, raster.width, raster.height, raster.band_count, raster.gsd
    )
    data = raster.bands.astype("<f4").tobytes()
    mask = np.packbits(raster.nodata_mask.reshape(-1)).tobytes()
    Path(path).write_bytes(header + data + mask)
