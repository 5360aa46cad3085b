"""Adaptive high-resolution tiling.

An input image is resized to a grid of fixed-size square tiles whose aspect
ratio best matches the source, then cut into tiles; a global thumbnail is
appended when the grid has more than one tile. Grid candidates are every
(cols, rows) pair whose product lies inside the configured tile budget.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, InvalidRange
from .raster import Raster

TILE_SIZE = 448
TRAIN_MAX_TILES = 12
INFERENCE_MAX_TILES = 40

# A resampled mask value above this is treated as touching invalid pixels.
_MASK_EPS = 1e-9


@dataclass(frozen=True)
class TilerConfig:
    tile_size: int = TILE_SIZE
    min_tiles: int = 1
    max_tiles: int = TRAIN_MAX_TILES
    use_thumbnail: bool = True

    def __post_init__(self) -> None:
        if self.tile_size < 1:
            raise InvalidRange(f"tile_size must be >= 1, got {self.tile_size}")
        if not (1 <= self.min_tiles <= self.max_tiles):
            raise InvalidRange(
                f"need 1 <= min_tiles <= max_tiles, got ({self.min_tiles}, {self.max_tiles})"
            )


@dataclass(frozen=True)
class TilePlan:
    """Resolved tiling for one source image.

    ``crop_rects`` are (left, top, right, bottom) in resized-image pixels,
    row-major; the thumbnail (when included) is not a rect, it is the whole
    source resized to one tile and appended after the grid tiles.
    """

    source_width: int
    source_height: int
    cols: int
    rows: int
    tile_size: int
    resized_width: int
    resized_height: int
    crop_rects: tuple[tuple[int, int, int, int], ...]
    thumbnail_included: bool

    @property
    def n_tiles(self) -> int:
        """Total crops produced, thumbnail included."""
        return len(self.crop_rects) + (1 if self.thumbnail_included else 0)

    def to_dict(self) -> dict:
        return {
            "source_width": self.source_width,
            "source_height": self.source_height,
            "cols": self.cols,
            "rows": self.rows,
            "tile_size": self.tile_size,
            "resized_width": self.resized_width,
            "resized_height": self.resized_height,
            "crop_rects": [list(r) for r in self.crop_rects],
            "thumbnail_included": self.thumbnail_included,
            "n_tiles": self.n_tiles,
        }


def candidate_grids(min_tiles: int, max_tiles: int) -> list[tuple[int, int]]:
    """All (cols, rows) with min_tiles <= cols*rows <= max_tiles, sorted."""

    if not (1 <= min_tiles <= max_tiles):
        raise InvalidRange(f"need 1 <= min_tiles <= max_tiles, got ({min_tiles}, {max_tiles})")
    grids = [
        (cols, rows)
        for cols in range(1, max_tiles + 1)
        for rows in range(1, max_tiles + 1)
        if min_tiles <= cols * rows <= max_tiles
    ]
    return sorted(grids)


def select_grid(width: int, height: int, config: TilerConfig = TilerConfig()) -> tuple[int, int]:
    """Pick the candidate grid whose aspect ratio is closest to width/height.

    Ties on ratio distance keep the earlier candidate in (cols, rows) order
    unless the source area exceeds half the pixel area of the tied candidate,
    in which case the larger grid wins.
    """

    if width < 1 or height < 1:
        raise InvalidRange(f"image size must be positive, got {width}x{height}")
    target = width / height
    area = width * height
    best: tuple[int, int] | None = None
    best_dist = float("inf")
    for cols, rows in candidate_grids(config.min_tiles, config.max_tiles):
        dist = abs(cols / rows - target)
        if dist < best_dist:
            best, best_dist = (cols, rows), dist
        elif dist == best_dist and area > 0.5 * config.tile_size**2 * cols * rows:
            best = (cols, rows)
    assert best is not None
    return best


def plan_for_size(width: int, height: int, config: TilerConfig = TilerConfig()) -> TilePlan:
    """Build a :class:`TilePlan` from bare image dimensions."""

    cols, rows = select_grid(width, height, config)
    ts = config.tile_size
    rects = tuple(
        (c * ts, r * ts, (c + 1) * ts, (r + 1) * ts)
        for r in range(rows)
        for c in range(cols)
    )
    return TilePlan(
        source_width=width,
        source_height=height,
        cols=cols,
        rows=rows,
        tile_size=ts,
        resized_width=cols * ts,
        resized_height=rows * ts,
        crop_rects=rects,
        thumbnail_included=config.use_thumbnail and cols * rows > 1,
    )


def plan_tiles(raster: Raster, config: TilerConfig = TilerConfig()) -> TilePlan:
    return plan_for_size(raster.width, raster.height, config)


def _resize_raster(raster: Raster, out_h: int, out_w: int) -> Raster:
    hwb = np.moveaxis(raster.bands, 0, -1)
    resized = _kernels.bilinear_resize(hwb, out_h, out_w)
    # Convex interpolation of [0, 1] data can overshoot by an ulp; clamp.
    bands = np.clip(np.moveaxis(resized, -1, 0), 0.0, 1.0)
    mask_f = _kernels.bilinear_resize(
        raster.nodata_mask.astype(np.float64)[:, :, None], out_h, out_w
    )[:, :, 0]
    mask = mask_f > _MASK_EPS
    return replace(raster, bands=bands, nodata_mask=mask, gsd=raster.gsd * raster.width / out_w)


def crop(raster: Raster, plan: TilePlan) -> list[Raster]:
    """Cut the planned tiles (plus thumbnail) out of ``raster``.

    Any tile pixel whose bilinear footprint touched a nodata source pixel is
    masked invalid in the output.
    """

    if (raster.width, raster.height) != (plan.source_width, plan.source_height):
        raise DimensionMismatch(
            f"plan is for {plan.source_width}x{plan.source_height}, "
            f"raster is {raster.width}x{raster.height}"
        )
    resized = _resize_raster(raster, plan.resized_height, plan.resized_width)
    tiles = []
    for left, top, right, bottom in plan.crop_rects:
        tiles.append(
            replace(
                resized,
                bands=resized.bands[:, top:bottom, left:right],
                nodata_mask=resized.nodata_mask[top:bottom, left:right],
            )
        )
    if plan.thumbnail_included:
        tiles.append(_resize_raster(raster, plan.tile_size, plan.tile_size))
    return tiles
