"""Spectral grouping, token reduction, and temporal stacking arithmetic.

Bands beyond RGB are folded into consecutive 3-band groups; each group is
encoded to a token grid, reduced, and either concatenated or averaged across
groups. Timesteps multiply the per-timestep token count, capped by
``max_timesteps``. The budget formulas here are what the CLI reports and what
the sequence assemblers actually produce, and tests hold them equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    InvalidRange,
    InvalidTarget,
    NonDivisible,
    ShapeMismatch,
    TooManyTimesteps,
)
from .raster import Raster, select_bands
from .tiler import TilePlan, TilerConfig, crop, plan_tiles

REDUCE_STRATEGIES = ("bilinear", "average")
AGGREGATES = ("concat", "mean")

# (tile_index, group_index, time_index) for one token.
Provenance = tuple[int, int, int]


@dataclass(frozen=True)
class FusionConfig:
    reduce_strategy: str = "bilinear"
    reduced_rows: int = 4
    reduced_cols: int = 4
    aggregate: str = "concat"
    tokens_per_tile: int = 256
    max_timesteps: int = 4

    def __post_init__(self) -> None:
        if self.reduce_strategy not in REDUCE_STRATEGIES:
            raise InvalidRange(f"reduce_strategy must be one of {REDUCE_STRATEGIES}")
        if self.aggregate not in AGGREGATES:
            raise InvalidRange(f"aggregate must be one of {AGGREGATES}")
        if self.reduced_rows < 1 or self.reduced_cols < 1:
            raise InvalidRange("reduced dims must be >= 1")
        if self.tokens_per_tile < 1:
            raise InvalidRange("tokens_per_tile must be >= 1")
        if self.max_timesteps < 1:
            raise InvalidRange("max_timesteps must be >= 1")

    @property
    def grid_size(self) -> int:
        """Square token-grid side implied by tokens_per_tile."""
        g = math.isqrt(self.tokens_per_tile)
        if g * g != self.tokens_per_tile:
            raise InvalidRange(f"tokens_per_tile={self.tokens_per_tile} is not a square")
        return g


@dataclass(frozen=True)
class TokenGrid:
    """Spatial token grid, values shaped (rows, cols, dim)."""

    values: np.ndarray
    tile_index: int = 0

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ShapeMismatch(f"token grid must be (rows, cols, dim), got {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("token values must be finite")
        if self.tile_index < 0:
            raise InvalidRange("tile_index must be >= 0")
        if values.flags.writeable:
            values = values.copy()
            values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class TokenSequence:
    """Flat token run: values (n, dim) plus per-token provenance."""

    values: np.ndarray
    layout: tuple[Provenance, ...]

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatch(f"sequence values must be (n, dim), got {values.shape}")
        if values.shape[0] != len(self.layout):
            raise ShapeMismatch(
                f"{values.shape[0]} tokens but {len(self.layout)} layout entries"
            )
        for entry in self.layout:
            if len(entry) != 3 or min(entry) < 0:
                raise InvalidRange(f"bad provenance entry {entry!r}")
        if values.flags.writeable:
            values = values.copy()
            values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(tuple(e) for e in self.layout))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def group_channels(band_count: int) -> list[list[int]]:
    """Split band indices into consecutive triples, padding the last group.

    The final incomplete group repeats its own last band index, so 4 bands
    give [[0, 1, 2], [3, 3, 3]] and a single band gives [[0, 0, 0]].
    """

    if band_count < 1:
        raise InvalidRange(f"band_count must be >= 1, got {band_count}")
    groups = []
    for start in range(0, band_count, 3):
        group = list(range(start, min(start + 3, band_count)))
        while len(group) < 3:
            group.append(group[-1])
        groups.append(group)
    return groups


def bilinear_reduce(grid: TokenGrid, out_rows: int, out_cols: int) -> TokenGrid:
    """Downsample a token grid bilinearly. Identity at equal dims."""

    if not (1 <= out_rows <= grid.rows and 1 <= out_cols <= grid.cols):
        raise InvalidTarget(
            f"reduce target {(out_rows, out_cols)} outside 1..{(grid.rows, grid.cols)}"
        )
    values = _kernels.bilinear_resize(grid.values, out_rows, out_cols)
    return TokenGrid(values=values, tile_index=grid.tile_index)


def average_reduce(grid: TokenGrid, out_rows: int, out_cols: int) -> TokenGrid:
    """Downsample by non-overlapping block means; dims must divide evenly."""

    if not (1 <= out_rows <= grid.rows and 1 <= out_cols <= grid.cols):
        raise InvalidTarget(
            f"reduce target {(out_rows, out_cols)} outside 1..{(grid.rows, grid.cols)}"
        )
    if grid.rows % out_rows or grid.cols % out_cols:
        raise NonDivisible(
            f"grid {(grid.rows, grid.cols)} not divisible by target {(out_rows, out_cols)}"
        )
    br = grid.rows // out_rows
    bc = grid.cols // out_cols
    blocks = grid.values.reshape(out_rows, br, out_cols, bc, grid.dim)
    # Mean anchored at the block corner so constant blocks reduce exactly.
    corner = blocks[:, :1, :, :1, :]
    values = corner[:, 0, :, 0, :] + (blocks - corner).mean(axis=(1, 3))
    return TokenGrid(values=values, tile_index=grid.tile_index)


def _reduce(grid: TokenGrid, config: FusionConfig) -> TokenGrid:
    if config.reduce_strategy == "bilinear":
        return bilinear_reduce(grid, config.reduced_rows, config.reduced_cols)
    return average_reduce(grid, config.reduced_rows, config.reduced_cols)


def grid_to_sequence(grid: TokenGrid, group_index: int = 0, time_index: int = 0) -> TokenSequence:
    """Flatten a grid row-major into a sequence with uniform provenance."""

    values = grid.values.reshape(grid.rows * grid.cols, grid.dim)
    layout = tuple((grid.tile_index, group_index, time_index) for _ in range(len(values)))
    return TokenSequence(values=values, layout=layout)


def concat_sequences(seqs: list[TokenSequence]) -> TokenSequence:
    if not seqs:
        raise ShapeMismatch("cannot concatenate zero sequences")
    dims = {s.dim for s in seqs}
    if len(dims) != 1:
        raise ShapeMismatch(f"mixed token dims {sorted(dims)}")
    values = np.concatenate([s.values for s in seqs], axis=0)
    layout = tuple(entry for s in seqs for entry in s.layout)
    return TokenSequence(values=values, layout=layout)


def fuse_spectral(grids: list[TokenGrid], config: FusionConfig = FusionConfig()) -> TokenSequence:
    """Reduce each per-group grid and aggregate across groups.

    Group index in the output provenance is the grid's position in ``grids``
    (0 for the "mean" aggregate, which collapses groups).
    """

    if not grids:
        raise ShapeMismatch("fuse_spectral needs at least one group grid")
    shape = grids[0].values.shape
    for g in grids[1:]:
        if g.values.shape != shape:
            raise ShapeMismatch(
                f"group grids disagree in shape: {g.values.shape} vs {shape}"
            )
    reduced = [_reduce(g, config) for g in grids]
    if config.aggregate == "mean":
        mean_vals = np.mean([g.values for g in reduced], axis=0)
        merged = TokenGrid(values=mean_vals, tile_index=grids[0].tile_index)
        return grid_to_sequence(merged, group_index=0)
    return concat_sequences(
        [grid_to_sequence(g, group_index=i) for i, g in enumerate(reduced)]
    )


def stack_temporal(
    seqs: list[TokenSequence], config: FusionConfig = FusionConfig()
) -> TokenSequence:
    """Concatenate single-timestep sequences; token time becomes list position."""

    if not seqs:
        raise ShapeMismatch("stack_temporal needs at least one timestep")
    if len(seqs) > config.max_timesteps:
        raise TooManyTimesteps(
            f"{len(seqs)} timesteps exceed max_timesteps={config.max_timesteps}"
        )
    dims = {s.dim for s in seqs}
    if len(dims) != 1:
        raise ShapeMismatch(f"mixed token dims {sorted(dims)}")
    values = np.concatenate([s.values for s in seqs], axis=0)
    layout = tuple(
        (tile, group, t) for t, s in enumerate(seqs) for tile, group, _ in s.layout
    )
    return TokenSequence(values=values, layout=layout)


def select_time(seq: TokenSequence, time_index: int) -> TokenSequence:
    """Extract one timestep's tokens as they were before stacking."""

    keep = [i for i, (_, _, t) in enumerate(seq.layout) if t == time_index]
    if not keep:
        raise InvalidRange(f"no tokens at time_index {time_index}")
    values = seq.values[keep]
    layout = tuple((seq.layout[i][0], seq.layout[i][1], 0) for i in keep)
    return TokenSequence(values=values, layout=layout)


def token_budget(
    plan: TilePlan,
    band_count: int,
    timesteps: int = 1,
    config: FusionConfig = FusionConfig(),
) -> int:
    """Sequence length the assemblers will produce for this input.

    RGB-like inputs (<= 3 bands) spend tokens_per_tile on every crop in the
    plan, thumbnail included. Deeper stacks skip tiling and spend the reduced
    grid per channel group ("concat") or once in total ("mean"). Timesteps
    multiply either way.
    """

    if band_count < 1:
        raise InvalidRange(f"band_count must be >= 1, got {band_count}")
    if timesteps < 1:
        raise InvalidRange(f"timesteps must be >= 1, got {timesteps}")
    if timesteps > config.max_timesteps:
        raise TooManyTimesteps(
            f"{timesteps} timesteps exceed max_timesteps={config.max_timesteps}"
        )
    if band_count <= 3:
        per_step = plan.n_tiles * config.tokens_per_tile
    else:
        n_groups = len(group_channels(band_count)) if config.aggregate == "concat" else 1
        per_step = n_groups * config.reduced_rows * config.reduced_cols
    return per_step * timesteps


class PatchMeanEncoder:
    """Reference tile encoder: tokens are per-patch channel means.

    Deterministic stand-in for a ViT; a tile_size x tile_size tile becomes a
    grid_size x grid_size token grid whose dim equals the band count.
    """

    def __init__(self, tile_size: int = 448, grid_size: int = 16):
        if tile_size < 1 or grid_size < 1 or tile_size % grid_size:
            raise InvalidRange(
                f"grid_size {grid_size} must divide tile_size {tile_size}"
            )
        self.tile_size = tile_size
        self.grid_size = grid_size

    def encode(self, raster: Raster, tile_index: int = 0) -> TokenGrid:
        if raster.height != self.tile_size or raster.width != self.tile_size:
            raise ShapeMismatch(
                f"encoder expects {self.tile_size}x{self.tile_size} tiles, "
                f"got {raster.height}x{raster.width}"
            )
        g = self.grid_size
        p = self.tile_size // g
        patches = raster.bands.reshape(raster.band_count, g, p, g, p)
        values = patches.mean(axis=(2, 4)).transpose(1, 2, 0)
        return TokenGrid(values=values, tile_index=tile_index)


def _resize_to_tile(raster: Raster, tile_size: int) -> Raster:
    from .tiler import _resize_raster

    return _resize_raster(raster, tile_size, tile_size)


def _rgb_groups(band_count: int) -> list[int]:
    # <=3 bands still need exactly 3 channels for the encoder.
    return group_channels(band_count)[0]


def encode_raster(
    raster: Raster,
    fusion: FusionConfig = FusionConfig(),
    tiler: TilerConfig = TilerConfig(),
    encoder: PatchMeanEncoder | None = None,
) -> tuple[TokenSequence, TilePlan]:
    """Full single-timestep pipeline from raster to token sequence.

    The returned sequence length always equals
    ``token_budget(plan, raster.band_count, 1, fusion)``.
    """

    enc = encoder or PatchMeanEncoder(tiler.tile_size, fusion.grid_size)
    plan = plan_tiles(raster, tiler)
    if raster.band_count <= 3:
        rgb = select_bands(raster, _rgb_groups(raster.band_count))
        tiles = crop(rgb, plan)
        seqs = [grid_to_sequence(enc.encode(t, tile_index=i)) for i, t in enumerate(tiles)]
        return concat_sequences(seqs), plan
    single = _resize_to_tile(raster, tiler.tile_size)
    grids = [
        enc.encode(select_bands(single, group), tile_index=0)
        for group in group_channels(raster.band_count)
    ]
    return fuse_spectral(grids, fusion), plan


def encode_series(
    rasters: list[Raster],
    fusion: FusionConfig = FusionConfig(),
    tiler: TilerConfig = TilerConfig(),
    encoder: PatchMeanEncoder | None = None,
) -> tuple[TokenSequence, TilePlan]:
    """Encode a temporal series; all frames must share dimensions."""

    if not rasters:
        raise ShapeMismatch("encode_series needs at least one frame")
    first = rasters[0]
    for r in rasters[1:]:
        if (r.width, r.height, r.band_count) != (first.width, first.height, first.band_count):
            raise ShapeMismatch("temporal frames disagree in shape")
    pairs = [encode_raster(r, fusion, tiler, encoder) for r in rasters]
    stacked = stack_temporal([seq for seq, _ in pairs], fusion)
    return stacked, pairs[0][1]


def layout_breakdown(seq: TokenSequence) -> dict:
    """Aggregate a sequence's provenance into per-timestep counts."""

    by_time: dict[int, dict[str, int]] = {}
    for tile, group, t in seq.layout:
        slot = by_time.setdefault(t, {"tokens": 0, "tiles": 0, "groups": 0})
        slot["tokens"] += 1
        slot["tiles"] = max(slot["tiles"], tile + 1)
        slot["groups"] = max(slot["groups"], group + 1)
    return {
        "total_tokens": len(seq),
        "timesteps": [
            {"time_index": t, **counts} for t, counts in sorted(by_time.items())
        ],
    }
