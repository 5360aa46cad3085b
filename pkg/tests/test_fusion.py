import numpy as np
import pytest

from earthdial.errors import (
    InvalidRange,
    InvalidTarget,
    NonDivisible,
    ShapeMismatch,
    TooManyTimesteps,
)
from earthdial.fusion import (
    FusionConfig,
    PatchMeanEncoder,
    TokenGrid,
    TokenSequence,
    average_reduce,
    bilinear_reduce,
    concat_sequences,
    encode_raster,
    encode_series,
    fuse_spectral,
    grid_to_sequence,
    group_channels,
    layout_breakdown,
    select_time,
    stack_temporal,
    token_budget,
)
from earthdial.tiler import TilerConfig, plan_for_size

from conftest import make_raster
from oracles import dense_bilinear


def test_group_channels_table():
    assert group_channels(1) == [[0, 0, 0]]
    assert group_channels(2) == [[0, 1, 1]]
    assert group_channels(3) == [[0, 1, 2]]
    assert group_channels(4) == [[0, 1, 2], [3, 3, 3]]
    assert group_channels(5) == [[0, 1, 2], [3, 4, 4]]
    assert group_channels(12) == [[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]]
    with pytest.raises(InvalidRange):
        group_channels(0)


def test_fusion_config_validation():
    with pytest.raises(InvalidRange):
        FusionConfig(reduce_strategy="nearest")
    with pytest.raises(InvalidRange):
        FusionConfig(aggregate="sum")
    with pytest.raises(InvalidRange):
        FusionConfig(reduced_rows=0)
    with pytest.raises(InvalidRange):
        FusionConfig(tokens_per_tile=200).grid_size
    assert FusionConfig(tokens_per_tile=256).grid_size == 16


def test_bilinear_reduce_matches_dense_oracle(rng):
    for _ in range(30):
        rows = int(rng.integers(2, 20))
        cols = int(rng.integers(2, 20))
        dim = int(rng.integers(1, 5))
        grid = TokenGrid(values=rng.random((rows, cols, dim)))
        out_r = int(rng.integers(1, rows + 1))
        out_c = int(rng.integers(1, cols + 1))
        got = bilinear_reduce(grid, out_r, out_c)
        want = dense_bilinear(np.asarray(grid.values), out_r, out_c)
        assert np.max(np.abs(got.values - want)) <= 1e-9


def test_bilinear_reduce_identity_and_constants(rng):
    grid = TokenGrid(values=rng.random((8, 8, 4)))
    same = bilinear_reduce(grid, 8, 8)
    assert np.array_equal(same.values, grid.values)
    const = TokenGrid(values=np.full((9, 7, 2), 0.625))
    red = bilinear_reduce(const, 3, 2)
    assert np.all(red.values == 0.625)


def test_reduce_rejects_upsampling():
    grid = TokenGrid(values=np.zeros((4, 4, 1)))
    with pytest.raises(InvalidTarget):
        bilinear_reduce(grid, 5, 4)
    with pytest.raises(InvalidTarget):
        average_reduce(grid, 4, 8)


def test_average_reduce_exact_block_means():
    vals = np.arange(16, dtype=np.float64).reshape(4, 4, 1)
    red = average_reduce(TokenGrid(values=vals), 2, 2)
    assert red.values[:, :, 0].tolist() == [[2.5, 4.5], [10.5, 12.5]]
    with pytest.raises(NonDivisible):
        average_reduce(TokenGrid(values=np.zeros((4, 4, 1))), 3, 2)


def test_average_and_bilinear_agree_on_constants():
    const = TokenGrid(values=np.full((8, 8, 3), 0.3125))
    a = average_reduce(const, 4, 4)
    b = bilinear_reduce(const, 4, 4)
    assert np.array_equal(a.values, b.values)


def test_fuse_spectral_concat_provenance(rng):
    grids = [TokenGrid(values=rng.random((8, 8, 2))) for _ in range(3)]
    seq = fuse_spectral(grids, FusionConfig(reduced_rows=2, reduced_cols=2))
    assert len(seq) == 3 * 4
    assert [g for _, g, _ in seq.layout] == [0] * 4 + [1] * 4 + [2] * 4
    assert all(t == 0 for _, _, t in seq.layout)


def test_fuse_spectral_mean_collapses_groups(rng):
    g1 = TokenGrid(values=np.full((4, 4, 1), 0.25))
    g2 = TokenGrid(values=np.full((4, 4, 1), 0.75))
    seq = fuse_spectral([g1, g2], FusionConfig(aggregate="mean", reduced_rows=4, reduced_cols=4))
    assert len(seq) == 16
    assert np.all(seq.values == 0.5)
    assert all(g == 0 for _, g, _ in seq.layout)


def test_fuse_spectral_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        fuse_spectral(
            [TokenGrid(values=np.zeros((4, 4, 1))), TokenGrid(values=np.zeros((4, 5, 1)))]
        )
    with pytest.raises(ShapeMismatch):
        fuse_spectral([])


def test_stack_temporal_and_select_time(rng):
    cfg = FusionConfig()
    for _ in range(20):
        steps = int(rng.integers(1, 5))
        n = int(rng.integers(1, 30))
        dim = int(rng.integers(1, 6))
        seqs = [
            TokenSequence(
                values=rng.random((n, dim)),
                layout=tuple(
                    (int(rng.integers(0, 4)), int(rng.integers(0, 3)), 0) for _ in range(n)
                ),
            )
            for _ in range(steps)
        ]
        stacked = stack_temporal(seqs, cfg)
        assert len(stacked) == steps * n
        for t, original in enumerate(seqs):
            back = select_time(stacked, t)
            assert np.array_equal(back.values, original.values)
            assert back.layout == original.layout


def test_stack_temporal_rejects_over_limit(rng):
    seq = TokenSequence(values=np.zeros((2, 1)), layout=((0, 0, 0), (0, 0, 0)))
    with pytest.raises(TooManyTimesteps):
        stack_temporal([seq] * 5, FusionConfig())
    assert len(stack_temporal([seq] * 4, FusionConfig())) == 8
    with pytest.raises(ShapeMismatch):
        stack_temporal([], FusionConfig())


def test_token_budget_known_cases():
    cfg = FusionConfig()
    assert token_budget(plan_for_size(896, 448), 3, 1, cfg) == 768
    assert token_budget(plan_for_size(448, 448), 3, 1, cfg) == 256
    assert token_budget(plan_for_size(448, 448), 5, 2, cfg) == 64
    assert token_budget(plan_for_size(448, 448), 12, 1, cfg) == 64
    mean_cfg = FusionConfig(aggregate="mean")
    assert token_budget(plan_for_size(448, 448), 5, 2, mean_cfg) == 32
    with pytest.raises(TooManyTimesteps):
        token_budget(plan_for_size(448, 448), 3, 5, cfg)
    with pytest.raises(InvalidRange):
        token_budget(plan_for_size(448, 448), 0, 1, cfg)


def test_patch_mean_encoder_exact():
    bands = np.zeros((2, 8, 8))
    bands[0, :4, :4] = 1.0  # top-left patch of band 0
    bands[1, 4:, 4:] = 0.5
    r = make_raster(np.random.default_rng(0), bands=1, h=8, w=8)
    r = type(r)(bands=bands, nodata_mask=np.zeros((8, 8), bool))
    enc = PatchMeanEncoder(tile_size=8, grid_size=2)
    grid = enc.encode(r)
    assert grid.values.shape == (2, 2, 2)
    assert grid.values[0, 0, 0] == 1.0 and grid.values[0, 1, 0] == 0.0
    assert grid.values[1, 1, 1] == 0.5 and grid.values[0, 0, 1] == 0.0
    with pytest.raises(ShapeMismatch):
        enc.encode(make_raster(np.random.default_rng(0), bands=1, h=4, w=8))
    with pytest.raises(InvalidRange):
        PatchMeanEncoder(tile_size=448, grid_size=13)


def test_encode_raster_matches_budget(rng):
    tiler = TilerConfig(tile_size=32)
    for bands in (1, 2, 3, 4, 5, 7, 12):
        for aggregate in ("concat", "mean"):
            cfg = FusionConfig(tokens_per_tile=16, reduced_rows=2, reduced_cols=2,
                               aggregate=aggregate)
            r = make_raster(rng, bands=bands, h=50, w=90)
            seq, plan = encode_raster(r, cfg, tiler)
            assert len(seq) == token_budget(plan, bands, 1, cfg)


def test_encode_series_budget_and_breakdown(rng):
    tiler = TilerConfig(tile_size=32)
    cfg = FusionConfig(tokens_per_tile=16, reduced_rows=2, reduced_cols=2)
    frames = [make_raster(rng, bands=5, h=40, w=40) for _ in range(3)]
    seq, plan = encode_series(frames, cfg, tiler)
    assert len(seq) == token_budget(plan, 5, 3, cfg)
    breakdown = layout_breakdown(seq)
    assert breakdown["total_tokens"] == len(seq)
    assert [s["time_index"] for s in breakdown["timesteps"]] == [0, 1, 2]
    assert all(s["groups"] == 2 for s in breakdown["timesteps"])
    with pytest.raises(ShapeMismatch):
        encode_series([frames[0], make_raster(rng, bands=5, h=41, w=40)], cfg, tiler)


def test_sequence_validation():
    with pytest.raises(ShapeMismatch):
        TokenSequence(values=np.zeros((2, 3)), layout=((0, 0, 0),))
    with pytest.raises(InvalidRange):
        TokenSequence(values=np.zeros((1, 3)), layout=((0, -1, 0),))
    with pytest.raises(ShapeMismatch):
        concat_sequences([])
