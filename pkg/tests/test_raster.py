import numpy as np
import pytest

from earthdial.errors import AllPixelsInvalid, IndexOutOfRange, ParseError
from earthdial.raster import (
    Raster,
    load_raster,
    masked_fraction,
    mean_luminance,
    read_bgrid,
    select_bands,
    valid_coverage,
    write_bgrid,
)

from conftest import make_raster


def test_raster_validation_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Raster(bands=np.zeros((4, 4)), nodata_mask=np.zeros((4, 4), bool))
    with pytest.raises(ValueError):
        Raster(bands=np.zeros((1, 4, 4)), nodata_mask=np.zeros((3, 4), bool))
    with pytest.raises(ValueError):
        Raster(bands=np.zeros((1, 4, 4)), nodata_mask=np.zeros((4, 4), bool), gsd=0.0)
    with pytest.raises(ValueError):
        Raster(bands=np.full((1, 4, 4), 1.5), nodata_mask=np.zeros((4, 4), bool))
    with pytest.raises(ValueError):
        Raster(bands=np.full((1, 4, 4), np.nan), nodata_mask=np.zeros((4, 4), bool))


def test_out_of_range_allowed_under_mask():
    bands = np.zeros((1, 2, 2))
    bands[0, 0, 0] = 7.0
    mask = np.zeros((2, 2), bool)
    mask[0, 0] = True
    r = Raster(bands=bands, nodata_mask=mask)
    assert masked_fraction(r) == 0.25


def test_raster_is_frozen_and_caller_keeps_ownership():
    bands = np.zeros((1, 3, 3))
    mask = np.zeros((3, 3), bool)
    r = Raster(bands=bands, nodata_mask=mask)
    with pytest.raises(ValueError):
        r.bands[0, 0, 0] = 1.0
    bands[0, 0, 0] = 0.5  # caller's array stays writable
    assert r.bands[0, 0, 0] == 0.0


def test_mean_luminance_uses_first_three_bands(rng):
    data = np.stack([np.full((4, 4), v) for v in (0.25, 0.5, 0.75, 1.0)])
    r = Raster(bands=data, nodata_mask=np.zeros((4, 4), bool))
    assert mean_luminance(r) == 0.5


def test_mean_luminance_excludes_masked():
    bands = np.zeros((1, 2, 2))
    bands[0, 0, :] = 1.0
    mask = np.zeros((2, 2), bool)
    mask[0, :] = True
    r = Raster(bands=bands, nodata_mask=mask)
    assert mean_luminance(r) == 0.0
    assert valid_coverage(r) == 0.5


def test_all_masked_raises():
    r = Raster(bands=np.zeros((1, 2, 2)), nodata_mask=np.ones((2, 2), bool))
    with pytest.raises(AllPixelsInvalid):
        mean_luminance(r)


def test_select_bands_reorders_and_repeats(rng):
    r = make_raster(rng, bands=4, h=8, w=8)
    out = select_bands(r, [3, 3, 0])
    assert out.band_count == 3
    assert np.array_equal(out.bands[0], r.bands[3])
    assert np.array_equal(out.bands[2], r.bands[0])
    with pytest.raises(IndexOutOfRange):
        select_bands(r, [4])
    with pytest.raises(IndexOutOfRange):
        select_bands(r, [])


def test_bgrid_round_trip(tmp_path, rng):
    r = make_raster(rng, bands=5, h=13, w=7, masked_frac=0.3, gsd=10.0)
    path = tmp_path / "x.bgrid"
    write_bgrid(r, path)
    back = read_bgrid(path)
    assert back.band_count == 5 and back.height == 13 and back.width == 7
    assert back.gsd == np.float32(10.0)
    assert np.array_equal(back.nodata_mask, r.nodata_mask)
    # data went through float32
    assert np.allclose(back.bands, r.bands, atol=1e-7)


def test_bgrid_rejects_corruption(tmp_path, rng):
    r = make_raster(rng, bands=1, h=4, w=4)
    path = tmp_path / "x.bgrid"
    write_bgrid(r, path)
    raw = path.read_bytes()
    (tmp_path / "short.bgrid").write_bytes(raw[:10])
    with pytest.raises(ParseError):
        read_bgrid(tmp_path / "short.bgrid")
    (tmp_path / "magic.bgrid").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ParseError):
        read_bgrid(tmp_path / "magic.bgrid")
    (tmp_path / "trunc.bgrid").write_bytes(raw[:-1])
    with pytest.raises(ParseError):
        read_bgrid(tmp_path / "trunc.bgrid")


def test_png_loading(tmp_path):
    from PIL import Image

    arr = np.zeros((5, 6, 3), dtype=np.uint8)
    arr[:, :, 0] = 255
    arr[2, 3] = (0, 128, 0)
    Image.fromarray(arr).save(tmp_path / "rgb.png")
    r = load_raster(tmp_path / "rgb.png", gsd=0.5)
    assert r.band_count == 3 and (r.height, r.width) == (5, 6)
    assert r.gsd == 0.5
    assert r.bands[0, 0, 0] == 1.0
    assert r.bands[1, 2, 3] == 128 / 255
    assert not r.nodata_mask.any()

    gray = np.arange(16, dtype=np.uint8).reshape(4, 4)
    Image.fromarray(gray, mode="L").save(tmp_path / "g.png")
    g = load_raster(tmp_path / "g.png")
    assert g.band_count == 1
    assert g.bands[0, 3, 3] == 15 / 255


def test_load_raster_rejects_unknown_format(tmp_path):
    (tmp_path / "x.tif").write_bytes(b"")
    with pytest.raises(ParseError):
        load_raster(tmp_path / "x.tif")


def test_load_raster_gsd_override(tmp_path, rng):
    r = make_raster(rng, bands=2, h=4, w=4, gsd=3.0)
    write_bgrid(r, tmp_path / "x.bgrid")
    assert load_raster(tmp_path / "x.bgrid").gsd == 3.0
    assert load_raster(tmp_path / "x.bgrid", gsd=9.0).gsd == 9.0
