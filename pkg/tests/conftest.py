import numpy as np
import pytest

from earthdial.raster import Raster


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def make_raster(rng, bands=3, h=64, w=64, masked_frac=0.0, gsd=1.0, constant=None):
    if constant is not None:
        data = np.full((bands, h, w), float(constant))
    else:
        data = rng.random((bands, h, w))
    mask = np.zeros((h, w), dtype=bool)
    if masked_frac > 0.0:
        k = int(round(masked_frac * h * w))
        flat = mask.reshape(-1)
        flat[:k] = True
    return Raster(bands=data, nodata_mask=mask, gsd=gsd)


@pytest.fixture
def raster_factory(rng):
    def factory(**kwargs):
        return make_raster(rng, **kwargs)

    return factory
