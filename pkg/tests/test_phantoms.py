import numpy as np
import pytest

from core.errors import ParameterError, UnsupportedDimensionError
from core.phantoms import PHANTOMS, make_phantom


@pytest.mark.parametrize("phantom_id", sorted(PHANTOMS))
@pytest.mark.parametrize("shape", [(12,), (10, 14), (8, 8, 6)])
def test_values_in_unit_range(phantom_id, shape):
    u = make_phantom(phantom_id, shape)
    assert u.shape == shape
    assert u.values.min() >= 0.0
    assert u.values.max() <= 1.0
    assert u.values.max() > 0.0


def test_disc_centre_and_corner():
    arr = make_phantom("disc", (16, 16)).as_array()
    assert arr[8, 8] == 1.0
    assert arr[0, 0] == 0.0
    np.testing.assert_array_equal(arr, arr.T)


def test_blocks_levels():
    values = set(np.unique(make_phantom("blocks", (16, 16, 8)).values).tolist())
    assert values == {0.0, 0.5, 1.0}


def test_humidity_is_positive_and_thins_with_height():
    arr = make_phantom("humidity", (16, 16, 8)).as_array()
    assert arr.min() > 0.0
    layers = arr.mean(axis=(0, 1))
    assert np.all(np.diff(layers) < 0.0)


def test_spacing_is_kept():
    u = make_phantom("shepp_like", (8, 4), spacing=(0.5, 2.0))
    assert u.spacing == (0.5, 2.0)


def test_deterministic():
    np.testing.assert_array_equal(make_phantom("shepp_like", (20, 20)).values,
                                  make_phantom("shepp_like", (20, 20)).values)


def test_unknown_phantom():
    with pytest.raises(ParameterError):
        make_phantom("cat", (4, 4))


def test_four_axes():
    with pytest.raises(UnsupportedDimensionError):
        make_phantom("disc", (2, 2, 2, 2))
