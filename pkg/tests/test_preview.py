import numpy as np

from core.fields import GridField
from core.phantoms import make_phantom
from core.preview import field_slice, render_slice


def test_render_size_and_mode():
    image = render_slice(make_phantom("disc", (16, 16)), size=(64, 48))
    assert image.size == (64, 48)
    assert image.mode == "L"


def test_full_range_used():
    image = render_slice(make_phantom("blocks", (16, 16)), size=(16, 16))
    data = np.asarray(image)
    assert data.min() == 0
    assert data.max() == 255


def test_constant_field_renders_black():
    image = render_slice(GridField.from_array(np.full((4, 4), 7.0)), size=(4, 4))
    assert np.asarray(image).max() == 0


def test_slices():
    volume = GridField.from_array(np.arange(24.0).reshape(2, 3, 4))
    np.testing.assert_array_equal(field_slice(volume), volume.as_array()[:, :, 2])
    np.testing.assert_array_equal(field_slice(volume, 0), volume.as_array()[:, :, 0])
    assert field_slice(GridField.from_array(np.arange(5.0))).shape == (1, 5)
