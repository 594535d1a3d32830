"""Test the volume model, its file format and resampling."""

# Import built-in modules
import json
from pathlib import Path

# Import third-party modules
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st
import numpy as np
import pytest

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.volume import MU_WATER
from spinefuse.volume import Volume3
from spinefuse.volume import hu_to_mu
from spinefuse.volume import load_volume
from spinefuse.volume import resample_isotropic
from spinefuse.volume import sample_trilinear
from spinefuse.volume import save_volume


def _write_pair(temp_dir, header, payload):
    header_path = Path(temp_dir) / "vol.json"
    header_path.write_text(json.dumps(header))
    np.asarray(payload, dtype="<f4").tofile(header_path.with_suffix(".raw"))
    return header_path


def test_hu_to_mu():
    """Test water-scaled conversion and clamping of air below -1000 HU."""
    assert hu_to_mu(0.0) == pytest.approx(MU_WATER)
    assert hu_to_mu(-1000.0) == 0.0
    assert hu_to_mu(1000.0) == pytest.approx(0.04)
    assert hu_to_mu(-1200.0) == 0.0


def test_volume_rejects_bad_input():
    """Test validation of shape, spacing and finiteness."""
    with pytest.raises(DataError):
        Volume3(data=np.zeros((4, 4)))
    with pytest.raises(DataError):
        Volume3(data=np.zeros((2, 2, 2)), spacing=(1.0, 0.0, 1.0))
    with pytest.raises(DataError):
        Volume3(data=np.full((2, 2, 2), np.nan))


def test_volume_is_read_only():
    """Test that the voxel payload cannot be mutated after construction."""
    volume = Volume3(data=np.zeros((2, 3, 4)))
    assert volume.dims == (4, 3, 2)
    with pytest.raises(ValueError):
        volume.data[0, 0, 0] = 1.0


def test_index_world_roundtrip():
    """Test that world and voxel coordinates are inverse maps."""
    volume = Volume3(data=np.zeros((3, 4, 5)), spacing=(0.5, 2.0, 1.5), origin=(10.0, -4.0, 2.0))
    ijk = np.array([[0.0, 0.0, 0.0], [4.0, 3.0, 2.0], [1.25, 0.5, 1.75]])
    np.testing.assert_allclose(volume.world_to_index(volume.index_to_world(ijk)), ijk)
    lo, hi = volume.extent
    np.testing.assert_allclose(lo, [10.0, -4.0, 2.0])
    np.testing.assert_allclose(hi, [12.0, 2.0, 5.0])


def test_sample_trilinear_at_voxel_centers(rng):
    """Test that sampling at voxel centers returns the stored values."""
    data = rng.random((4, 5, 6))
    volume = Volume3(data=data, spacing=(1.0, 2.0, 0.5), origin=(1.0, 2.0, 3.0))
    iz, iy, ix = 2, 3, 4
    point = volume.index_to_world([ix, iy, iz])
    assert sample_trilinear(volume, point) == pytest.approx(data[iz, iy, ix])


def test_sample_trilinear_midpoint():
    """Test that a midpoint between two voxels averages them."""
    data = np.zeros((1, 1, 2))
    data[0, 0, 1] = 2.0
    volume = Volume3(data=data)
    assert sample_trilinear(volume, (0.5, 0.0, 0.0)) == pytest.approx(1.0)


def test_sample_trilinear_outside_volume():
    """Test the air padding at the voxel faces of the volume box."""
    volume = Volume3(data=np.ones((3, 3, 3)))
    points = np.array([
        [-0.4, 1.0, 1.0],
        [2.45, 1.0, 1.0],
        [1.0, 1.0, -0.3],
        [-0.8, 1.0, 1.0],
        [-0.6, 1.0, 1.0],
        [1.0, 2.7, 1.0],
        [5.0, 1.0, 1.0],
        [np.nan, 1.0, 1.0],
    ])
    np.testing.assert_array_equal(sample_trilinear(volume, points), [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def test_sample_trilinear_edge_holds_last_value():
    """Test that the half voxel past the last center keeps the edge value."""
    data = np.zeros((1, 1, 4))
    data[0, 0, :] = [0.0, 1.0, 2.0, 3.0]
    volume = Volume3(data=data, spacing=(2.0, 1.0, 1.0))
    assert sample_trilinear(volume, (6.9, 0.0, 0.0)) == pytest.approx(3.0)
    assert sample_trilinear(volume, (7.1, 0.0, 0.0)) == 0.0
    assert sample_trilinear(volume, (3.0, 0.0, 0.0)) == pytest.approx(1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_trilinear_reproduces_linear_fields(x, y, z):
    """Test that a linear field is sampled exactly inside the hull."""
    grid = np.arange(5, dtype=np.float64) - 2.0
    zz, yy, xx = np.meshgrid(grid, grid, grid, indexing="ij")
    volume = Volume3(data=1.0 + 0.5 * xx - 0.25 * yy + 2.0 * zz, origin=(-2.0, -2.0, -2.0))
    assert sample_trilinear(volume, (x, y, z)) == pytest.approx(1.0 + 0.5 * x - 0.25 * y + 2.0 * z, abs=1e-9)


def test_resample_isotropic_keeps_origin_and_extent():
    """Test the output grid of an anisotropic resample."""
    volume = Volume3(data=np.ones((5, 4, 11)), spacing=(0.5, 1.0, 2.0), origin=(1.0, 2.0, 3.0))
    result = resample_isotropic(volume, 1.0)
    assert result.spacing == (1.0, 1.0, 1.0)
    assert result.origin == volume.origin
    assert result.dims == (6, 4, 9)
    np.testing.assert_allclose(result.data, 1.0)


def _ramp_volume():
    """``f = 2x - 0.5z + 3`` on an anisotropic 1 mm / 2 mm grid."""
    nx, ny, nz = 9, 4, 6
    spacing = (1.0, 1.0, 2.0)
    origin = (-4.0, 0.0, 10.0)
    zz, _, xx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    x = origin[0] + xx * spacing[0]
    z = origin[2] + zz * spacing[2]
    return Volume3(data=2.0 * x - 0.5 * z + 3.0, spacing=spacing, origin=origin)


def test_resample_linear_ramp_to_half_millimetre():
    """Test that resampled values match the analytic ramp at every new center."""
    result = resample_isotropic(_ramp_volume(), 0.5)
    assert result.spacing == (0.5, 0.5, 0.5)
    assert result.dims == (17, 7, 21)
    nx, ny, nz = result.dims
    zz, yy, xx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    world = result.index_to_world(np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1))
    expected = 2.0 * world[:, 0] - 0.5 * world[:, 2] + 3.0
    np.testing.assert_allclose(result.data.ravel(), expected, atol=1e-5)


def test_resample_then_sample_at_original_centers():
    """Test that sampling the resampled ramp at the old centers gives the old values."""
    volume = _ramp_volume()
    result = resample_isotropic(volume, 0.5)
    nx, ny, nz = volume.dims
    zz, yy, xx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    centers = volume.index_to_world(np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1))
    np.testing.assert_allclose(sample_trilinear(result, centers), volume.data.ravel(), atol=1e-5)


def test_resample_rejects_non_positive_target():
    """Test the resampling precondition."""
    with pytest.raises(ConfigError):
        resample_isotropic(Volume3(data=np.ones((2, 2, 2))), 0.0)


def test_save_load_roundtrip(temp_dir, rng):
    """Test that a saved volume loads back bit-identical."""
    volume = Volume3(data=rng.random((3, 4, 5)).astype(np.float32), spacing=(1.0, 1.5, 2.0), origin=(-1.0, 0.0, 4.0))
    header = save_volume(volume, Path(temp_dir) / "phantom")
    loaded = load_volume(header)
    assert loaded.dims == volume.dims
    assert loaded.spacing == volume.spacing
    assert loaded.origin == volume.origin
    np.testing.assert_array_equal(loaded.data, volume.data)


def test_load_hu_volume(temp_dir):
    """Test that HU payloads are converted to attenuation on load."""
    header = {"dims": [2, 1, 1], "spacing_mm": [1, 1, 1], "origin_mm": [0, 0, 0], "dtype": "f32le", "units": "hu"}
    path = _write_pair(temp_dir, header, [0.0, -1000.0])
    loaded = load_volume(path)
    np.testing.assert_allclose(loaded.data.ravel(), [MU_WATER, 0.0])


@pytest.mark.parametrize(
    "header,payload",
    [
        ({"dims": [2, 2, 2], "spacing_mm": [1, 1, 1], "origin_mm": [0, 0, 0], "dtype": "f32le",
          "units": "mu_per_mm"}, np.zeros(7)),
        ({"dims": [1, 1, 1], "spacing_mm": [1, 1, 1], "origin_mm": [0, 0, 0], "dtype": "u16",
          "units": "hu"}, np.zeros(1)),
        ({"dims": [1, 1, 1], "spacing_mm": [1, 1, 1], "origin_mm": [0, 0, 0], "dtype": "f32le",
          "units": "kelvin"}, np.zeros(1)),
        ({"dims": [1, 1, 1], "spacing_mm": [1, 1, 1], "dtype": "f32le", "units": "hu"}, np.zeros(1)),
        ({"dims": [1, 1, 1], "spacing_mm": [1, 1, 1], "origin_mm": [0, 0, 0], "dtype": "f32le",
          "units": "hu"}, np.array([np.inf])),
    ],
)
def test_load_rejects_malformed_files(temp_dir, header, payload):
    """Test size, dtype, units, header field and finiteness checks."""
    path = _write_pair(temp_dir, header, payload)
    with pytest.raises(DataError):
        load_volume(path)


def test_load_missing_file(temp_dir):
    """Test the error for a missing header."""
    with pytest.raises(DataError, match="not found"):
        load_volume(Path(temp_dir) / "missing.json")
