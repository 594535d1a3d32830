"""Test synthetic phantom generation."""

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.phantom import PhantomSpec
from spinefuse.phantom import make_phantom
from spinefuse.volume import sample_trilinear


def test_default_phantom(phantom_case):
    """Test the five-vertebra default phantom."""
    volume, annotation = phantom_case
    assert len(annotation) == 5
    assert [label.name for label in annotation.labels] == ["T9", "T10", "T11", "T12", "T13"]
    np.testing.assert_allclose(np.diff(annotation.centers[:, 2]), 30.0)
    np.testing.assert_allclose(volume.center, 0.0, atol=1e-9)


def test_vertebra_and_tissue_values(phantom_case):
    """Test attenuation at a centroid, in soft tissue and in air."""
    volume, annotation = phantom_case
    spec = PhantomSpec()
    center = annotation.centers[0]
    assert sample_trilinear(volume, center) == pytest.approx(spec.mu_vertebra)
    assert sample_trilinear(volume, center + np.array([40.0, 0.0, 0.0])) == pytest.approx(spec.mu_tissue)
    lo, _ = volume.extent
    assert sample_trilinear(volume, lo) == 0.0


def test_phantom_is_deterministic():
    """Test that the same spec yields identical output."""
    spec = PhantomSpec(n=3, jitter_mm=4.0, curvature_mm=5.0, seed=7, background_radius_mm=40.0)
    first, first_ann = make_phantom(spec)
    second, second_ann = make_phantom(spec)
    np.testing.assert_array_equal(first.data, second.data)
    assert first_ann.entries == second_ann.entries


def test_curvature_bows_the_middle():
    """Test that curvature shifts the middle vertebra in x and leaves the ends."""
    _, annotation = make_phantom(PhantomSpec(n=5, curvature_mm=6.0))
    xs = annotation.centers[:, 0]
    assert xs[2] == pytest.approx(6.0)
    assert xs[0] == pytest.approx(0.0)
    assert xs[4] == pytest.approx(0.0)


def test_metal_implant():
    """Test that the implant adds a high-attenuation rod."""
    volume, annotation = make_phantom(PhantomSpec(n=3, metal_implant=True, background_radius_mm=40.0))
    assert sample_trilinear(volume, annotation.centers[1]) == pytest.approx(0.5)


def test_truncated_field_of_view():
    """Test that start_label shifts the label chain."""
    _, annotation = make_phantom(PhantomSpec(n=2, start_label=1, background_radius_mm=30.0))
    assert [label.name for label in annotation.labels] == ["C1", "C2"]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n": 0},
        {"n": 27},
        {"n": 5, "start_label": 23},
        {"spacing_mm": 0.0},
        {"semi_axes_mm": (1.0, 0.0, 1.0)},
        {"jitter_mm": -1.0},
    ],
)
def test_invalid_spec(kwargs):
    """Test spec validation."""
    with pytest.raises(ConfigError):
        PhantomSpec(**kwargs)


def test_dims_too_small():
    """Test the error when explicit dims cannot hold the phantom."""
    with pytest.raises(ConfigError):
        make_phantom(PhantomSpec(dims=(10, 10, 10)))
