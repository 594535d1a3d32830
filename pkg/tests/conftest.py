"""Test configuration and fixtures."""

# Import built-in modules
import shutil
import tempfile

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from spinefuse.config import RunConfig
from spinefuse.geometry import ProjectionGeometry
from spinefuse.geometry import make_views
from spinefuse.phantom import PhantomSpec
from spinefuse.phantom import make_phantom
from spinefuse.volume import Volume3


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_geometry():
    """A 64 x 64 detector at 2 mm pitch, view 0 of 4."""
    return ProjectionGeometry(view_index=0, k_total=4, detector_shape=(64, 64), pitch=(2.0, 2.0))


@pytest.fixture
def ten_views():
    return make_views(10)


@pytest.fixture
def cube_volume():
    """Homogeneous 40 mm cube (μ = 0.02 /mm) on a 1 mm grid, centered on the origin."""
    data = np.full((40, 40, 40), 0.02, dtype=np.float32)
    return Volume3(data=data, spacing=(1.0, 1.0, 1.0), origin=(-19.5, -19.5, -19.5))


@pytest.fixture(scope="session")
def phantom_case():
    """Default five-vertebra phantom and its annotation."""
    return make_phantom(PhantomSpec())


@pytest.fixture
def run_config(temp_dir):
    """Noiseless configuration writing into a temporary directory."""
    return RunConfig(out_dir=temp_dir)
