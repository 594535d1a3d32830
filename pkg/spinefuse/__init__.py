# Import local modules
from spinefuse.__version__ import __version__
from spinefuse.config import RunConfig
from spinefuse.config import load_config
from spinefuse.fusion import fuse_all
from spinefuse.fusion import triangulate
from spinefuse.metrics import evaluate
from spinefuse.phantom import PhantomSpec
from spinefuse.phantom import make_phantom
from spinefuse.pipeline import simulate_case


__all__ = [
    "PhantomSpec",
    "RunConfig",
    "__version__",
    "evaluate",
    "fuse_all",
    "load_config",
    "make_phantom",
    "simulate_case",
    "triangulate",
]
