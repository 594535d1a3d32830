# Import built-in modules
from pathlib import Path


PACKAGE_NAME = "spinefuse"
THIS_ROOT = Path(__file__).parent.parent
TEST_DEPENDENCIES = (
    "pytest",
    "pytest_cov",
    "pytest_mock",
    "pytest-benchmark",
    "pytest-timeout",
    "hypothesis",
)
