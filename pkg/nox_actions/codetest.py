# Import built-in modules
import os

# Import third-party modules
import nox
from nox_actions.utils import PACKAGE_NAME
from nox_actions.utils import TEST_DEPENDENCIES
from nox_actions.utils import THIS_ROOT


def _run_pytest(session: nox.Session, marker: str) -> None:
    session.install(".")
    session.install(*TEST_DEPENDENCIES)
    test_root = os.path.join(THIS_ROOT, "tests")
    session.run("pytest", f"--cov={PACKAGE_NAME}",
                "--cov-report=xml:coverage.xml",
                f"--rootdir={test_root}",
                "--cov-report=term-missing",
                "-m", marker,
                *session.posargs,
                env={"PYTHONPATH": THIS_ROOT.as_posix()})


def pytest(session: nox.Session) -> None:
    """Run the test suite without the acceptance-scale simulations."""
    _run_pytest(session, "not slow")


def pytest_slow(session: nox.Session) -> None:
    """Run only the acceptance-scale simulations and sweeps."""
    _run_pytest(session, "slow")
