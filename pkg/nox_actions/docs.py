"""Nox actions for documentation tasks."""

# Import built-in modules
from pathlib import Path
import shutil

# Import third-party modules
import nox
from nox.sessions import Session


docs_dependencies = [
    "sphinx>=5.0",
    "furo",
    "sphinx-autobuild",
    "sphinx-copybutton",
    "doc8",
    "myst-parser>=2.0.0",
]


def install_docs_dependencies(session: Session) -> None:
    """Install the package and the documentation toolchain.

    Args:
        session: Nox session object
    """
    session.install("-e", ".")
    session.install(*docs_dependencies)


def get_docs_dir() -> Path:
    return Path(__file__).parent.parent / "docs"


def clean_docs(session: Session) -> None:
    build_dir = get_docs_dir() / "build"
    if build_dir.exists():
        session.log(f"Cleaning {build_dir}")
        shutil.rmtree(str(build_dir), ignore_errors=True)


def docs(session: Session) -> None:
    """Build the HTML documentation with sphinx.

    Args:
        session: Nox session object; posargs select another builder.
    """
    install_docs_dependencies(session)
    clean_docs(session)
    builder = session.posargs[0] if session.posargs else "html"
    with session.chdir(str(get_docs_dir())):
        session.run("sphinx-build", "-b", builder, "source", f"build/{builder}")
    session.log("Documentation built successfully")


def docs_live(session: Session) -> None:
    """Serve the documentation with live reload on 127.0.0.1:8000."""
    install_docs_dependencies(session)
    clean_docs(session)
    with session.chdir(str(get_docs_dir())):
        session.run(
            "sphinx-autobuild",
            "-b", "html",
            "--host", "127.0.0.1",
            "--port", "8000",
            "--watch", "../spinefuse",
            "--ignore", "*.swp",
            "--re-ignore", r".*\/__pycache__\/.*",
            "source",
            "build/html",
        )


def docs_lint(session: Session) -> None:
    """Run doc8 and a warnings-as-errors sphinx build."""
    install_docs_dependencies(session)
    docs_dir = get_docs_dir()
    session.run(
        "doc8",
        "--ignore", "D001",  # line length
        str(docs_dir / "source"),
    )
    with session.chdir(str(docs_dir)):
        session.run("sphinx-build", "-b", "html", "-W", "-n", "source", "build/lint-check")
