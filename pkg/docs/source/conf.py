"""Configuration file for the Sphinx documentation builder."""

# Import built-in modules
import os
import sys

# Add project root to sys.path
sys.path.insert(0, os.path.abspath("../.."))

from spinefuse.__version__ import __version__  # noqa: E402

# -- Project information -----------------------------------------------------
project = "spinefuse"
copyright = "2026, spinefuse developers"
author = "spinefuse developers"
release = __version__

# The short X.Y version.
version = ".".join(release.split(".")[:2])

# -- General configuration ---------------------------------------------------
extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx_copybutton",
    "myst_parser",
]

source_suffix = {
    ".rst": "restructuredtext",
    ".md": "markdown",
}

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}

autodoc_member_order = "bysource"
napoleon_google_docstring = True

suppress_warnings = [
    "ref.class",
    "ref.ref",
]

# -- Options for HTML output -------------------------------------------------
html_theme = "furo"
html_theme_options = {
    "sidebar_hide_name": False,
    "navigation_with_keys": True,
}

master_doc = "index"
