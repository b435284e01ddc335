# Sphinx configuration for the stepfold documentation.

import os
import sys

sys.path.insert(0, os.path.abspath("../"))


# -- Project information -----------------------------------------------------

project = "stepfold"
copyright = "stepfold developers"
author = "stepfold developers"

# The short X.Y version
version = "0.1.0"
# The full version, including alpha/beta/rc tags
release = "0.1.0"


# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.doctest",
    "sphinx.ext.napoleon",
    "sphinx.ext.viewcode",
]

# numpydoc-style sections in the docstrings
napoleon_google_docstring = False
napoleon_numpy_docstring = True

templates_path = ["_templates"]
source_suffix = [".rst"]
master_doc = "index"
language = None

exclude_patterns = ["_build", "Thumbs.db", ".DS_Store", "stepfold/tests"]
pygments_style = None


# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_static_path = []
htmlhelp_basename = "stepfolddoc"


# -- Options for manual page output ------------------------------------------

man_pages = [(master_doc, "stepfold", "stepfold Documentation", [author], 1)]
