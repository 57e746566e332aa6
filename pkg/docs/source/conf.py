# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

# Configuration file for the Sphinx documentation builder.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------
import momsjump
import pytorch_sphinx_theme

project = "momsjump"
copyright = "2026, momsjump contributors"
author = "momsjump contributors"

version = "main (" + str(momsjump.__version__) + " )"
release = "main"

language = "en"

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.doctest",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
    "myst_parser",
]

napoleon_use_ivar = True
napoleon_numpy_docstring = False
napoleon_google_docstring = True
autosectionlabel_prefix_document = True

source_suffix = {
    ".rst": "restructuredtext",
}

master_doc = "index"

exclude_patterns = []

# -- Options for HTML output -------------------------------------------------

html_theme = "pytorch_sphinx_theme"
html_theme_path = [pytorch_sphinx_theme.get_html_theme_path()]

htmlhelp_basename = "momsjumpdoc"

autosummary_generate = True

# -- Options for LaTeX output ---------------------------------------------
latex_elements = {}

# -- Options for manual page output ---------------------------------------

man_pages = [(master_doc, "momsjump", "momsjump Documentation", [author], 1)]

# -- Options for Texinfo output -------------------------------------------

texinfo_documents = [
    (
        master_doc,
        "momsjump",
        "momsjump Documentation",
        author,
        "momsjump",
        "Bayesian variable selection under the JZS prior.",
        "Miscellaneous",
    ),
]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "torch": ("https://pytorch.org/docs/stable/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
    "pandas": ("https://pandas.pydata.org/docs/", None),
}
