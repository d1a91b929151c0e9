# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Path setup --------------------------------------------------------------

import os
import sys

sys.path.insert(0, os.path.abspath('../..'))
import ftprep


# -- Project information -----------------------------------------------------

project = 'ftprep'
copyright = '2026, ftprep developers'
author = 'ftprep developers'

release = ftprep.__version__


# -- General configuration ---------------------------------------------------
#
master_doc = 'index'

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.coverage',
    'sphinx.ext.napoleon',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
]

templates_path = ['_templates']

source_suffix = {
    '.rst': 'restructuredtext',
}

autosectionlabel_prefix_document = True

exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'

html_static_path = ['_static']


# -- Intersphinx  -------------------------------------------------------------

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'validobj': ('https://validobj.readthedocs.io/en/latest/', None),
}

# -- Doctest ------------------------------------------------------------------
#

doctest_path = [os.path.abspath('../examples')]

# -- Autodoc ------------------------------------------------------------------
#
autodoc_member_order = 'bysource'
