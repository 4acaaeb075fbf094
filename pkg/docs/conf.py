# -*- coding: utf-8 -*-
#
# ghkchain documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

import sys, os
sys.path.insert(0, os.path.abspath('..'))

# -- General configuration -----------------------------------------------------

needs_sphinx = '1.8'

numpydoc_show_class_members = False

extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.doctest',
              'sphinx.ext.intersphinx',
              'sphinx.ext.mathjax',
              'sphinx.ext.autosummary',
              'numpydoc']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

# General information about the project.
project = u'ghkchain'
copyright = u'2016, the ghkchain developers'

# The version info for the project, read from ghkchain/version.py.
_ver = {}
with open(os.path.join('..', 'ghkchain', 'version.py')) as f:
    exec(f.read(), _ver)
version = '%d.%d' % (_ver['MAJOR'], _ver['MINOR'])
release = _ver['VERSION']

exclude_patterns = ['_build']
pygments_style = 'sphinx'

intersphinx_mapping = {'python': ('https://docs.python.org/3', None),
                       'numpy': ('https://numpy.org/doc/stable', None),
                       'scipy': ('https://docs.scipy.org/doc/scipy', None)}

# -- Options for HTML output ---------------------------------------------------

html_theme = 'default'
html_static_path = []
htmlhelp_basename = 'ghkchaindoc'

# -- Options for LaTeX output --------------------------------------------------

latex_documents = [
  ('index', 'ghkchain.tex', u'ghkchain documentation',
   u'the ghkchain developers', 'manual'),
]

# -- Options for manual page output --------------------------------------------

man_pages = [
    ('index', 'ghkchain', u'ghkchain Documentation',
     [u'the ghkchain developers'], 1)
]
