# -*- coding: utf-8 -*-
#
# ubf documentation build configuration file.

import sys
import os

sys.path.insert(0, os.path.abspath('..'))

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'ubf'
copyright = u'2026, ubf developers'
author = u'ubf developers'

from ubf import __version__
version = __version__.rsplit('.', 1)[0]
release = __version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

autodoc_member_order = 'bysource'

html_theme = 'alabaster'
html_static_path = ['_static']
htmlhelp_basename = 'ubfdoc'

man_pages = [
    (master_doc, 'ubf', u'ubf Documentation', [author], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
}
