# -*- coding: utf-8 -*-
#
# Sphinx configuration for the fatformer documentation.

import os
import sys
sys.path.insert(0, os.path.abspath('..'))


extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.doctest',
              'sphinx.ext.viewcode']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'fatformer'
copyright = '2024, fatformer developers'
author = 'fatformer developers'

version = '0.1'
release = '0.1.0'

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'

# autodoc
autodoc_member_order = 'bysource'

html_theme = 'alabaster'
html_static_path = []
htmlhelp_basename = 'fatformerdoc'

man_pages = [
    (master_doc, 'fatformer', 'fatformer Documentation', [author], 1)
]
