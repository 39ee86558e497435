# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:10'

Usage:

"""

__author__ = 'HyKey authors'
__title__ = 'hykey'
__description__ = 'Spectral-spatial keypoint detection, description and geometric evaluation for hyperspectral cubes'
__url__ = ''
__version__ = '0.1.0'
__author_email__ = 'hykey@users.noreply.github.com'
__copyright__ = 'Copyright 2026 HyKey authors'
