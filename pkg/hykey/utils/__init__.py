# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:26'

Usage:

"""
# config keys and format constants
from .constant import *
# decorators
from .decorator import *
# binary and json conversion
from .transform import *
# run config resolution
from .config_action import *
