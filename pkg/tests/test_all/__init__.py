# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 17:22'

Usage:
unit and acceptance tests, `pytest -m "not slow"` skips the long ones
"""
