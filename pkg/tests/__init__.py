# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 17:20'

Usage:

"""
import numpy as np

from hykey.tensor import gradcheck


class TestBase:

    @classmethod
    def check_result(cls, result, expected):
        """
        exact comparison
        :param result:
        :param expected:
        :return:
        """
        print('result:', result)
        assert result == expected

    @classmethod
    def check_close(cls, result, expected, atol=1e-9, rtol=0.0):
        """
        elementwise comparison within tolerance
        :param result:
        :param expected:
        :param atol:
        :param rtol:
        :return:
        """
        print('result:', result)
        np.testing.assert_allclose(np.asarray(result, dtype=np.float64), np.asarray(expected, dtype=np.float64),
                                   atol=atol, rtol=rtol)

    @classmethod
    def check_gradient(cls, func, inputs, rtol=1e-3):
        """
        analytic vs central finite difference gradients in float64
        :param func: callable(*tensors) -> scalar Tensor
        :param inputs: arrays
        :param rtol:
        :return:
        """
        ok, worst = gradcheck(func, inputs, h=1e-3, rtol=rtol, atol=1e-6)
        print('worst relative error:', worst)
        assert ok
