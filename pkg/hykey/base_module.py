# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 10:05'

Usage:

"""
from collections import OrderedDict

import numpy as np

from .exception import CheckpointError
from .tensor import Tensor


class BaseModule(object):
    """
    parameter container base class
    1. keeps named parameters (Tensor, requires_grad) and named buffers (plain arrays) in insertion order
    2. train/eval switch shared by subclasses
    3. state export/import used by checkpoints
    """

    def __init__(self):
        self._parameters = OrderedDict()
        self._buffers = OrderedDict()
        self.training = True

    def add_parameter(self, name: str, value):
        """
        register a trainable tensor
        :param name: dotted name, unique
        :param value: initial array
        :return: the Tensor
        """
        if name in self._parameters:
            raise KeyError(f'parameter {name} already registered')
        param = Tensor(np.asarray(value, dtype=np.float32), requires_grad=True, name=name)
        self._parameters[name] = param
        return param

    def add_buffer(self, name: str, value):
        """
        register a non-trainable array (e.g. batchnorm running statistics)
        :param name:
        :param value:
        :return: the array, updated in place by its users
        """
        if name in self._buffers:
            raise KeyError(f'buffer {name} already registered')
        self._buffers[name] = np.array(value, dtype=np.float32)
        return self._buffers[name]

    def parameters(self):
        return self._parameters

    def buffers(self):
        return self._buffers

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for param in self._parameters.values():
            param.zero_grad()

    def state_arrays(self):
        """
        every parameter and buffer as `param.<name>` / `buffer.<name>` arrays
        :return: OrderedDict
        """
        state = OrderedDict()
        for name, param in self._parameters.items():
            state[f'param.{name}'] = param.data
        for name, buffer in self._buffers.items():
            state[f'buffer.{name}'] = buffer
        return state

    def load_state_arrays(self, state: dict):
        """
        copy arrays into the registered parameters/buffers, every shape must match
        :param state:
        :return:
        """
        expected = self.state_arrays()
        missing = [k for k in expected if k not in state]
        if missing:
            raise CheckpointError(f'missing entries: {", ".join(missing[:5])}')
        for key, current in expected.items():
            value = np.asarray(state[key], dtype=np.float32)
            if value.shape != current.shape:
                raise CheckpointError(f'{key}: checkpoint shape {value.shape} != model shape {current.shape}')
        for name, param in self._parameters.items():
            param.data = np.array(state[f'param.{name}'], dtype=np.float32)
            param.zero_grad()
        for name, buffer in self._buffers.items():
            buffer[...] = state[f'buffer.{name}']
