# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:40'

Usage:
dense tensors over numpy with reverse-mode differentiation, limited to what the network and losses use

>>> x = Tensor([3.0], requires_grad=True)
>>> backward((x * x).sum())
>>> x.grad
>>> array([6.], dtype=float32)
"""
import itertools
import threading
from contextlib import contextmanager

import numpy as np

from .exception import DimensionError, NonFiniteError, UsageError
from .log_obj import log

_state = threading.local()


def _dtype():
    return getattr(_state, 'dtype', np.float32)


def _counter():
    if not hasattr(_state, 'counter'):
        _state.counter = itertools.count()
    return _state.counter


def is_grad_enabled():
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad():
    """
    operations inside do not record a graph
    :return:
    """
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def precision(dtype):
    """
    switch the floating type of newly created tensors, float32 is the default

    Usage:
    >>> with precision(np.float64):
    >>>     ok, err = gradcheck(f, [x])
    """
    previous = _dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


def _check_finite(array, op_name):
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f'non-finite input to {op_name}')


def unbroadcast(grad, shape):
    """
    sum out the axes numpy broadcasting added so `grad` matches `shape`
    :param grad:
    :param shape:
    :return:
    """
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function(object):
    """
    one differentiable operation, subclasses implement forward on arrays and backward returning
    one gradient (or None) per input
    """

    def __init__(self, *inputs):
        self.inputs = inputs
        self.output = None
        self.seq = -1

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **kwargs):
        inputs = tuple(as_tensor(item) for item in inputs)
        fn = cls(*inputs)
        data = fn.forward(*(item.data for item in inputs), **kwargs)
        requires_grad = is_grad_enabled() and any(item.requires_grad for item in inputs)
        out = Tensor(data, requires_grad=requires_grad)
        if requires_grad:
            out.creator = fn
            fn.output = out
            fn.seq = next(_counter())
        return out


class Tape(object):
    """
    the operations an output depends on, in recording order; backward visits each once in reverse
    """

    def __init__(self, nodes):
        self.nodes = nodes

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def from_output(cls, output):
        seen = {}
        stack = [output.creator] if output.creator is not None else []
        while stack:
            fn = stack.pop()
            if id(fn) in seen:
                continue
            seen[id(fn)] = fn
            for item in fn.inputs:
                if item.creator is not None and id(item.creator) not in seen:
                    stack.append(item.creator)
        return cls(sorted(seen.values(), key=lambda fn: fn.seq))

    def backward(self, output):
        grads = {id(output): np.ones_like(output.data)}
        for fn in reversed(self.nodes):
            grad = grads.pop(id(fn.output), None)
            if grad is None:
                continue
            input_grads = fn.backward(grad)
            for item, item_grad in zip(fn.inputs, input_grads):
                if item_grad is None or not item.requires_grad:
                    continue
                item_grad = np.asarray(item_grad, dtype=item.data.dtype).reshape(item.shape)
                if item.creator is None:
                    item.grad = item_grad.copy() if item.grad is None else item.grad + item_grad
                elif id(item) in grads:
                    grads[id(item)] = grads[id(item)] + item_grad
                else:
                    grads[id(item)] = item_grad


def backward(output):
    """
    populate `.grad` of every leaf with requires_grad that `output` depends on
    :param output: scalar tensor
    :return: the tape that was replayed
    """
    if output.data.size != 1:
        raise UsageError(f'backward needs a scalar output, got shape {output.shape}')
    if not output.requires_grad:
        raise UsageError('output does not depend on any tensor with requires_grad')
    tape = Tape.from_output(output)
    tape.backward(output)
    return tape


class Tensor(object):
    """dense value with optional gradient"""
    # numpy scalars defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=_dtype())
        self.requires_grad = requires_grad
        self.grad = None
        self.creator = None
        self.name = name

    def __repr__(self):
        return f'Tensor(shape={self.shape}, requires_grad={self.requires_grad})'

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __add__(self, other):
        return Add.apply(self, other)

    def __radd__(self, other):
        return Add.apply(other, self)

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return Mul.apply(other, self)

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __rtruediv__(self, other):
        return Div.apply(other, self)

    def __neg__(self):
        return Mul.apply(self, -1.0)

    def __pow__(self, exponent):
        return PowScalar.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    @property
    def T(self):
        return self.transpose()

    def sum(self, axis=None, keepdims=False):
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return Sum.apply(self, axis=axis, keepdims=keepdims) * (1.0 / max(int(count), 1))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes):
        return Transpose.apply(self, axes=axes or None)

    def exp(self):
        return Exp.apply(self)

    def log(self):
        return Log.apply(self)

    def sqrt(self):
        return Sqrt.apply(self)

    def clip(self, low, high):
        return Clip.apply(self, low=low, high=high)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


class Add(Function):

    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Sub(Function):

    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)


class Mul(Function):

    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad * b.data, a.shape), unbroadcast(grad * a.data, b.shape)


class Div(Function):

    def forward(self, a, b):
        return a / b

    def backward(self, grad):
        a, b = self.inputs
        return (unbroadcast(grad / b.data, a.shape),
                unbroadcast(-grad * a.data / (b.data * b.data), b.shape))


class PowScalar(Function):

    def forward(self, a, exponent):
        self.exponent = exponent
        return a ** exponent

    def backward(self, grad):
        a = self.inputs[0].data
        return (grad * self.exponent * a ** (self.exponent - 1.0),)


class MatMul(Function):

    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f'matmul of {a.shape} and {b.shape}')
        return a @ b

    def backward(self, grad):
        a, b = self.inputs
        return grad @ b.data.T, a.data.T @ grad


class Sum(Function):

    def forward(self, a, axis=None, keepdims=False):
        self.axis = axis
        self.keepdims = keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        shape = self.inputs[0].shape
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, tuple(a % len(shape) for a in np.atleast_1d(self.axis)))
        return (np.broadcast_to(grad, shape),)


class Reshape(Function):

    def forward(self, a, shape):
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Function):

    def forward(self, a, axes=None):
        self.axes = axes
        return np.transpose(a, axes)

    def backward(self, grad):
        if self.axes is None:
            return (np.transpose(grad),)
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):

    def forward(self, a, index):
        self.index = index
        return a[index]

    def backward(self, grad):
        out = np.zeros_like(self.inputs[0].data)
        np.add.at(out, self.index, grad)
        return (out,)


class Concat(Function):

    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [item.shape[axis] for item in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


class Where(Function):

    def forward(self, a, b, condition):
        self.condition = condition
        return np.where(condition, a, b)

    def backward(self, grad):
        a, b = self.inputs
        return (unbroadcast(np.where(self.condition, grad, 0.0), a.shape),
                unbroadcast(np.where(self.condition, 0.0, grad), b.shape))


class Exp(Function):

    def forward(self, a):
        self.result = np.exp(a)
        return self.result

    def backward(self, grad):
        return (grad * self.result,)


class Log(Function):

    def forward(self, a):
        return np.log(a)

    def backward(self, grad):
        return (grad / self.inputs[0].data,)


class Sqrt(Function):

    def forward(self, a):
        self.result = np.sqrt(a)
        return self.result

    def backward(self, grad):
        return (grad * 0.5 / self.result,)


class Clip(Function):

    def forward(self, a, low, high):
        self.inside = (a >= low) & (a <= high)
        return np.clip(a, low, high)

    def backward(self, grad):
        return (grad * self.inside,)


def concat(tensors, axis=0):
    return Concat.apply(*tensors, axis=axis)


def stack(tensors, axis=0):
    expanded = [as_tensor(item).reshape(item.shape[:axis] + (1,) + item.shape[axis:]) for item in tensors]
    return Concat.apply(*expanded, axis=axis)


def where(condition, a, b):
    return Where.apply(a, b, condition=np.asarray(condition, dtype=bool))


# ---------- convolution / pooling / resampling ----------

class ConvNd(Function):
    """3x3(x3) convolution, padding 1, accumulated tap by tap so memory stays at the output size"""

    def forward(self, x, weights, bias, stride):
        dims = x.ndim - 1
        if weights.ndim != dims + 2 or weights.shape[2:] != (3,) * dims:
            raise DimensionError(f'expected a {"x".join(["3"] * dims)} kernel, got weights {weights.shape}')
        if weights.shape[1] != x.shape[0]:
            raise DimensionError(f'weights expect {weights.shape[1]} input channels, input has {x.shape[0]}')
        if bias.shape != (weights.shape[0],):
            raise DimensionError(f'bias shape {bias.shape} does not match {weights.shape[0]} output channels')
        if len(stride) != dims or min(stride) < 1:
            raise DimensionError(f'invalid stride {stride} for {dims} spatial dims')
        self.stride = tuple(int(s) for s in stride)
        self.padded = np.pad(x, [(0, 0)] + [(1, 1)] * dims)
        # (n + 2*1 - 3) // s + 1, an extent of 1 stays 1
        self.out_sizes = tuple((n - 1) // s + 1 for n, s in zip(x.shape[1:], self.stride))
        out = np.empty((weights.shape[0],) + self.out_sizes, dtype=x.dtype)
        out[...] = bias.reshape((-1,) + (1,) * dims)
        for offset in itertools.product(range(3), repeat=dims):
            tap = weights[(slice(None), slice(None)) + offset]
            out += np.tensordot(tap, self.padded[self._window(offset)], axes=(1, 0))
        return out

    def _window(self, offset):
        return (slice(None),) + tuple(slice(o, o + s * (n - 1) + 1, s)
                                      for o, s, n in zip(offset, self.stride, self.out_sizes))

    def backward(self, grad):
        x, weights, _ = self.inputs
        dims = x.ndim - 1
        spatial = list(range(1, dims + 1))
        grad_padded = np.zeros_like(self.padded)
        grad_weights = np.zeros_like(weights.data)
        for offset in itertools.product(range(3), repeat=dims):
            window = self._window(offset)
            tap_index = (slice(None), slice(None)) + offset
            grad_padded[window] += np.tensordot(weights.data[tap_index], grad, axes=(0, 0))
            grad_weights[tap_index] = np.tensordot(grad, self.padded[window], axes=(spatial, spatial))
        grad_x = grad_padded[(slice(None),) + (slice(1, -1),) * dims]
        return grad_x, grad_weights, grad.sum(axis=tuple(spatial))


def conv3d(x, weights, bias, stride=(1, 1, 1), padding=1):
    """
    :param x: [c_in, S, H, W]
    :param weights: [c_out, c_in, 3, 3, 3]
    :param bias: [c_out]
    :param stride: (spectral, h, w)
    :param padding: only 1 is supported
    :return: [c_out, S', H', W']
    """
    if padding != 1:
        raise UsageError('conv3d supports padding 1 only')
    if as_tensor(x).ndim != 4:
        raise DimensionError(f'conv3d expects [c, S, H, W], got {as_tensor(x).shape}')
    return ConvNd.apply(x, weights, bias, stride=tuple(stride))


def conv2d(x, weights, bias, padding=1):
    """
    :param x: [c_in, H, W]
    :param weights: [c_out, c_in, 3, 3]
    :param bias: [c_out]
    :param padding: only 1 is supported
    :return: [c_out, H, W]
    """
    if padding != 1:
        raise UsageError('conv2d supports padding 1 only')
    if as_tensor(x).ndim != 3:
        raise DimensionError(f'conv2d expects [c, H, W], got {as_tensor(x).shape}')
    return ConvNd.apply(x, weights, bias, stride=(1, 1))


class MaxPool3d(Function):
    """kernel and stride (1, 2, 2), odd trailing rows/columns are dropped"""

    def forward(self, x):
        if x.ndim != 4:
            raise DimensionError(f'maxpool3d expects [c, S, H, W], got {x.shape}')
        c, s, h, w = x.shape
        h2, w2 = h // 2, w // 2
        if h2 == 0 or w2 == 0:
            raise DimensionError(f'maxpool3d needs H, W >= 2, got {x.shape}')
        windows = x[:, :, :2 * h2, :2 * w2].reshape(c, s, h2, 2, w2, 2)
        windows = windows.transpose(0, 1, 2, 4, 3, 5).reshape(c, s, h2, w2, 4)
        self.argmax = windows.argmax(axis=-1)[..., None]
        return np.take_along_axis(windows, self.argmax, axis=-1)[..., 0]

    def backward(self, grad):
        c, s, h, w = self.inputs[0].shape
        h2, w2 = grad.shape[2:]
        windows = np.zeros((c, s, h2, w2, 4), dtype=grad.dtype)
        np.put_along_axis(windows, self.argmax, grad[..., None], axis=-1)
        windows = windows.reshape(c, s, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(c, s, 2 * h2, 2 * w2)
        out = np.zeros((c, s, h, w), dtype=grad.dtype)
        out[:, :, :2 * h2, :2 * w2] = windows
        return (out,)


def bilinear_weights(size_in, size_out):
    """
    [size_out, size_in] interpolation matrix, align-corners-false convention
    :param size_in:
    :param size_out:
    :return:
    """
    source = (np.arange(size_out, dtype=np.float64) + 0.5) * (size_in / size_out) - 0.5
    source = np.clip(source, 0.0, size_in - 1)
    low = np.floor(source).astype(np.int64)
    high = np.minimum(low + 1, size_in - 1)
    frac = source - low
    matrix = np.zeros((size_out, size_in), dtype=np.float64)
    rows = np.arange(size_out)
    np.add.at(matrix, (rows, low), 1.0 - frac)
    np.add.at(matrix, (rows, high), frac)
    return matrix


class BilinearUpsample(Function):

    def forward(self, x, size):
        if x.ndim != 3:
            raise DimensionError(f'bilinear upsample expects [c, h, w], got {x.shape}')
        height, width = size
        if height < 1 or width < 1:
            raise DimensionError(f'invalid target size {size}')
        self.rows = bilinear_weights(x.shape[1], height).astype(x.dtype)
        self.cols = bilinear_weights(x.shape[2], width).astype(x.dtype)
        partial = np.tensordot(x, self.cols, axes=(2, 1))
        return np.tensordot(self.rows, partial, axes=(1, 1)).transpose(1, 0, 2)

    def backward(self, grad):
        partial = np.tensordot(grad, self.cols, axes=(2, 0))
        return (np.tensordot(self.rows, partial, axes=(0, 1)).transpose(1, 0, 2),)


def maxpool3d(x):
    return MaxPool3d.apply(x)


def spectral_avgpool(x):
    """[c, S, H, W] -> [c, H, W]"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f'spectral avgpool expects [c, S, H, W], got {x.shape}')
    return x.mean(axis=1)


def bilinear_upsample(x, size):
    return BilinearUpsample.apply(x, size=tuple(int(v) for v in size))


def pool_resample(x, mode, size=None):
    """
    :param x:
    :param mode: 'maxpool3d' | 'spectral_avgpool' | 'bilinear_upsample'
    :param size: (H_t, W_t) for upsampling
    :return:
    """
    if mode == 'maxpool3d':
        return maxpool3d(x)
    if mode == 'spectral_avgpool':
        return spectral_avgpool(x)
    if mode == 'bilinear_upsample':
        if size is None:
            raise UsageError('bilinear_upsample needs a target size')
        return bilinear_upsample(x, size)
    raise UsageError(f'unknown resample mode {mode!r}')


class GridSample2d(Function):
    """bilinear lookup of a [D, H, W] map at [N, 2] (x, y) pixel points, clamped to the image"""

    def forward(self, feature_map, points):
        if feature_map.ndim != 3:
            raise DimensionError(f'grid sample expects a [D, H, W] map, got {feature_map.shape}')
        depth, height, width = feature_map.shape
        points = points.reshape(-1, 2)
        self.shape = (depth, height, width)
        x, y = points[:, 0], points[:, 1]
        self.inside_x = (x >= 0) & (x <= width - 1) & (width > 1)
        self.inside_y = (y >= 0) & (y <= height - 1) & (height > 1)
        x = np.clip(x, 0, width - 1)
        y = np.clip(y, 0, height - 1)
        x0 = np.clip(np.floor(x), 0, max(width - 2, 0)).astype(np.int64)
        y0 = np.clip(np.floor(y), 0, max(height - 2, 0)).astype(np.int64)
        x1 = np.minimum(x0 + 1, width - 1)
        y1 = np.minimum(y0 + 1, height - 1)
        wx = (x - x0).astype(feature_map.dtype)
        wy = (y - y0).astype(feature_map.dtype)
        self.index = (y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1)
        flat = feature_map.reshape(depth, -1)
        self.corners = [flat[:, i] for i in self.index]
        self.weights = ((1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy)
        self.wx, self.wy = wx, wy
        out = sum(c * w for c, w in zip(self.corners, self.weights))
        return out.T

    def backward(self, grad):
        depth, height, width = self.shape
        flat = np.zeros((height * width, depth), dtype=grad.dtype)
        for index, weight in zip(self.index, self.weights):
            np.add.at(flat, index, grad * weight[:, None])
        grad_map = flat.T.reshape(depth, height, width)
        v00, v01, v10, v11 = self.corners
        dx = (1 - self.wy) * (v01 - v00) + self.wy * (v11 - v10)
        dy = (1 - self.wx) * (v10 - v00) + self.wx * (v11 - v01)
        grad_x = (grad.T * dx).sum(axis=0) * self.inside_x
        grad_y = (grad.T * dy).sum(axis=0) * self.inside_y
        grad_points = np.stack([grad_x, grad_y], axis=1).reshape(self.inputs[1].shape)
        return grad_map, grad_points


def grid_sample2d(feature_map, points):
    """
    :param feature_map: [D, H, W]
    :param points: [N, 2] sub-pixel (x, y)
    :return: [N, D]
    """
    feature_map, points = as_tensor(feature_map), as_tensor(points)
    if points.size == 0:
        return Tensor(np.zeros((0, feature_map.shape[0])))
    return GridSample2d.apply(feature_map, points)


# ---------- elementwise ----------

class ReLU(Function):

    def forward(self, x):
        _check_finite(x, 'relu')
        self.mask = x > 0
        return x * self.mask

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):

    def forward(self, x):
        _check_finite(x, 'sigmoid')
        positive = x >= 0
        z = np.exp(-np.abs(x))
        self.result = np.where(positive, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)
        return self.result

    def backward(self, grad):
        return (grad * self.result * (1.0 - self.result),)


class L2Normalize(Function):

    def forward(self, x, axis):
        _check_finite(x, 'l2_normalize')
        self.axis = axis
        norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
        self.zero = norm == 0
        if np.any(self.zero):
            log.warning(f'l2_normalize: {int(self.zero.sum())} zero-norm vectors emitted as zero')
        self.norm = np.where(self.zero, 1.0, norm).astype(x.dtype)
        self.result = x / self.norm
        return self.result

    def backward(self, grad):
        y = self.result
        out = (grad - y * np.sum(grad * y, axis=self.axis, keepdims=True)) / self.norm
        return (np.where(self.zero, 0.0, out),)


class Softmax(Function):

    def forward(self, x, axis):
        _check_finite(x, 'softmax')
        self.axis = axis
        shifted = np.exp(x - x.max(axis=axis, keepdims=True))
        self.result = shifted / shifted.sum(axis=axis, keepdims=True)
        return self.result

    def backward(self, grad):
        y = self.result
        return (y * (grad - np.sum(grad * y, axis=self.axis, keepdims=True)),)


class LogSoftmax(Function):

    def forward(self, x, axis):
        _check_finite(x, 'log_softmax')
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        log_sum = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        self.result = shifted - log_sum
        return self.result

    def backward(self, grad):
        return (grad - np.exp(self.result) * grad.sum(axis=self.axis, keepdims=True),)


class Huber(Function):

    def forward(self, x, delta):
        _check_finite(x, 'huber')
        if delta <= 0:
            raise UsageError(f'huber delta must be > 0, got {delta}')
        self.delta = delta
        magnitude = np.abs(x)
        self.quadratic = magnitude <= delta
        return np.where(self.quadratic, 0.5 * x * x, delta * (magnitude - 0.5 * delta)).astype(x.dtype)

    def backward(self, grad):
        x = self.inputs[0].data
        return (grad * np.where(self.quadratic, x, self.delta * np.sign(x)),)


class BatchNorm2d(Function):
    """
    per-channel normalisation of [C, H, W]; training uses batch statistics and updates the running
    buffers in place (unbiased variance), evaluation uses the frozen buffers
    """

    def forward(self, x, gamma, beta, running_mean, running_var, training, momentum, eps):
        _check_finite(x, 'batchnorm2d')
        if x.ndim != 3 or gamma.shape != (x.shape[0],):
            raise DimensionError(f'batchnorm2d over {x.shape} with {gamma.shape} parameters')
        self.training = training
        if training:
            mean = x.mean(axis=(1, 2))
            var = x.var(axis=(1, 2))
            count = x.shape[1] * x.shape[2]
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * var * count / max(count - 1, 1)
        else:
            mean, var = running_mean, running_var
        self.inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        self.normalised = (x - mean[:, None, None]) * self.inv_std[:, None, None]
        return gamma[:, None, None] * self.normalised + beta[:, None, None]

    def backward(self, grad):
        gamma = self.inputs[1].data
        xhat = self.normalised
        grad_gamma = (grad * xhat).sum(axis=(1, 2))
        grad_beta = grad.sum(axis=(1, 2))
        grad_xhat = grad * gamma[:, None, None]
        if not self.training:
            return grad_xhat * self.inv_std[:, None, None], grad_gamma, grad_beta
        count = xhat.shape[1] * xhat.shape[2]
        grad_x = (count * grad_xhat
                  - grad_xhat.sum(axis=(1, 2), keepdims=True)
                  - xhat * (grad_xhat * xhat).sum(axis=(1, 2), keepdims=True))
        grad_x *= self.inv_std[:, None, None] / count
        return grad_x, grad_gamma, grad_beta


def relu(x):
    return ReLU.apply(x)


def sigmoid(x):
    return Sigmoid.apply(x)


def l2_normalize(x, axis=0):
    return L2Normalize.apply(x, axis=axis)


def softmax(x, axis=-1):
    return Softmax.apply(x, axis=axis)


def log_softmax(x, axis=-1):
    return LogSoftmax.apply(x, axis=axis)


def huber(x, delta=1.0):
    return Huber.apply(x, delta=float(delta))


def batchnorm2d(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    return BatchNorm2d.apply(x, gamma, beta, running_mean=running_mean, running_var=running_var,
                             training=training, momentum=momentum, eps=eps)


def elementwise(kind, x, **kwargs):
    """
    :param kind: relu | sigmoid | l2_normalize | softmax | log_softmax | huber | batchnorm2d
    :param x:
    :param kwargs: axis / delta / batchnorm parameters
    :return:
    """
    functions = {
        'relu': relu,
        'sigmoid': sigmoid,
        'l2_normalize': l2_normalize,
        'softmax': softmax,
        'log_softmax': log_softmax,
        'huber': huber,
        'batchnorm2d': batchnorm2d,
    }
    if kind not in functions:
        raise UsageError(f'unknown elementwise kind {kind!r}')
    return functions[kind](x, **kwargs)


def gradcheck(func, inputs, h=1e-3, rtol=1e-3, atol=1e-6):
    """
    compare backward() against central finite differences, evaluated in float64
    :param func: callable(*tensors) -> scalar Tensor
    :param inputs: arrays or tensors, each becomes a float64 leaf
    :param h: finite difference step
    :param rtol: relative tolerance
    :param atol: absolute floor
    :return: (ok, worst relative error)
    """
    worst = 0.0
    ok = True
    with precision(np.float64):
        leaves = [Tensor(np.array(as_tensor(item).data, dtype=np.float64), requires_grad=True) for item in inputs]
        backward(func(*leaves))
        for leaf in leaves:
            analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
            flat = leaf.data.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                with no_grad():
                    flat[i] = original + h
                    plus = func(*leaves).item()
                    flat[i] = original - h
                    minus = func(*leaves).item()
                flat[i] = original
                numeric = (plus - minus) / (2 * h)
                a = analytic.reshape(-1)[i]
                diff = abs(a - numeric)
                if diff <= atol:
                    continue
                error = diff / max(abs(a), abs(numeric))
                worst = max(worst, error)
                if error >= rtol:
                    ok = False
    return ok, worst
