# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 12:40'

Usage:
3d spectral-spatial encoder, multi-scale aggregation, 2d head, differentiable keypoint detection

>>> net = HyKeyNetwork(HyKeyConfig(), seed=0).eval()
>>> out = net.forward(cube)
>>> out.keypoints.shape, out.descriptors.shape
>>> ((N, 2), (N, 64))
"""
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Tuple

import numpy as np
from scipy.ndimage import maximum_filter

from .base_module import BaseModule
from .exception import CheckpointError, DimensionError, InvalidConfigException, NonFiniteError, UnsupportedInputError
from .hsidata import HsiCube
from .log_obj import log
from .tensor import (Tensor, batchnorm2d, bilinear_upsample, concat, conv2d, conv3d, grid_sample2d, l2_normalize,
                     maxpool3d, no_grad, relu, sigmoid, softmax, spectral_avgpool, stack)
from .utils import (CHECKPOINT_MAGIC, CHECKPOINT_VERSION, array_to_bytes, bytes_to_array, pack_header,
                    unpack_header)

TRAIN = 'train'
EVAL = 'eval'
# spatial size multiple required by three 2x poolings
SIZE_MULTIPLE = 8


@dataclass
class HyKeyConfig:
    channels: Tuple[int, int, int] = (32, 64, 128)
    descriptor_dim: int = 64
    dkd_radius: int = 2
    temperature: float = 0.1
    score_threshold: float = 0.1
    train_detected: int = 400
    train_random: int = 400
    max_keypoints: int = 1024
    border: int = 4
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.validate()

    def validate(self):
        if len(self.channels) != 3 or min(self.channels) < 1:
            raise InvalidConfigException(f'three positive channel counts expected, got {self.channels}',
                                         field='model.channels')
        if self.descriptor_dim < 8:
            raise InvalidConfigException('descriptor_dim must be >= 8', field='model.descriptor_dim')
        if self.dkd_radius < 1:
            raise InvalidConfigException('dkd_radius must be >= 1', field='model.dkd_radius')
        if self.temperature <= 0:
            raise InvalidConfigException('temperature must be > 0', field='model.temperature')
        if min(self.train_detected, self.train_random, self.max_keypoints, self.border) < 0:
            raise InvalidConfigException('keypoint budgets and border must be >= 0', field='model.max_keypoints')
        return self

    @property
    def aggregated_channels(self):
        return sum(self.channels)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, mapping):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping or {}) - names)
        if unknown:
            raise InvalidConfigException(f'unknown model keys {unknown}', field=f'model.{unknown[0]}')
        return cls(**(mapping or {}))


@dataclass
class Keypoints:
    """
    detections of one score map; points/scores are Tensors so train-mode refinement carries gradients
    """
    points: Tensor
    scores: Tensor
    pixels: np.ndarray
    probabilities: Tensor = None
    detected: int = 0

    def __len__(self):
        return len(self.pixels)

    def numpy(self):
        return self.points.data.astype(np.float64)


@dataclass
class NetworkOutput:
    score_map: Tensor
    descriptor_map: Tensor
    keypoints: Keypoints
    descriptors: Tensor
    extra: dict = field(default_factory=dict)

    @property
    def points(self):
        return self.keypoints.points

    @property
    def scores(self):
        return self.keypoints.scores


def kaiming_uniform(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def prepare_input(cube):
    """
    HsiCube / [bands, H, W] array -> [1, bands, H, W] Tensor, min-max scaled to [0, 1] per cube
    :param cube:
    :return:
    """
    if isinstance(cube, Tensor):
        data = cube.data
        return cube if data.ndim == 4 else Tensor(data[None])
    if not isinstance(cube, HsiCube):
        cube = HsiCube(np.asarray(cube, dtype=np.float32))
    return Tensor(cube.normalised().data[None])


def nms_candidates(scores, radius):
    """
    greedy non-maximum suppression over (2r+1)^2 windows
    a pixel is a candidate when it is >= every value in its window and lies r pixels inside the border;
    candidates are visited by (-score, row-major index) and suppress all others within Chebyshev distance r
    :param scores: [H, W] array
    :param radius:
    :return: (rows, cols) of the survivors in visiting order
    """
    height, width = scores.shape
    size = 2 * radius + 1
    local_max = scores >= maximum_filter(scores, size=size, mode='constant', cval=-np.inf)
    local_max[:radius, :] = False
    local_max[height - radius:, :] = False
    local_max[:, :radius] = False
    local_max[:, width - radius:] = False
    rows, cols = np.nonzero(local_max)
    flat = rows * width + cols
    order = np.lexsort((flat, -scores[rows, cols]))
    taken = np.zeros((height, width), dtype=bool)
    keep = []
    for i in order:
        r, c = rows[i], cols[i]
        if taken[r, c]:
            continue
        keep.append(i)
        taken[max(r - radius, 0):r + radius + 1, max(c - radius, 0):c + radius + 1] = True
    keep = np.asarray(keep, dtype=np.int64)
    return rows[keep], cols[keep]


def window_offsets(radius):
    """(dx, dy) of every window cell in row-major order"""
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return dx.reshape(-1).astype(np.float64), dy.reshape(-1).astype(np.float64)


def refine_keypoints(score_map: Tensor, pixels, radius, temperature):
    """
    soft-argmax: expectation of window offsets under softmax(window / temperature)
    :param score_map: [H, W] Tensor
    :param pixels: (N, 2) integer (x, y)
    :return: (points [N, 2] Tensor, window probabilities [N, (2r+1)^2] Tensor)
    """
    height, width = score_map.shape
    dx, dy = window_offsets(radius)
    xs = np.clip(pixels[:, 0:1] + dx[None].astype(np.int64), 0, width - 1)
    ys = np.clip(pixels[:, 1:2] + dy[None].astype(np.int64), 0, height - 1)
    patches = score_map[ys, xs]
    probabilities = softmax(patches * (1.0 / temperature), axis=1)
    offset_x = (probabilities * dx[None]).sum(axis=1)
    offset_y = (probabilities * dy[None]).sum(axis=1)
    points = stack([offset_x + pixels[:, 0].astype(np.float64), offset_y + pixels[:, 1].astype(np.float64)],
                   axis=1)
    return points, probabilities


def dkd_detect(score_map, mode, config: HyKeyConfig, rng=None, mask=None, max_keypoints=None):
    """
    :param score_map: [H, W] Tensor (or array)
    :param mode: 'train' | 'eval'
    :param config:
    :param rng: numpy Generator for the random training keypoints
    :param mask: optional [H, W] validity mask for the random keypoints
    :param max_keypoints: eval budget, config.max_keypoints by default
    :return: Keypoints; eval: thresholded NMS survivors, train: top NMS survivors then random locations
    """
    score_map = score_map if isinstance(score_map, Tensor) else Tensor(score_map)
    scores = score_map.data
    if not np.all(np.isfinite(scores)):
        raise NonFiniteError('score map contains non-finite values')
    height, width = scores.shape
    rows, cols = nms_candidates(scores, config.dkd_radius)
    if mode == EVAL:
        budget = config.max_keypoints if max_keypoints is None else max_keypoints
        keep = scores[rows, cols] > config.score_threshold
        rows, cols = rows[keep][:budget], cols[keep][:budget]
        detected = len(rows)
    elif mode == TRAIN:
        rows, cols = rows[:config.train_detected], cols[:config.train_detected]
        detected = len(rows)
        if config.train_random > 0:
            rng = np.random.default_rng(0) if rng is None else rng
            border = max(config.border, config.dkd_radius)
            valid = np.zeros((height, width), dtype=bool)
            valid[border:height - border, border:width - border] = True
            if mask is not None:
                valid &= np.asarray(mask, dtype=bool)
            candidates = np.flatnonzero(valid)
            if len(candidates):
                picked = rng.choice(candidates, size=min(config.train_random, len(candidates)), replace=False)
                rows = np.concatenate([rows, picked // width])
                cols = np.concatenate([cols, picked % width])
    else:
        raise InvalidConfigException(f'detection mode must be train or eval, got {mode!r}', field='mode')

    pixels = np.stack([cols, rows], axis=1).astype(np.int64).reshape(-1, 2)
    if len(pixels) == 0:
        return Keypoints(Tensor(np.zeros((0, 2))), Tensor(np.zeros(0)), pixels, None, 0)
    points, probabilities = refine_keypoints(score_map, pixels, config.dkd_radius, config.temperature)
    sampled = grid_sample2d(score_map.reshape(1, height, width), points).reshape(-1)
    return Keypoints(points, sampled, pixels, probabilities, detected)


class HyKeyNetwork(BaseModule):
    """
    three 3d encoder blocks (two stride-(2,1,1) convs + relu, then a (1,2,2) max pool), spectral mean,
    bilinear upsampling, concatenation, and a conv-bn-relu-conv head split into score and descriptors
    """

    def __init__(self, config: HyKeyConfig = None, seed=0):
        super(HyKeyNetwork, self).__init__()
        self.config = config or HyKeyConfig()
        rng = np.random.default_rng(seed)
        c_in = 1
        for block, c_out in enumerate(self.config.channels, start=1):
            for conv, channels in ((1, c_in), (2, c_out)):
                self.add_parameter(f'block{block}.conv{conv}.weight', kaiming_uniform(rng, (c_out, channels, 3, 3, 3)))
                self.add_parameter(f'block{block}.conv{conv}.bias', np.zeros(c_out))
            c_in = c_out
        dim = self.config.descriptor_dim
        aggregated = self.config.aggregated_channels
        self.add_parameter('head.conv1.weight', kaiming_uniform(rng, (dim, aggregated, 3, 3)))
        self.add_parameter('head.conv1.bias', np.zeros(dim))
        self.add_parameter('head.bn.gamma', np.ones(dim))
        self.add_parameter('head.bn.beta', np.zeros(dim))
        self.add_buffer('head.bn.running_mean', np.zeros(dim))
        self.add_buffer('head.bn.running_var', np.ones(dim))
        self.add_parameter('head.conv2.weight', kaiming_uniform(rng, (dim + 1, dim, 3, 3)))
        self.add_parameter('head.conv2.bias', np.zeros(dim + 1))

    def _p(self, name):
        return self._parameters[name]

    def encoder_forward(self, x):
        """
        :param x: [1, bands, H, W] Tensor (HsiCube / arrays are converted)
        :return: (three blocks [c_i, S_i, Hp/2^i, Wp/2^i], original (H, W), padded (Hp, Wp))
        """
        x = prepare_input(x)
        if x.ndim != 4 or x.shape[0] != 1:
            raise DimensionError(f'encoder expects [1, bands, H, W], got {x.shape}')
        bands, height, width = x.shape[1:]
        if bands < 4:
            raise UnsupportedInputError(f'at least 4 spectral bands are required, got {bands}')
        padded_h = -(-height // SIZE_MULTIPLE) * SIZE_MULTIPLE
        padded_w = -(-width // SIZE_MULTIPLE) * SIZE_MULTIPLE
        if (padded_h, padded_w) != (height, width):
            pad = [(0, 0), (0, 0), (0, padded_h - height), (0, padded_w - width)]
            pad_mode = 'reflect' if padded_h - height < height and padded_w - width < width else 'edge'
            x = Tensor(np.pad(x.data, pad, mode=pad_mode))
        blocks = []
        for block in range(1, 4):
            for conv in (1, 2):
                x = relu(conv3d(x, self._p(f'block{block}.conv{conv}.weight'), self._p(f'block{block}.conv{conv}.bias'),
                                stride=(2, 1, 1)))
            x = maxpool3d(x)
            blocks.append(x)
        return blocks, (height, width), (padded_h, padded_w)

    def aggregate(self, blocks, size, padded=None):
        """
        :param blocks: encoder outputs
        :param size: (H, W) to crop to
        :param padded: (Hp, Wp) the blocks were computed at, defaults to size
        :return: [c1 + c2 + c3, H, W]
        """
        padded = tuple(padded or size)
        maps = [bilinear_upsample(spectral_avgpool(block), padded) for block in blocks]
        features = concat(maps, axis=0)
        if padded != tuple(size):
            features = features[:, :size[0], :size[1]]
        return features

    def head_forward(self, features):
        """
        :param features: [224, H, W]
        :return: (score map [H, W] in (0, 1), descriptor map [D, H, W] unit norm per pixel)
        """
        x = conv2d(features, self._p('head.conv1.weight'), self._p('head.conv1.bias'))
        x = batchnorm2d(x, self._p('head.bn.gamma'), self._p('head.bn.beta'), self._buffers['head.bn.running_mean'],
                        self._buffers['head.bn.running_var'], self.training, self.config.bn_momentum,
                        self.config.bn_eps)
        x = conv2d(relu(x), self._p('head.conv2.weight'), self._p('head.conv2.bias'))
        score_map = sigmoid(x[0])
        descriptor_map = l2_normalize(x[1:], axis=0)
        return score_map, descriptor_map

    def dense_forward(self, cube):
        blocks, size, padded = self.encoder_forward(cube)
        return self.head_forward(self.aggregate(blocks, size, padded))

    def forward(self, cube, mode=None, rng=None, mask=None, max_keypoints=None):
        """
        :param cube: HsiCube, [bands, H, W] or [1, bands, H, W]
        :param mode: 'train' | 'eval', follows self.training when omitted
        :param rng: random training keypoints
        :param mask: validity mask for random training keypoints
        :param max_keypoints: eval budget
        :return: NetworkOutput
        """
        mode = mode or (TRAIN if self.training else EVAL)
        score_map, descriptor_map = self.dense_forward(cube)
        keypoints = dkd_detect(score_map, mode, self.config, rng, mask, max_keypoints)
        if len(keypoints):
            descriptors = l2_normalize(grid_sample2d(descriptor_map, keypoints.points), axis=1)
        else:
            descriptors = Tensor(np.zeros((0, self.config.descriptor_dim)))
        return NetworkOutput(score_map, descriptor_map, keypoints, descriptors)

    def detect(self, cube, max_keypoints=None):
        """graph-free evaluation forward"""
        with no_grad():
            return self.forward(cube, EVAL, max_keypoints=max_keypoints)

    __call__ = forward


# ---------- checkpoint ----------

def checkpoint_to_bytes(arrays: dict, metadata: dict):
    """
    magic + length-prefixed json metadata + named little-endian f32 blobs
    :param arrays: name -> array, written in insertion order
    :param metadata: json-able dict, a `blobs` index is added
    :return: bytes
    """
    meta = dict(metadata)
    meta['version'] = CHECKPOINT_VERSION
    meta['blobs'] = [{'name': name, 'shape': list(np.shape(value))} for name, value in arrays.items()]
    chunks = [CHECKPOINT_MAGIC, pack_header(meta)]
    chunks.extend(array_to_bytes(value) for value in arrays.values())
    return b''.join(chunks)


def checkpoint_from_bytes(buffer: bytes):
    """
    :param buffer:
    :return: (metadata, OrderedDict-like dict of arrays)
    """
    size = len(CHECKPOINT_MAGIC)
    if len(buffer) < size or buffer[:size - 1] != CHECKPOINT_MAGIC[:size - 1]:
        raise CheckpointError('not a HyKey checkpoint', code='E_MAGIC')
    if buffer[size - 1] != CHECKPOINT_VERSION:
        raise CheckpointError(f'checkpoint version {buffer[size - 1]} is not supported', code='E_VERSION')
    meta, offset = unpack_header(buffer, size)
    arrays = {}
    for blob in meta.get('blobs', []):
        try:
            arrays[blob['name']], offset = bytes_to_array(buffer, tuple(blob['shape']), offset)
        except Exception as e:
            raise CheckpointError(f'blob {blob.get("name")}: {e}')
    if offset != len(buffer):
        raise CheckpointError(f'{len(buffer) - offset} trailing bytes after the last blob')
    return meta, arrays


def read_checkpoint(path):
    with open(path, 'rb') as f:
        return checkpoint_from_bytes(f.read())


def load_network(path, config: HyKeyConfig = None):
    """
    build a network from a checkpoint; a given config must agree with the stored one
    :param path:
    :param config:
    :return: (HyKeyNetwork in eval mode, metadata)
    """
    meta, arrays = read_checkpoint(path)
    try:
        stored = HyKeyConfig.from_dict(meta['model'])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f'checkpoint has no usable model config: {e}')
    if config is not None and config.to_dict() != stored.to_dict():
        diff = sorted(k for k, v in config.to_dict().items() if stored.to_dict().get(k) != v)
        raise CheckpointError(f'model config mismatch on {diff}')
    network = HyKeyNetwork(stored)
    network.load_state_arrays(arrays)
    log.info(f'loaded checkpoint {path} (epoch {meta.get("epoch")}, step {meta.get("step")})')
    return network.eval(), meta
