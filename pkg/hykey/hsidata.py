# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 11:05'

Usage:
hyperspectral cubes, the 4x4 mosaic layout, the cube file format and the synthetic dual-view scenes

>>> spec = SyntheticPairSpec(mode='planar', seed=7)
>>> pair = generate_planar_pair(generate_base_cube(spec), spec)
>>> pair.homography.matrix
"""
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import gaussian_filter, map_coordinates

from .exception import (BadMagicError, DegenerateSampleError, HeaderError, HyKeyException, InvalidConfigException,
                        ManifestError, MosaicShapeError, PayloadLengthError, UnsupportedVersionError,
                        WavelengthOrderError)
from .geometry import (Homography, Intrinsics, RelativePose, quaternion_to_rotation,
                       relative_pose, rotation_about_axis, rotation_to_quaternion)
from .log_obj import log
from .utils import (CUBE_DTYPE, CUBE_MAGIC, CUBE_VERSION, DEFAULT_BANDS, MANIFEST_NAME, MANIFEST_VERSION,
                    WAVELENGTH_RANGE_NM, array_to_bytes, bytes_to_array, dump_json, pack_header, try_times,
                    try_times_default, unpack_header)

PLANAR = 'planar'
EPIPOLAR = 'epipolar'
CUBE_SUFFIX = '.hcube'
# nominal centre wavelengths rendered as R, G, B
PSEUDO_RGB_NM = (600.0, 540.0, 460.0)


def default_wavelengths(bands=DEFAULT_BANDS):
    return np.linspace(WAVELENGTH_RANGE_NM[0], WAVELENGTH_RANGE_NM[1], bands)


@dataclass
class HsiCube:
    """band-sequential radiance volume [bands, height, width]"""
    data: np.ndarray
    wavelengths: np.ndarray = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise HeaderError(f'cube data must be [bands, height, width], got {self.data.shape}')
        if self.wavelengths is None:
            self.wavelengths = default_wavelengths(self.data.shape[0])
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64).reshape(-1)
        check_wavelengths(self.wavelengths, self.data.shape[0])

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def in_unit_range(self):
        return bool(np.all(self.data >= 0.0) and np.all(self.data <= 1.0))

    def normalised(self):
        """
        per-cube min-max scaling to [0, 1], a constant cube becomes zeros
        :return: HsiCube
        """
        low, high = float(self.data.min()), float(self.data.max())
        if high - low <= 0:
            return HsiCube(np.zeros_like(self.data), self.wavelengths)
        return HsiCube((self.data - low) / (high - low), self.wavelengths)

    def pseudo_rgb(self):
        """
        bands nearest 600/540/460 nm as R/G/B
        :return: [H, W, 3] float in [0, 1]
        """
        index = [int(np.argmin(np.abs(self.wavelengths - nm))) for nm in PSEUDO_RGB_NM]
        return np.clip(np.transpose(self.data[index], (1, 2, 0)), 0.0, 1.0)


def check_wavelengths(wavelengths, bands):
    if len(wavelengths) != bands:
        raise HeaderError(f'{len(wavelengths)} wavelengths declared for {bands} bands')
    if len(wavelengths) > 1 and not np.all(np.diff(wavelengths) > 0):
        raise WavelengthOrderError('wavelengths must be strictly increasing')


@dataclass
class MosaicFrame:
    """single-plane raw frame of the 4x4 snapshot sensor"""
    data: np.ndarray
    pattern: np.ndarray = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.pattern is None:
            self.pattern = np.arange(16).reshape(4, 4)
        self.pattern = np.asarray(self.pattern, dtype=np.int64)
        if self.data.ndim != 2:
            raise MosaicShapeError(f'mosaic frame must be 2-d, got {self.data.shape}')
        height, width = self.data.shape
        if height % 4 or width % 4 or height == 0 or width == 0:
            raise MosaicShapeError(f'mosaic size {width}x{height} is not divisible by 4')
        if self.pattern.shape != (4, 4) or sorted(self.pattern.reshape(-1).tolist()) != list(range(16)):
            raise MosaicShapeError('pattern must be a 4x4 permutation of band indices 0..15')

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


def demosaic_4x4(frame: MosaicFrame, wavelengths=None):
    """
    unstack super-pixels into a [16, H/4, W/4] cube
    :param frame:
    :param wavelengths: defaults to the 460-600 nm grid
    :return: HsiCube

    Usage:
    >>> demosaic_4x4(MosaicFrame(np.zeros((1088, 2048)))).shape
    >>> (16, 272, 512)
    """
    h4, w4 = frame.height // 4, frame.width // 4
    cells = frame.data.reshape(h4, 4, w4, 4).transpose(1, 3, 0, 2).reshape(16, h4, w4)
    cube = np.empty_like(cells)
    cube[frame.pattern.reshape(-1)] = cells
    return HsiCube(cube, wavelengths)


def mosaic_4x4(cube: HsiCube, pattern=None):
    """
    write a 16-band cube back into the raw layout, inverse of demosaic_4x4
    :param cube:
    :param pattern:
    :return: MosaicFrame
    """
    pattern = np.arange(16).reshape(4, 4) if pattern is None else np.asarray(pattern, dtype=np.int64)
    if cube.bands != 16:
        raise MosaicShapeError(f'a 4x4 mosaic holds 16 bands, cube has {cube.bands}')
    cells = cube.data[pattern.reshape(-1)].reshape(4, 4, cube.height, cube.width)
    raw = cells.transpose(2, 0, 3, 1).reshape(cube.height * 4, cube.width * 4)
    return MosaicFrame(raw, pattern)


def cube_to_bytes(cube: HsiCube):
    header = {
        'bands': cube.bands,
        'height': cube.height,
        'width': cube.width,
        'dtype': CUBE_DTYPE,
        'wavelengths_nm': [float(v) for v in cube.wavelengths],
    }
    return CUBE_MAGIC + pack_header(header) + array_to_bytes(cube.data)


def cube_from_bytes(buffer: bytes):
    """
    parse a cube file, every malformation has its own error code
    :param buffer:
    :return: HsiCube
    """
    size = len(CUBE_MAGIC)
    if len(buffer) < size or buffer[:size - 1] != CUBE_MAGIC[:size - 1]:
        raise BadMagicError('not a HyKey cube file')
    if buffer[size - 1] != CUBE_VERSION:
        raise UnsupportedVersionError(f'cube format version {buffer[size - 1]} is not supported')
    header, offset = unpack_header(buffer, size)
    try:
        bands, height, width = int(header['bands']), int(header['height']), int(header['width'])
        wavelengths = np.asarray(header['wavelengths_nm'], dtype=np.float64)
        dtype = header['dtype']
    except (KeyError, TypeError, ValueError) as e:
        raise HeaderError(f'incomplete cube header: {e}')
    if dtype != CUBE_DTYPE:
        raise HeaderError(f'unsupported dtype {dtype!r}')
    if min(bands, height, width) < 1:
        raise HeaderError(f'invalid cube shape {bands}x{height}x{width}')
    check_wavelengths(wavelengths, bands)
    data, end = bytes_to_array(buffer, (bands, height, width), offset)
    if end != len(buffer):
        raise PayloadLengthError(f'{len(buffer) - end} trailing bytes after the payload')
    return HsiCube(data, wavelengths)


def save_cube(cube: HsiCube, path):
    with open(path, 'wb') as f:
        f.write(cube_to_bytes(cube))
    return path


def load_cube(path):
    with open(path, 'rb') as f:
        return cube_from_bytes(f.read())


def read_cube_header(path):
    """magic + header only, used by `hykey inspect`"""
    with open(path, 'rb') as f:
        head = f.read(len(CUBE_MAGIC) + 4)
        if len(head) < len(CUBE_MAGIC) or head[:len(CUBE_MAGIC) - 1] != CUBE_MAGIC[:-1]:
            raise BadMagicError('not a HyKey cube file')
        if head[len(CUBE_MAGIC) - 1] != CUBE_VERSION:
            raise UnsupportedVersionError(f'cube format version {head[len(CUBE_MAGIC) - 1]} is not supported')
        f.seek(0)
        buffer = f.read()
    header, _ = unpack_header(buffer, len(CUBE_MAGIC))
    return header


def cube_io(action, path, cube: HsiCube = None):
    """
    :param action: 'save' | 'load'
    :param path:
    :param cube: required for save
    :return: the cube
    """
    if action == 'save':
        save_cube(cube, path)
        return cube
    if action == 'load':
        return load_cube(path)
    raise ValueError(f'unknown cube_io action {action!r}')


@dataclass
class SyntheticPairSpec:
    """
    geometric and photometric ranges of one synthetic sample; every range is symmetric around the
    identity or given as (low, high)
    """
    mode: str = PLANAR
    seed: int = 0
    height: int = 32
    width: int = 32
    bands: int = DEFAULT_BANDS
    rotation_deg: float = 15.0
    scale_range: Tuple[float, float] = (0.8, 1.25)
    translation_frac: float = 0.1
    perspective: float = 1e-4
    gain_range: Tuple[float, float] = (0.7, 1.3)
    gamma_range: Tuple[float, float] = (0.8, 1.2)
    noise_std: float = 0.01
    band_gain_range: Tuple[float, float] = (0.9, 1.1)
    baseline_ratio: Tuple[float, float] = (0.05, 0.3)
    camera_roll_deg: float = 5.0
    depth_mm: float = 100.0
    relief: float = 0.1
    regions: int = 12

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in (PLANAR, EPIPOLAR):
            raise InvalidConfigException(f'mode must be planar or epipolar, got {self.mode!r}', field='mode')
        for name in ('rotation_deg', 'translation_frac', 'perspective', 'noise_std', 'camera_roll_deg', 'relief'):
            if getattr(self, name) < 0:
                raise InvalidConfigException(f'{name} must be >= 0', field=name)
        for name in ('scale_range', 'gain_range', 'gamma_range', 'band_gain_range', 'baseline_ratio'):
            low, high = getattr(self, name)
            if low < 0 or high < low:
                raise InvalidConfigException(f'{name} must satisfy 0 <= low <= high, got {(low, high)}', field=name)
        if self.scale_range[0] <= 0 or self.gamma_range[0] <= 0:
            raise InvalidConfigException('scale and gamma ranges must exclude 0', field='scale_range')
        if self.height < 8 or self.width < 8 or self.bands < 1:
            raise InvalidConfigException(f'cube size {self.bands}x{self.height}x{self.width} too small',
                                         field='height')
        if self.depth_mm <= 0 or self.regions < 1:
            raise InvalidConfigException('depth_mm and regions must be positive', field='depth_mm')

    @classmethod
    def identity(cls, mode=PLANAR, seed=0, **kwargs):
        """all geometric and photometric ranges collapsed to the identity"""
        values = dict(rotation_deg=0.0, scale_range=(1.0, 1.0), translation_frac=0.0, perspective=0.0,
                      gain_range=(1.0, 1.0), gamma_range=(1.0, 1.0), noise_std=0.0, band_gain_range=(1.0, 1.0),
                      baseline_ratio=(0.0, 0.0), camera_roll_deg=0.0)
        values.update(kwargs)
        return cls(mode=mode, seed=seed, **values)

    def to_dict(self):
        return asdict(self)


def derive_seed(seed, index):
    """independent child seed for item `index` of a run seeded with `seed`"""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


class SpectralTexture(object):
    """
    smooth spatial regions, each with its own cubic-spline spectral signature, modulated by a blurred
    intensity detail layer; defined on [0, 1]^2 and sampled bilinearly
    """

    def __init__(self, rng, bands, regions=12, resolution=64):
        self.bands = bands
        self.resolution = resolution
        grid = (np.arange(resolution) + 0.5) / resolution
        gy, gx = np.meshgrid(grid, grid, indexing='ij')
        # region weights: gaussian blobs, sharpened into a soft partition
        logits = []
        for _ in range(regions):
            cx, cy = rng.random(2)
            width = rng.uniform(0.08, 0.3)
            logits.append(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2 * width ** 2))
        logits = np.stack(logits) * 4.0
        weights = np.exp(logits - logits.max(axis=0, keepdims=True))
        weights /= weights.sum(axis=0, keepdims=True)
        # signatures: splines through random control values across the band axis
        knots = np.linspace(0, bands - 1, 5) if bands > 1 else np.zeros(5)
        positions = np.arange(bands)
        signatures = []
        for _ in range(regions):
            values = rng.uniform(0.1, 0.9, size=5)
            if bands > 1:
                signatures.append(np.clip(CubicSpline(knots, values)(positions), 0.0, 1.0))
            else:
                signatures.append(values[:1])
        signatures = np.stack(signatures)
        detail = gaussian_filter(rng.random((resolution, resolution)), sigma=1.5, mode='wrap')
        detail = (detail - detail.min()) / max(detail.max() - detail.min(), 1e-12)
        self.grid = np.einsum('kb,kyx->byx', signatures, weights) * (0.35 + 0.65 * detail)[None]

    def sample(self, u, v):
        """
        :param u: horizontal texture coordinate, any shape, 0..1 spans the texture
        :param v: vertical texture coordinate, same shape
        :return: [bands, *shape]
        """
        rows = np.asarray(v, dtype=np.float64) * self.resolution - 0.5
        cols = np.asarray(u, dtype=np.float64) * self.resolution - 0.5
        coords = np.stack([rows.reshape(-1), cols.reshape(-1)])
        out = np.stack([map_coordinates(band, coords, order=1, mode='mirror') for band in self.grid])
        return out.reshape((self.bands,) + np.shape(u))


def generate_base_cube(spec: SyntheticPairSpec, rng=None):
    """
    :param spec:
    :param rng: defaults to a generator seeded with spec.seed
    :return: HsiCube with values in [0, 1]
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    texture = SpectralTexture(rng, spec.bands, spec.regions)
    ys, xs = np.meshgrid(np.arange(spec.height), np.arange(spec.width), indexing='ij')
    data = texture.sample((xs + 0.5) / spec.width, (ys + 0.5) / spec.height)
    return HsiCube(np.clip(data, 0.0, 1.0))


@try_times_default
def sample_homography(rng, spec: SyntheticPairSpec):
    """
    rotation, isotropic scale, translation and perspective about the image centre
    :param rng:
    :param spec:
    :return: Homography, |det| >= 1e-8
    """
    centre = np.array([(spec.width - 1) / 2.0, (spec.height - 1) / 2.0])
    angle = math.radians(rng.uniform(-spec.rotation_deg, spec.rotation_deg))
    low, high = spec.scale_range
    scale = math.exp(rng.uniform(math.log(low), math.log(high)))
    shift = rng.uniform(-spec.translation_frac, spec.translation_frac, size=2) * [spec.width, spec.height]
    px, py = rng.uniform(-spec.perspective, spec.perspective, size=2)
    to_origin = np.array([[1.0, 0.0, -centre[0]], [0.0, 1.0, -centre[1]], [0.0, 0.0, 1.0]])
    back = np.array([[1.0, 0.0, centre[0] + shift[0]], [0.0, 1.0, centre[1] + shift[1]], [0.0, 0.0, 1.0]])
    cos, sin = math.cos(angle), math.sin(angle)
    similarity = np.array([[scale * cos, -scale * sin, 0.0], [scale * sin, scale * cos, 0.0], [0.0, 0.0, 1.0]])
    projective = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [px, py, 1.0]])
    matrix = back @ similarity @ projective @ to_origin
    if abs(np.linalg.det(matrix / matrix[2, 2])) < 1e-8:
        raise DegenerateSampleError('sampled homography is singular')
    return Homography(matrix)


def _source_coordinates(homography, shape):
    height, width = shape
    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing='ij')
    target = np.stack([xs.reshape(-1), ys.reshape(-1), np.ones(xs.size)], axis=1)
    source = target @ np.linalg.inv(getattr(homography, 'matrix', homography)).T
    w = source[:, 2]
    ahead = np.abs(w) > 1e-12
    safe = np.where(ahead, w, 1.0)
    sx, sy = source[:, 0] / safe, source[:, 1] / safe
    return sx.reshape(shape), sy.reshape(shape), ahead.reshape(shape)


def warp_validity_mask(homography, shape, source_shape=None):
    """
    :param homography: maps source pixels to target pixels
    :param shape: target (height, width)
    :param source_shape: defaults to `shape`
    :return: bool mask, True where the back-projected source lies inside the source image
    """
    source_height, source_width = source_shape or shape
    sx, sy, ahead = _source_coordinates(homography, shape)
    return ahead & (sx >= 0) & (sx <= source_width - 1) & (sy >= 0) & (sy <= source_height - 1)


def warp_cube(data, homography, shape=None):
    """
    inverse bilinear warp per band, out-of-source pixels are 0 and invalid
    :param data: [bands, H, W]
    :param homography: source -> target
    :param shape: target (height, width), defaults to the source size
    :return: (warped [bands, h, w] float32, validity mask [h, w])
    """
    data = np.asarray(data, dtype=np.float32)
    shape = tuple(shape or data.shape[1:])
    sx, sy, _ = _source_coordinates(homography, shape)
    mask = warp_validity_mask(homography, shape, data.shape[1:])
    coords = np.stack([sy.reshape(-1), sx.reshape(-1)])
    warped = np.stack([map_coordinates(band, coords, order=1, mode='constant', cval=0.0).reshape(shape)
                       for band in data])
    warped[:, ~mask] = 0.0
    return warped.astype(np.float32), mask


def photometric_jitter(data, rng, spec: SyntheticPairSpec):
    """
    clip(gain * x^gamma * band_gain[b] + noise), band_gain is a smooth spline across bands
    :param data: [bands, H, W] in [0, 1]
    :param rng:
    :param spec:
    :return: float32 array in [0, 1]
    """
    bands = data.shape[0]
    gain = rng.uniform(*spec.gain_range)
    gamma = rng.uniform(*spec.gamma_range)
    controls = rng.uniform(*spec.band_gain_range, size=4)
    if bands > 1:
        band_gain = CubicSpline(np.linspace(0, bands - 1, 4), controls)(np.arange(bands))
        band_gain = np.clip(band_gain, *spec.band_gain_range)
    else:
        band_gain = controls[:1]
    noise = rng.normal(0.0, spec.noise_std, size=data.shape) if spec.noise_std > 0 else 0.0
    out = gain * np.power(np.clip(data, 0.0, 1.0), gamma) * band_gain[:, None, None] + noise
    return np.clip(out, 0.0, 1.0).astype(np.float32)


@dataclass
class PlanarPair:
    cube0: HsiCube
    cube1: HsiCube
    homography: Homography
    mask: np.ndarray


def generate_planar_pair(base: HsiCube, spec: SyntheticPairSpec, rng=None):
    """
    warp `base` by a sampled homography and jitter it photometrically
    :param base: I0
    :param spec:
    :param rng: defaults to a generator seeded with spec.seed
    :return: PlanarPair (I0, I1, H01, validity mask of I1)
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    homography = sample_homography(rng, spec)
    warped, mask = warp_cube(base.data, homography)
    jittered = photometric_jitter(warped, rng, spec)
    jittered[:, ~mask] = 0.0
    return PlanarPair(base, HsiCube(jittered, base.wavelengths), homography, mask)


def look_at(centre, target, roll_rad=0.0):
    """
    world-to-camera rotation for a camera at `centre` whose optical axis points at `target`
    :return: 3x3
    """
    forward = np.asarray(target, np.float64) - np.asarray(centre, np.float64)
    forward /= np.linalg.norm(forward)
    down_hint = np.array([0.0, 1.0, 0.0])
    right = np.cross(down_hint, forward)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return rotation_about_axis((0.0, 0.0, 1.0), roll_rad) @ rotation


class HeightField(object):
    """Z = depth + amplitude * g(X, Y), g a sum of gaussian bumps scaled into [-1, 1]"""

    def __init__(self, rng, depth, amplitude, extent, bumps=4):
        self.depth = depth
        self.amplitude = amplitude
        self.centres = rng.uniform(-extent / 2, extent / 2, size=(bumps, 2))
        self.widths = rng.uniform(0.15, 0.35, size=bumps) * extent
        self.signs = rng.choice([-1.0, 1.0], size=bumps)
        self.norm = 1.0
        xs = np.linspace(-extent, extent, 129)
        gx, gy = np.meshgrid(xs, xs)
        self.norm = max(float(np.abs(self._raw(gx, gy)).max()), 1e-12)

    def _raw(self, x, y):
        out = np.zeros(np.shape(x))
        for (cx, cy), width, sign in zip(self.centres, self.widths, self.signs):
            out += sign * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width ** 2))
        return out

    def __call__(self, x, y):
        if self.amplitude == 0:
            return np.full(np.shape(x), self.depth)
        return self.depth + self.amplitude * np.clip(self._raw(x, y) / self.norm, -1.0, 1.0)


@dataclass
class SyntheticScene:
    """textured height field seen by pinhole cameras, world frame == camera 0 frame"""
    surface: HeightField
    texture: SpectralTexture
    extent: float

    def cast(self, intrinsics: Intrinsics, rotation, translation, points, iterations=60):
        """
        first intersection of pixel rays with the surface by bisection
        :param points: (N, 2) pixels
        :return: (N, 3) world points
        """
        centre = -np.asarray(rotation).T @ np.asarray(translation)
        rays = np.concatenate([np.asarray(points, np.float64), np.ones((len(points), 1))], axis=1)
        directions = rays @ intrinsics.inverse.T @ np.asarray(rotation)
        surface = self.surface
        margin = surface.amplitude * 1.01 + 1e-9
        dz = directions[:, 2]
        low = (surface.depth - margin - centre[2]) / dz
        high = (surface.depth + margin - centre[2]) / dz
        for _ in range(iterations):
            middle = 0.5 * (low + high)
            p = centre + middle[:, None] * directions
            above = p[:, 2] < surface(p[:, 0], p[:, 1])
            low = np.where(above, middle, low)
            high = np.where(above, high, middle)
        s = 0.5 * (low + high)
        return centre + s[:, None] * directions

    def albedo(self, world):
        """[bands, N] reflectance at world points"""
        return self.texture.sample(0.5 + world[:, 0] / self.extent, 0.5 + world[:, 1] / self.extent)

    def render(self, intrinsics: Intrinsics, rotation, translation, shape):
        height, width = shape
        ys, xs = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64),
                             indexing='ij')
        pixels = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)
        world = self.cast(intrinsics, rotation, translation, pixels)
        return np.clip(self.albedo(world), 0.0, 1.0).reshape(-1, height, width).astype(np.float32)


@dataclass
class EpipolarPair:
    cube0: HsiCube
    cube2: HsiCube
    k0: Intrinsics
    k2: Intrinsics
    pose: RelativePose
    scene: SyntheticScene = field(repr=False, default=None)

    def ground_truth(self, points0):
        """
        exact correspondences of view-0 pixels
        :param points0: (N, 2)
        :return: (points2 (N, 2), visible (N,) bool)
        """
        points0 = np.asarray(points0, dtype=np.float64).reshape(-1, 2)
        world = self.scene.cast(self.k0, np.eye(3), np.zeros(3), points0)
        camera2 = world @ self.pose.rotation.T + self.pose.translation
        depth = camera2[:, 2]
        safe = np.where(depth > 1e-9, depth, 1.0)
        projected = camera2 @ self.k2.matrix.T
        points2 = projected[:, :2] / safe[:, None]
        height, width = self.cube2.height, self.cube2.width
        visible = ((depth > 1e-9) & (points2[:, 0] >= 0) & (points2[:, 0] <= width - 1)
                   & (points2[:, 1] >= 0) & (points2[:, 1] <= height - 1))
        return points2, visible


def default_intrinsics(height, width):
    focal = float(width)
    return Intrinsics(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0)


@try_times(20)
def _draw_cameras(rng, spec: SyntheticPairSpec, scene: SyntheticScene, k: Intrinsics):
    ratio = rng.uniform(*spec.baseline_ratio)
    direction = rng.normal(size=3) * np.array([1.0, 1.0, 0.2])
    direction /= max(np.linalg.norm(direction), 1e-12)
    baseline = ratio * spec.depth_mm
    centre = direction * baseline
    roll = math.radians(rng.uniform(-spec.camera_roll_deg, spec.camera_roll_deg))
    rotation = look_at(centre, (0.0, 0.0, spec.depth_mm), roll)
    translation = -rotation @ centre
    if baseline > 0:
        # most of view 0 has to stay visible in view 2
        grid = np.stack(np.meshgrid(np.linspace(0, spec.width - 1, 8), np.linspace(0, spec.height - 1, 8)),
                        axis=-1).reshape(-1, 2)
        reference = EpipolarPair(None, HsiCube(np.zeros((1, spec.height, spec.width))), k, k,
                                 RelativePose(rotation, translation), scene)
        _, visible = reference.ground_truth(grid)
        if visible.mean() < 0.5:
            raise DegenerateSampleError(f'only {visible.mean():.0%} of view 0 is covisible')
    return RelativePose(rotation, translation)


def generate_epipolar_pair(spec: SyntheticPairSpec, rng=None):
    """
    render a textured height field from two pinhole cameras with a known relative pose
    :param spec: baseline / depth ratio drawn from spec.baseline_ratio
    :param rng: defaults to a generator seeded with spec.seed
    :return: EpipolarPair (I0, I2, K0, K2, pose X2 = R X0 + t)
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    k = default_intrinsics(spec.height, spec.width)
    extent = 1.6 * spec.depth_mm * spec.width / k.fx
    surface = HeightField(rng, spec.depth_mm, spec.relief * spec.depth_mm * 0.5, extent)
    scene = SyntheticScene(surface, SpectralTexture(rng, spec.bands, spec.regions), extent)
    pose = _draw_cameras(rng, spec, scene, k)
    shape = (spec.height, spec.width)
    data0 = scene.render(k, np.eye(3), np.zeros(3), shape)
    data2 = photometric_jitter(scene.render(k, pose.rotation, pose.translation, shape), rng, spec)
    return EpipolarPair(HsiCube(data0), HsiCube(data2), k, k, pose, scene)


@dataclass
class TrainingTriplet:
    """I0, its warped partner I1 with H01, and optionally a second real view I2"""
    cube0: HsiCube
    cube1: HsiCube
    homography: Homography
    mask1: np.ndarray = None
    cube2: Optional[HsiCube] = None
    k0: Optional[Intrinsics] = None
    k2: Optional[Intrinsics] = None
    pose: Optional[RelativePose] = None

    def __post_init__(self):
        if self.mask1 is None:
            self.mask1 = warp_validity_mask(self.homography, self.cube1.shape[1:], self.cube0.shape[1:])

    @property
    def has_epipolar(self):
        return self.cube2 is not None and self.pose is not None


def generate_triplet(spec: SyntheticPairSpec):
    """
    planar mode: textured base cube + warp; epipolar mode additionally renders the second view
    :param spec:
    :return: TrainingTriplet
    """
    rng = np.random.default_rng(spec.seed)
    if spec.mode == EPIPOLAR:
        views = generate_epipolar_pair(spec, rng)
        planar = generate_planar_pair(views.cube0, spec, rng)
        return TrainingTriplet(views.cube0, planar.cube1, planar.homography, planar.mask,
                               views.cube2, views.k0, views.k2, views.pose)
    planar = generate_planar_pair(generate_base_cube(spec, rng), spec, rng)
    return TrainingTriplet(planar.cube0, planar.cube1, planar.homography, planar.mask)


# ---------- manifest ----------

@dataclass
class FrameRecord:
    cube_path: str
    intrinsics: Optional[dict] = None
    pose: Optional[dict] = None
    sequence_id: str = ''
    frame_index: int = 0

    def validate(self, where):
        if self.intrinsics is not None:
            try:
                Intrinsics(**{k: float(self.intrinsics[k]) for k in ('fx', 'fy', 'cx', 'cy')})
            except (KeyError, TypeError, ValueError, HyKeyException) as e:
                raise ManifestError(f'{where}.intrinsics: {e}')
        if self.pose is not None:
            quaternion = np.asarray(self.pose.get('quaternion', ()), dtype=np.float64)
            if quaternion.shape != (4,) or abs(np.linalg.norm(quaternion) - 1.0) > 1e-6:
                raise ManifestError(f'{where}.pose.quaternion must be a unit (w, x, y, z)')
            if np.asarray(self.pose.get('translation_mm', ()), dtype=np.float64).shape != (3,):
                raise ManifestError(f'{where}.pose.translation_mm must have 3 entries')

    def camera(self):
        """(Intrinsics, rotation, translation) or None when the frame is not calibrated"""
        if self.intrinsics is None or self.pose is None:
            return None
        k = Intrinsics(**{key: float(self.intrinsics[key]) for key in ('fx', 'fy', 'cx', 'cy')})
        return (k, quaternion_to_rotation(self.pose['quaternion']),
                np.asarray(self.pose['translation_mm'], dtype=np.float64))


@dataclass
class TripletRecord:
    id: str
    frame0: int
    frame1: int
    homography: list
    frame2: Optional[int] = None


@dataclass
class DatasetManifest:
    """json index of a dataset directory, cube paths are relative to it"""
    mode: str
    seed: int
    frames: List[FrameRecord] = field(default_factory=list)
    triplets: List[TripletRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    root: str = ''
    version: int = MANIFEST_VERSION

    def validate(self):
        if self.version != MANIFEST_VERSION:
            raise ManifestError(f'manifest version {self.version} is not supported')
        for i, frame in enumerate(self.frames):
            frame.validate(f'frames[{i}]')
        count = len(self.frames)
        for i, triplet in enumerate(self.triplets):
            for name in ('frame0', 'frame1', 'frame2'):
                index = getattr(triplet, name)
                if index is not None and not 0 <= index < count:
                    raise ManifestError(f'triplets[{i}].{name} = {index} is out of range')
            if np.asarray(triplet.homography, dtype=np.float64).shape != (3, 3):
                raise ManifestError(f'triplets[{i}].homography must be 3x3')
        return self

    @property
    def has_epipolar(self):
        return any(t.frame2 is not None for t in self.triplets)

    def __len__(self):
        return len(self.triplets)

    def cube(self, index):
        return load_cube(os.path.join(self.root, self.frames[index].cube_path))

    def load_triplet(self, index):
        record = self.triplets[index]
        cube0, cube1 = self.cube(record.frame0), self.cube(record.frame1)
        triplet = TrainingTriplet(cube0, cube1, Homography(record.homography))
        if record.frame2 is not None:
            camera0 = self.frames[record.frame0].camera()
            camera2 = self.frames[record.frame2].camera()
            if camera0 is None or camera2 is None:
                raise ManifestError(f'triplet {record.id} has a second view without calibration')
            triplet.cube2 = self.cube(record.frame2)
            triplet.k0, triplet.k2 = camera0[0], camera2[0]
            triplet.pose = relative_pose(camera0[1], camera0[2], camera2[1], camera2[2])
        return triplet

    def to_dict(self):
        return {
            'version': self.version,
            'mode': self.mode,
            'seed': self.seed,
            'config': self.config,
            'frames': [asdict(f) for f in self.frames],
            'triplets': [asdict(t) for t in self.triplets],
        }

    def save(self, directory):
        path = os.path.join(directory, MANIFEST_NAME)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(dump_json(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, directory):
        path = directory if os.path.isfile(directory) else os.path.join(directory, MANIFEST_NAME)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                document = json.load(f)
        except FileNotFoundError:
            raise ManifestError(f'no {MANIFEST_NAME} in {directory}')
        except ValueError as e:
            raise ManifestError(f'{path} is not valid json: {e}')
        try:
            manifest = cls(
                mode=document['mode'],
                seed=int(document['seed']),
                frames=[FrameRecord(**f) for f in document['frames']],
                triplets=[TripletRecord(**t) for t in document['triplets']],
                config=document.get('config', {}),
                root=os.path.dirname(os.path.abspath(path)),
                version=int(document.get('version', MANIFEST_VERSION)),
            )
        except (KeyError, TypeError) as e:
            raise ManifestError(f'malformed manifest {path}: {e}')
        return manifest.validate()


def _frame_record(path, sequence_id, frame_index, k=None, rotation=None, translation=None):
    record = FrameRecord(path, sequence_id=sequence_id, frame_index=frame_index)
    if k is not None:
        record.intrinsics = k.to_dict()
        record.pose = {'quaternion': rotation_to_quaternion(rotation).tolist(),
                       'translation_mm': np.asarray(translation, np.float64).tolist()}
    return record


def _write_item(directory, index, spec):
    triplet = generate_triplet(spec)
    sequence = f'{index:05d}'
    names = []
    for view, cube in (('0', triplet.cube0), ('1', triplet.cube1), ('2', triplet.cube2)):
        if cube is None:
            continue
        name = os.path.join('cubes', f'{sequence}_{view}{CUBE_SUFFIX}')
        save_cube(cube, os.path.join(directory, name))
        names.append(name)
    return triplet, names


def write_dataset(directory, mode, count, seed, spec: SyntheticPairSpec = None, threads=1, config=None):
    """
    generate `count` triplets into `directory` (cubes/ + manifest.json); same seed, same bytes
    :param directory:
    :param mode: planar | epipolar
    :param count:
    :param seed:
    :param spec: template ranges, its seed is replaced per item
    :param threads: >1 generates items on a thread pool
    :param config: echoed into the manifest
    :return: DatasetManifest
    """
    template = replace(spec or SyntheticPairSpec(), mode=mode)
    os.makedirs(os.path.join(directory, 'cubes'), exist_ok=True)
    specs = [replace(template, seed=derive_seed(seed, i)) for i in range(count)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            items = list(pool.map(lambda args: _write_item(directory, *args), enumerate(specs)))
    else:
        items = [_write_item(directory, i, s) for i, s in enumerate(specs)]

    manifest = DatasetManifest(mode=mode, seed=int(seed), config=dict(config or {}, spec=template.to_dict()),
                               root=os.path.abspath(directory))
    for i, (triplet, names) in enumerate(items):
        sequence = f'{i:05d}'
        first = len(manifest.frames)
        if triplet.has_epipolar:
            manifest.frames.append(_frame_record(names[0], sequence, 0, triplet.k0, np.eye(3), np.zeros(3)))
        else:
            manifest.frames.append(_frame_record(names[0], sequence, 0))
        manifest.frames.append(_frame_record(names[1], sequence, 1))
        frame2 = None
        if triplet.has_epipolar:
            manifest.frames.append(_frame_record(names[2], sequence, 2, triplet.k2, triplet.pose.rotation,
                                                 triplet.pose.translation))
            frame2 = first + 2
        manifest.triplets.append(TripletRecord(sequence, first, first + 1, triplet.homography.matrix.tolist(),
                                               frame2))
    manifest.save(directory)
    log.info(f'wrote {count} {mode} triplets to {directory}')
    return manifest


class SyntheticDataset(object):
    """
    in-memory counterpart of a written dataset: item i is generate_triplet with derive_seed(seed, i)

    Usage:
    >>> data = SyntheticDataset(PLANAR, 500, seed=0, spec=SyntheticPairSpec(height=32, width=32))
    >>> data.load_triplet(3).cube1.shape
    >>> (16, 32, 32)
    """

    def __init__(self, mode, count, seed, spec: SyntheticPairSpec = None):
        if count < 0:
            raise InvalidConfigException(f'count must be >= 0, got {count}', field='count')
        self.mode = mode
        self.count = int(count)
        self.seed = int(seed)
        self.spec = replace(spec or SyntheticPairSpec(), mode=mode)
        self.spec.validate()

    def __len__(self):
        return self.count

    @property
    def has_epipolar(self):
        return self.mode == EPIPOLAR and self.count > 0

    def load_triplet(self, index):
        if not 0 <= index < self.count:
            raise IndexError(f'triplet {index} out of range for {self.count} items')
        return generate_triplet(replace(self.spec, seed=derive_seed(self.seed, index)))
