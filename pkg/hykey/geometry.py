# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 10:20'

Usage:
projective and epipolar geometry in float64 numpy; sampson_distance also accepts Tensors so the
losses can differentiate through it
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exception import (AmbiguityError, DegenerateMotionError, EpipoleDegenerateError, GeometryError,
                        PointAtInfinityError)

# sigma grid, as multiples of the threshold, for the marginalised inlier weights
SIGMA_GRID = (0.25, 0.5, 1.0, 2.0)


@dataclass
class Homography:
    """3x3 projective map, normalised so the bottom-right entry is 1 when it is nonzero"""
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64).reshape(3, 3)
        if abs(matrix[2, 2]) > 1e-12:
            matrix = matrix / matrix[2, 2]
        if abs(np.linalg.det(matrix)) <= 1e-10:
            raise GeometryError(f'singular homography, det={np.linalg.det(matrix):.3e}')
        self.matrix = matrix

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    def inverse(self):
        return Homography(np.linalg.inv(self.matrix))

    def __call__(self, points):
        return apply_homography(self, points)


@dataclass
class Intrinsics:
    """pinhole camera, zero skew"""
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f'focal lengths must be > 0, got fx={self.fx}, fy={self.fy}')

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse(self):
        return np.linalg.inv(self.matrix)

    @classmethod
    def from_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(float(matrix[0, 0]), float(matrix[1, 1]), float(matrix[0, 2]), float(matrix[1, 2]))

    def to_dict(self):
        return {'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy}


@dataclass
class RelativePose:
    """X2 = R X0 + t"""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-6):
            raise GeometryError('rotation is not orthonormal')
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-6:
            raise GeometryError('rotation determinant is not +1')

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def inverse(self):
        return RelativePose(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass
class FundamentalMatrix:
    """rank 2, Frobenius-normalised"""
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64).reshape(3, 3)
        norm = np.linalg.norm(matrix)
        if norm == 0:
            raise GeometryError('zero fundamental matrix')
        self.matrix = matrix / norm

    @property
    def T(self):
        return FundamentalMatrix(self.matrix.T)


@dataclass
class CorrespondenceSet:
    """matched points; index0/index1 refer back to the keypoint lists they came from"""
    p0: np.ndarray
    p1: np.ndarray
    similarity: np.ndarray = None
    index0: np.ndarray = None
    index1: np.ndarray = None

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=np.float64).reshape(-1, 2)
        self.p1 = np.asarray(self.p1, dtype=np.float64).reshape(-1, 2)
        count = len(self.p0)
        if len(self.p1) != count:
            raise GeometryError(f'{count} points in view 0 but {len(self.p1)} in view 1')
        if not (np.all(np.isfinite(self.p0)) and np.all(np.isfinite(self.p1))):
            raise GeometryError('non-finite correspondence coordinates')
        self.similarity = np.ones(count) if self.similarity is None else np.asarray(self.similarity, np.float64)
        self.index0 = np.arange(count) if self.index0 is None else np.asarray(self.index0, np.int64)
        self.index1 = np.arange(count) if self.index1 is None else np.asarray(self.index1, np.int64)

    def __len__(self):
        return len(self.p0)

    def subset(self, mask):
        return CorrespondenceSet(self.p0[mask], self.p1[mask], self.similarity[mask],
                                 self.index0[mask], self.index1[mask])

    def swapped(self):
        return CorrespondenceSet(self.p1, self.p0, self.similarity, self.index1, self.index0)


@dataclass
class EstimationResult:
    """robust estimation outcome; failures are results, not exceptions"""
    model: Optional[object]
    inliers: np.ndarray
    success: bool
    iterations: int = 0
    score: float = math.inf
    message: str = ''
    extra: dict = field(default_factory=dict)


def _matrix(value):
    return np.asarray(getattr(value, 'matrix', value), dtype=np.float64)


def to_homogeneous(points):
    points = np.asarray(points, dtype=np.float64)
    return np.concatenate([points, np.ones(points.shape[:-1] + (1,))], axis=-1)


def apply_homography(homography, points):
    """
    :param homography: Homography or 3x3 array
    :param points: (2,) or (N, 2)
    :return: mapped points, same shape
    """
    matrix = _matrix(homography)
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    mapped = to_homogeneous(points.reshape(-1, 2)) @ matrix.T
    w = mapped[:, 2]
    if np.any(np.abs(w) <= 1e-12):
        raise PointAtInfinityError('point maps to infinity under the homography')
    out = mapped[:, :2] / w[:, None]
    return out[0] if single else out


def skew(vector):
    x, y, z = np.asarray(vector, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_about_axis(axis, angle_rad):
    """Rodrigues formula"""
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(axis)
    if norm == 0 or angle_rad == 0:
        return np.eye(3)
    k = skew(axis / norm)
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


def quaternion_to_rotation(quaternion):
    """
    :param quaternion: (w, x, y, z), unit norm within 1e-6
    :return: 3x3 rotation
    """
    w, x, y, z = np.asarray(quaternion, dtype=np.float64).reshape(4)
    norm = math.sqrt(w * w + x * x + y * y + z * z)
    if abs(norm - 1.0) > 1e-6:
        raise GeometryError(f'quaternion is not unit norm ({norm:.9f})')
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotation_to_quaternion(rotation):
    """
    :param rotation: 3x3 rotation
    :return: (w, x, y, z) with w >= 0
    """
    r = np.asarray(rotation, dtype=np.float64)
    trace = np.trace(r)
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def relative_pose(rotation0, translation0, rotation2, translation2):
    """
    relative pose between two world-to-camera poses
    :return: RelativePose with X2 = R02 X0 + t02
    """
    r0, r2 = np.asarray(rotation0, np.float64), np.asarray(rotation2, np.float64)
    r02 = r2 @ r0.T
    return RelativePose(r02, np.asarray(translation2, np.float64) - r02 @ np.asarray(translation0, np.float64))


def compose_fundamental(k0: Intrinsics, k2: Intrinsics, pose: RelativePose):
    """
    F02 = K2^-T [t]x R K0^-1
    :param k0:
    :param k2:
    :param pose:
    :return: FundamentalMatrix
    """
    if np.linalg.norm(pose.translation) <= 1e-9:
        raise DegenerateMotionError('zero translation has no epipolar geometry')
    matrix = k2.inverse.T @ skew(pose.translation) @ pose.rotation @ k0.inverse
    return FundamentalMatrix(matrix)


def average_focal(k0: Intrinsics, k2: Intrinsics):
    return (k0.fx + k0.fy + k2.fx + k2.fy) / 4.0


def normalising_matrix(k: Intrinsics, focal):
    """
    maps pixels to normalised px: K^-1 then scaled by the average focal length
    :return: 3x3 T with x_n = T x
    """
    return np.diag([focal, focal, 1.0]) @ k.inverse


def normalise_points(points, k: Intrinsics, focal):
    return apply_homography(normalising_matrix(k, focal), points)


def normalise_fundamental(fundamental, k0: Intrinsics, k2: Intrinsics, focal):
    """
    F expressed in normalised px coordinates of both views
    :return: 3x3 array
    """
    t0 = normalising_matrix(k0, focal)
    t2 = normalising_matrix(k2, focal)
    return np.linalg.inv(t2).T @ _matrix(fundamental) @ np.linalg.inv(t0)


def _sampson_terms(f, x0, y0, x1, y1):
    """elementwise, works for arrays and Tensors that broadcast"""
    fx0 = f[0, 0] * x0 + f[0, 1] * y0 + f[0, 2]
    fy0 = f[1, 0] * x0 + f[1, 1] * y0 + f[1, 2]
    fz0 = f[2, 0] * x0 + f[2, 1] * y0 + f[2, 2]
    ftx1 = f[0, 0] * x1 + f[1, 0] * y1 + f[2, 0]
    fty1 = f[0, 1] * x1 + f[1, 1] * y1 + f[2, 1]
    numerator = x1 * fx0 + y1 * fy0 + fz0
    denominator = fx0 * fx0 + fy0 * fy0 + ftx1 * ftx1 + fty1 * fty1
    return numerator, denominator


def _check_denominator(denominator):
    values = np.asarray(getattr(denominator, 'data', denominator))
    if np.any(values < 1e-18):
        raise EpipoleDegenerateError('sampson denominator vanishes (point at an epipole)')


def sampson_distance(fundamental, p0, p1):
    """
    squared Sampson distance per correspondence
    :param fundamental: FundamentalMatrix or 3x3 array
    :param p0: (2,) or (N, 2), array or Tensor
    :param p1: same shape as p0
    :return: (N,) px^2, a scalar for single points

    Usage:
    >>> sampson_distance(np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]]), (0, 0), (0, 1))
    >>> 0.5
    """
    f = np.array(_matrix(fundamental))
    if hasattr(p0, 'data') and hasattr(p0, 'creator'):
        x0, y0, x1, y1 = p0[:, 0], p0[:, 1], p1[:, 0], p1[:, 1]
        numerator, denominator = _sampson_terms(f, x0, y0, x1, y1)
        _check_denominator(denominator)
        return numerator * numerator / denominator
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    single = p0.ndim == 1
    p0, p1 = p0.reshape(-1, 2), p1.reshape(-1, 2)
    numerator, denominator = _sampson_terms(f, p0[:, 0], p0[:, 1], p1[:, 0], p1[:, 1])
    _check_denominator(denominator)
    out = numerator ** 2 / denominator
    return float(out[0]) if single else out


def sampson_matrix(fundamental, p0, p1):
    """
    all-pairs squared Sampson distance, [N0, N1]; Tensors keep their graph
    :param fundamental:
    :param p0: (N0, 2)
    :param p1: (N1, 2)
    :return:
    """
    f = np.array(_matrix(fundamental))
    x0 = p0[:, 0].reshape(-1, 1)
    y0 = p0[:, 1].reshape(-1, 1)
    x1 = p1[:, 0].reshape(1, -1)
    y1 = p1[:, 1].reshape(1, -1)
    numerator, denominator = _sampson_terms(f, x0, y0, x1, y1)
    _check_denominator(denominator)
    return numerator * numerator / denominator


def hartley_normalisation(points):
    """
    similarity moving the centroid to 0 with mean distance sqrt(2)
    :param points: (N, 2)
    :return: 3x3 T
    """
    centroid = points.mean(axis=0)
    distance = np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean()
    scale = math.sqrt(2.0) / distance if distance > 1e-12 else 1.0
    return np.array([[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]])


def dlt_homography(p0, p1, weights=None):
    """
    normalised direct linear transform
    :param p0: (N >= 4, 2)
    :param p1: (N, 2)
    :param weights: optional (N,) row weights
    :return: 3x3 array or None when degenerate
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    if len(p0) < 4:
        return None
    t0, t1 = hartley_normalisation(p0), hartley_normalisation(p1)
    a = apply_homography(t0, p0)
    b = apply_homography(t1, p1)
    x, y, u, v = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    zeros, ones = np.zeros_like(x), np.ones_like(x)
    rows_u = np.stack([-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u], axis=1)
    rows_v = np.stack([zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v], axis=1)
    if weights is not None:
        root = np.sqrt(np.asarray(weights, dtype=np.float64))[:, None]
        rows_u, rows_v = rows_u * root, rows_v * root
    system = np.concatenate([rows_u, rows_v], axis=0)
    _, singular, vt = np.linalg.svd(system)
    if singular[0] == 0 or (len(singular) >= 8 and singular[7] < 1e-9 * singular[0]):
        return None
    normalised = vt[-1].reshape(3, 3)
    matrix = np.linalg.inv(t1) @ normalised @ t0
    if abs(matrix[2, 2]) < 1e-12 or abs(np.linalg.det(matrix / matrix[2, 2])) < 1e-10:
        return None
    return matrix / matrix[2, 2]


def eight_point_fundamental(p0, p1, weights=None):
    """
    normalised 8-point algorithm with rank-2 projection, x1^T F x0 = 0
    :param p0: (N >= 8, 2)
    :param p1: (N, 2)
    :param weights: optional (N,) row weights
    :return: 3x3 array (Frobenius-normalised) or None
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    if len(p0) < 8:
        return None
    t0, t1 = hartley_normalisation(p0), hartley_normalisation(p1)
    a = to_homogeneous(apply_homography(t0, p0))
    b = to_homogeneous(apply_homography(t1, p1))
    system = (b[:, :, None] * a[:, None, :]).reshape(-1, 9)
    if weights is not None:
        system = system * np.sqrt(np.asarray(weights, dtype=np.float64))[:, None]
    _, singular, vt = np.linalg.svd(system)
    if singular[0] == 0:
        return None
    normalised = vt[-1].reshape(3, 3)
    u, s, vt2 = np.linalg.svd(normalised)
    normalised = u @ np.diag([s[0], s[1], 0.0]) @ vt2
    matrix = t1.T @ normalised @ t0
    norm = np.linalg.norm(matrix)
    if norm == 0 or not np.all(np.isfinite(matrix)):
        return None
    return matrix / norm


def _adaptive_iterations(inlier_ratio, sample_size, confidence, max_iterations):
    if inlier_ratio >= 1.0:
        return 0
    good = inlier_ratio ** sample_size
    if good <= 1e-12:
        return max_iterations
    return min(max_iterations, int(math.ceil(math.log(1.0 - confidence) / math.log(1.0 - good))))


def _lo_ransac(count, sample_size, fit, residual, score, refit, threshold, confidence, rng, max_iterations,
               lo_steps=10):
    """
    locally optimised RANSAC loop; `score` is a loss (lower is better), inliers are residual < threshold
    :return: (model, inliers, score, iterations)
    """
    best_model, best_inliers, best_score = None, np.zeros(count, dtype=bool), math.inf
    needed = max_iterations
    iteration = 0
    while iteration < needed:
        iteration += 1
        sample = rng.choice(count, sample_size, replace=False)
        model = fit(sample)
        if model is None:
            continue
        errors = residual(model)
        current = score(errors)
        if current >= best_score:
            continue
        best_model, best_inliers, best_score = model, errors < threshold, current
        # local optimisation, inlier count never decreases
        for _ in range(lo_steps):
            if best_inliers.sum() < sample_size:
                break
            candidate = refit(best_model, errors)
            if candidate is None:
                break
            candidate_errors = residual(candidate)
            candidate_score = score(candidate_errors)
            candidate_inliers = candidate_errors < threshold
            if candidate_score >= best_score or candidate_inliers.sum() < best_inliers.sum():
                break
            best_model, best_inliers, best_score, errors = (candidate, candidate_inliers, candidate_score,
                                                            candidate_errors)
        needed = _adaptive_iterations(best_inliers.mean(), sample_size, confidence, max_iterations)
    return best_model, best_inliers, best_score, iteration


def _as_correspondences(matches):
    if isinstance(matches, CorrespondenceSet):
        return matches
    p0, p1 = matches
    return CorrespondenceSet(p0, p1)


def estimate_homography_robust(matches, threshold=3.0, confidence=0.99999, seed=0, max_iterations=10000):
    """
    normalised DLT inside LO-RANSAC with MSAC scoring and a final least-squares refit on the inliers
    :param matches: CorrespondenceSet or (p0, p1)
    :param threshold: px, forward transfer error
    :param confidence:
    :param seed: RANSAC seed
    :param max_iterations:
    :return: EstimationResult with a Homography model
    """
    matches = _as_correspondences(matches)
    count = len(matches)
    if count < 4:
        return EstimationResult(None, np.zeros(count, dtype=bool), False, message=f'{count} matches < 4')
    rng = np.random.default_rng(seed)
    p0, p1 = matches.p0, matches.p1

    def residual(model):
        mapped = to_homogeneous(p0) @ model.T
        w = mapped[:, 2]
        safe = np.where(np.abs(w) > 1e-12, w, 1e-12)
        errors = np.sqrt(((mapped[:, :2] / safe[:, None] - p1) ** 2).sum(axis=1))
        return np.where(np.isfinite(errors), errors, np.inf)

    def score(errors):
        return float(np.minimum(errors ** 2, threshold ** 2).sum())

    def refit(model, errors):
        inliers = errors < threshold
        return dlt_homography(p0[inliers], p1[inliers])

    model, inliers, best, iterations = _lo_ransac(
        count, 4, lambda sample: dlt_homography(p0[sample], p1[sample]), residual, score, refit,
        threshold, confidence, rng, max_iterations)
    if model is None or inliers.sum() < 4:
        return EstimationResult(None, np.zeros(count, dtype=bool), False, iterations, message='no consensus')
    final = refit(model, residual(model))
    if final is not None:
        final_inliers = residual(final) < threshold
        if final_inliers.sum() >= inliers.sum():
            model, inliers = final, final_inliers
    return EstimationResult(Homography(model), inliers, True, iterations, score(residual(model)))


def _marginalised_weights(errors, threshold):
    """mean over the sigma grid of max(0, 1 - r^2 / sigma^2)"""
    weights = np.zeros_like(errors)
    for factor in SIGMA_GRID:
        sigma = factor * threshold
        weights += np.clip(1.0 - (errors / sigma) ** 2, 0.0, None)
    return weights / len(SIGMA_GRID)


def _marginalised_loss(errors, threshold):
    loss = 0.0
    for factor in SIGMA_GRID:
        sigma = factor * threshold
        loss += np.minimum((errors / sigma) ** 2, 1.0).sum()
    return float(loss / len(SIGMA_GRID))


def estimate_fundamental_robust(matches, k0: Intrinsics = None, k2: Intrinsics = None, threshold=1.0,
                                confidence=0.99999, seed=0, max_iterations=10000):
    """
    8-point + rank-2 inside LO-RANSAC; points are moved to normalised px when intrinsics are given, the
    inlier test is sqrt(sampson) < threshold and the scoring is marginalised over a sigma grid
    :param matches: CorrespondenceSet or (p0, p1) in pixels
    :param k0: intrinsics of view 0
    :param k2: intrinsics of view 2
    :param threshold: normalised px
    :param confidence:
    :param seed:
    :param max_iterations:
    :return: EstimationResult, model is a FundamentalMatrix in pixel coordinates
    """
    matches = _as_correspondences(matches)
    count = len(matches)
    if count < 8:
        return EstimationResult(None, np.zeros(count, dtype=bool), False, message=f'{count} matches < 8')
    if k0 is not None and k2 is not None:
        focal = average_focal(k0, k2)
        t0, t2 = normalising_matrix(k0, focal), normalising_matrix(k2, focal)
    else:
        t0 = t2 = np.eye(3)
    p0 = apply_homography(t0, matches.p0)
    p1 = apply_homography(t2, matches.p1)
    rng = np.random.default_rng(seed)

    def residual(model):
        numerator, denominator = _sampson_terms(model, p0[:, 0], p0[:, 1], p1[:, 0], p1[:, 1])
        errors = np.sqrt(numerator ** 2 / np.maximum(denominator, 1e-30))
        return np.where(np.isfinite(errors), errors, np.inf)

    def score(errors):
        return _marginalised_loss(errors, threshold)

    def refit(model, errors):
        weights = _marginalised_weights(errors, threshold)
        support = weights > 0
        if support.sum() < 8:
            return None
        return eight_point_fundamental(p0[support], p1[support], weights[support])

    model, inliers, best, iterations = _lo_ransac(
        count, 8, lambda sample: eight_point_fundamental(p0[sample], p1[sample]), residual, score, refit,
        threshold, confidence, rng, max_iterations)
    if model is None or inliers.sum() < 8:
        return EstimationResult(None, np.zeros(count, dtype=bool), False, iterations, message='no consensus')
    final = eight_point_fundamental(p0[inliers], p1[inliers])
    if final is not None:
        final_errors = residual(final)
        if (final_errors < threshold).sum() >= inliers.sum() and score(final_errors) <= score(residual(model)):
            model, inliers = final, final_errors < threshold
    pixel_model = t2.T @ model @ t0
    return EstimationResult(FundamentalMatrix(pixel_model), inliers, True, iterations,
                            score(residual(model)), extra={'normalised': model})


def essential_from_fundamental(fundamental, k0: Intrinsics, k2: Intrinsics):
    """
    E = K2^T F K0 with singular values projected to (1, 1, 0)
    :return: 3x3 array
    """
    essential = k2.matrix.T @ _matrix(fundamental) @ k0.matrix
    u, _, vt = np.linalg.svd(essential)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt


def triangulate_points(rotation, translation, x0, x2):
    """
    linear triangulation of normalised camera coordinates with P0 = [I|0], P2 = [R|t]
    :param x0: (N, 2) normalised image coordinates of view 0
    :param x2: (N, 2) of view 2
    :return: (N, 3) points in the frame of view 0
    """
    p0 = np.hstack([np.eye(3), np.zeros((3, 1))])
    p2 = np.hstack([rotation, np.asarray(translation).reshape(3, 1)])
    system = np.stack([
        x0[:, 0, None] * p0[2] - p0[0],
        x0[:, 1, None] * p0[2] - p0[1],
        x2[:, 0, None] * p2[2] - p2[0],
        x2[:, 1, None] * p2[2] - p2[1],
    ], axis=1)
    _, _, vt = np.linalg.svd(system)
    homogeneous = vt[:, -1, :]
    w = homogeneous[:, 3:4]
    w = np.where(np.abs(w) > 1e-12, w, 1e-12)
    return homogeneous[:, :3] / w


def decompose_essential(essential, matches, k0: Intrinsics, k2: Intrinsics):
    """
    pick the (R, +-t) decomposition with the most points in front of both cameras
    :param essential: 3x3
    :param matches: CorrespondenceSet or (p0, p1) in pixels, usually the inliers
    :param k0:
    :param k2:
    :return: RelativePose with a unit translation
    """
    matches = _as_correspondences(matches)
    if len(matches) == 0:
        raise AmbiguityError('cheirality needs at least one correspondence')
    u, _, vt = np.linalg.svd(np.asarray(essential, dtype=np.float64))
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    x0 = apply_homography(k0.inverse, matches.p0)
    x2 = apply_homography(k2.inverse, matches.p1)
    candidates = []
    for rotation in (u @ w @ vt, u @ w.T @ vt):
        for translation in (u[:, 2], -u[:, 2]):
            points = triangulate_points(rotation, translation, x0, x2)
            depth0 = points[:, 2]
            depth2 = (points @ rotation.T + translation)[:, 2]
            candidates.append((int(((depth0 > 0) & (depth2 > 0)).sum()), rotation, translation))
    # ties keep the first candidate in enumeration order
    best = max(candidates, key=lambda c: c[0])
    translation = best[2] / np.linalg.norm(best[2])
    return RelativePose(best[1], translation)


def rotation_error_deg(rotation_est, rotation_gt):
    cos = (np.trace(np.asarray(rotation_est) @ np.asarray(rotation_gt).T) - 1.0) / 2.0
    return float(np.rad2deg(np.arccos(np.clip(cos, -1.0, 1.0))))


def translation_error_deg(translation_est, translation_gt):
    """angle between directions, min(theta, 180 - theta) since E fixes t only up to sign"""
    n = np.linalg.norm(translation_est) * np.linalg.norm(translation_gt)
    if n < 1e-18:
        return 0.0
    angle = float(np.rad2deg(np.arccos(np.clip(np.dot(translation_est, translation_gt) / n, -1.0, 1.0))))
    return min(angle, 180.0 - angle)


def pose_errors(estimated: RelativePose, ground_truth: RelativePose):
    """
    :return: (rotation error deg, translation direction error deg)
    """
    rotation = rotation_error_deg(estimated.rotation, ground_truth.rotation)
    if np.linalg.norm(ground_truth.translation) < 1e-9:
        return rotation, 0.0
    return rotation, translation_error_deg(estimated.translation, ground_truth.translation)


def pose_angular_error(estimated: RelativePose, ground_truth: RelativePose):
    """
    max of rotation and translation-direction errors
    :return: degrees
    """
    return max(pose_errors(estimated, ground_truth))


def homography_corner_error(estimated, ground_truth, image_size):
    """
    mean displacement of the four image corners
    :param estimated: Homography / 3x3
    :param ground_truth: Homography / 3x3
    :param image_size: (height, width)
    :return: px
    """
    height, width = image_size
    corners = np.array([[0.0, 0.0], [width - 1.0, 0.0], [0.0, height - 1.0], [width - 1.0, height - 1.0]])
    return float(np.linalg.norm(apply_homography(estimated, corners) - apply_homography(ground_truth, corners),
                                axis=1).mean())
