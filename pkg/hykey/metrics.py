# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 14:20'

Usage:
planar metrics (repeatability, matching score, MMA, MHA) with AUC over pixel thresholds, and
relative-pose mAA

>>> auc([1.0, 1.0, 1.0, 1.0, 1.0])
>>> 1.0
"""
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .exception import GeometryError, InvalidConfigException
from .geometry import (CorrespondenceSet, decompose_essential, essential_from_fundamental,
                       estimate_fundamental_robust, estimate_homography_robust, homography_corner_error, pose_errors)
from .log_obj import log
from .matching import match_descriptors
from .utils import ANGULAR_THRESHOLDS, PIXEL_THRESHOLDS, dump_json

HOMOGRAPHY = 'homography'
POSE = 'pose'
PLANAR_METRICS = ('rep', 'ms', 'mma', 'mha')
# error definitions echoed into every pose report
POSE_CONVENTIONS = {
    'pose_error': 'max(rotation error, translation error) in degrees',
    'translation_error': 'min(angle, 180 - angle), the essential matrix fixes t only up to sign',
}


@dataclass
class ThresholdCurve:
    thresholds: tuple
    values: tuple
    auc: float

    @classmethod
    def from_values(cls, values, thresholds=PIXEL_THRESHOLDS):
        values = tuple(float(v) for v in values)
        return cls(tuple(thresholds), values, auc(values, thresholds))

    def to_dict(self):
        return {'thresholds': list(self.thresholds), 'values': list(self.values), 'auc': self.auc}


def _homography(value):
    return np.asarray(getattr(value, 'matrix', value), dtype=np.float64)


def project(points, homography):
    """
    :param points: (N, 2)
    :param homography:
    :return: (projected (N, 2), finite mask)
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    mapped = np.concatenate([points, np.ones((len(points), 1))], axis=1) @ _homography(homography).T
    w = mapped[:, 2]
    ok = np.abs(w) > 1e-12
    safe = np.where(ok, w, 1.0)
    return mapped[:, :2] / safe[:, None], ok


def covisible(points, homography, shape, mask=None):
    """
    keypoints whose projection lands inside the other image (and on a valid pixel of `mask`)
    :param points: (N, 2) in the source view
    :param homography: source -> other
    :param shape: other (height, width)
    :param mask: optional validity mask of the other view
    :return: bool (N,)
    """
    projected, ok = project(points, homography)
    height, width = shape
    inside = ok & (projected[:, 0] >= 0) & (projected[:, 0] <= width - 1) & \
        (projected[:, 1] >= 0) & (projected[:, 1] <= height - 1)
    if mask is not None and inside.any():
        rows = np.clip(np.round(projected[:, 1]).astype(np.int64), 0, height - 1)
        cols = np.clip(np.round(projected[:, 0]).astype(np.int64), 0, width - 1)
        inside &= np.asarray(mask, dtype=bool)[rows, cols]
    return inside


def _nearest_distance(a, b):
    if len(a) == 0:
        return np.zeros(0)
    if len(b) == 0:
        return np.full(len(a), np.inf)
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)).min(axis=1)


def repeatability(kpts0, kpts1, homography, tau, shapes, masks=(None, None), denominator='sum'):
    """
    share of covisible keypoints re-detected within tau (<=) in the other view, counted both ways
    :param kpts0: (N0, 2)
    :param kpts1: (N1, 2)
    :param homography: H01
    :param tau: px
    :param shapes: ((h0, w0), (h1, w1))
    :param masks: validity masks (mask0, mask1)
    :param denominator: 'sum' (N0c + N1c) or 'min' (mean re-detections / min(N0c, N1c))
    :return: fraction, None when nothing is covisible
    """
    kpts0 = np.asarray(kpts0, dtype=np.float64).reshape(-1, 2)
    kpts1 = np.asarray(kpts1, dtype=np.float64).reshape(-1, 2)
    inverse = np.linalg.inv(_homography(homography))
    cov0 = covisible(kpts0, homography, shapes[1], masks[1])
    cov1 = covisible(kpts1, inverse, shapes[0], masks[0])
    n0c, n1c = int(cov0.sum()), int(cov1.sum())
    if n0c + n1c == 0:
        return None
    projected0, _ = project(kpts0[cov0], homography)
    projected1, _ = project(kpts1[cov1], inverse)
    hits0 = int((_nearest_distance(projected0, kpts1[cov1]) <= tau).sum())
    hits1 = int((_nearest_distance(projected1, kpts0[cov0]) <= tau).sum())
    if denominator == 'sum':
        return (hits0 + hits1) / float(n0c + n1c)
    if denominator == 'min':
        if min(n0c, n1c) == 0:
            return None
        return min(1.0, 0.5 * (hits0 + hits1) / float(min(n0c, n1c)))
    raise InvalidConfigException(f'repeatability denominator must be sum or min, got {denominator!r}',
                                 field='REPEATABILITY_DENOMINATOR')


def covisible_counts(kpts0, kpts1, homography, shapes, masks=(None, None)):
    inverse = np.linalg.inv(_homography(homography))
    return (int(covisible(kpts0, homography, shapes[1], masks[1]).sum()),
            int(covisible(kpts1, inverse, shapes[0], masks[0]).sum()))


def reprojection_errors(matches: CorrespondenceSet, homography):
    """|H p0 - p1| per match, inf where p0 maps to infinity"""
    if len(matches) == 0:
        return np.zeros(0)
    projected, ok = project(matches.p0, homography)
    errors = np.linalg.norm(projected - matches.p1, axis=1)
    return np.where(ok, errors, np.inf)


def matching_score(matches: CorrespondenceSet, homography, tau, counts):
    """
    correct matches (error < tau) over the smaller covisible keypoint count
    :param matches:
    :param homography:
    :param tau:
    :param counts: (covisible in view 0, covisible in view 1)
    :return: fraction, None when a view has no covisible keypoint
    """
    smaller = min(counts)
    if smaller == 0:
        return None
    return min(1.0, int((reprojection_errors(matches, homography) < tau).sum()) / float(smaller))


def mma(matches: CorrespondenceSet, homography, tau):
    """correct / total matches, None without matches"""
    if len(matches) == 0:
        return None
    return float((reprojection_errors(matches, homography) < tau).mean())


def homography_estimate_error(matches: CorrespondenceSet, homography_gt, image_size, threshold=3.0, confidence=0.99999,
                              seed=0):
    """
    mean corner displacement of the robustly estimated homography, inf on failure
    :param image_size: (height, width)
    :return: px
    """
    result = estimate_homography_robust(matches, threshold, confidence, seed)
    if not result.success:
        return math.inf
    try:
        return homography_corner_error(result.model, homography_gt, image_size)
    except GeometryError:
        return math.inf


def mha(matches: CorrespondenceSet, homography_gt, image_size, tau, corner_error=None, **kwargs):
    """
    1 when the estimated homography aligns the image corners within tau, else 0 (failures are 0)
    :param corner_error: precomputed homography_estimate_error, computed here when missing
    :return: 0 | 1
    """
    if corner_error is None:
        corner_error = homography_estimate_error(matches, homography_gt, image_size, **kwargs)
    return int(corner_error < tau)


def auc(values, thresholds=PIXEL_THRESHOLDS):
    """
    trapezoidal area under the piecewise-linear curve over [t_first, t_last], divided by its length
    :param values: curve values at `thresholds`
    :param thresholds:
    :return:
    """
    values = np.asarray(values, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if len(values) != len(thresholds):
        raise InvalidConfigException(f'{len(values)} values for {len(thresholds)} thresholds', field='thresholds')
    if len(values) == 1:
        return float(values[0])
    return float(trapezoid(values, thresholds) / (thresholds[-1] - thresholds[0]))


def maa(errors, thresholds=ANGULAR_THRESHOLDS):
    """
    share of pairs with pose error below each threshold, failures are inf
    :param errors: degrees
    :param thresholds:
    :return: {threshold: fraction}
    """
    errors = np.asarray([math.inf if e is None else e for e in errors], dtype=np.float64)
    if len(errors) == 0:
        return {t: 0.0 for t in thresholds}
    return {t: float((errors < t).mean()) for t in thresholds}


def pose_auc(errors, thresholds=ANGULAR_THRESHOLDS):
    """
    area under the recall-vs-error curve up to each threshold, divided by the threshold
    :param errors: degrees, failures inf
    :param thresholds:
    :return: {threshold: auc}
    """
    errors = np.sort(np.asarray([math.inf if e is None else e for e in errors], dtype=np.float64))
    if len(errors) == 0:
        return {t: 0.0 for t in thresholds}
    recall = (np.arange(len(errors)) + 1) / len(errors)
    errors = np.r_[0.0, errors]
    recall = np.r_[0.0, recall]
    out = {}
    for t in thresholds:
        last = np.searchsorted(errors, t)
        r = np.r_[recall[:last], recall[last - 1]]
        e = np.r_[errors[:last], t]
        out[t] = float(trapezoid(r, x=e) / t)
    return out


@dataclass
class EvalReport:
    """per-pair rows, aggregate curves and the resolved config"""
    mode: str
    records: list
    aggregates: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {'mode': self.mode, 'records': self.records, 'aggregates': self.aggregates,
                'excluded': self.excluded, 'config': self.config}

    def columns(self):
        names = []
        for record in self.records:
            for key in record:
                if key not in names:
                    names.append(key)
        return names

    def write_json(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            f.write(dump_json(self.to_dict(), indent=2))
        return path

    def write_csv(self, path):
        columns = self.columns()
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(columns)
            for record in self.records:
                writer.writerow(['' if record.get(c) is None else record.get(c) for c in columns])
        return path


def _mean(values):
    kept = [v for v in values if v is not None]
    return (float(np.mean(kept)) if kept else None), len(values) - len(kept)


def aggregate_homography(records, thresholds=PIXEL_THRESHOLDS):
    """
    per-metric mean curves (pairs with undefined values excluded and counted) and their AUC
    :return: (aggregates, excluded)
    """
    aggregates, excluded = {}, {}
    for metric in PLANAR_METRICS:
        values = []
        excluded[metric] = 0
        for t in thresholds:
            mean, dropped = _mean([r.get(f'{metric}@{t}') for r in records])
            values.append(mean)
            excluded[metric] = max(excluded[metric], dropped)
        if any(v is None for v in values):
            aggregates[metric] = {'thresholds': list(thresholds), 'values': values, 'auc': None}
        else:
            aggregates[metric] = ThresholdCurve.from_values(values, thresholds).to_dict()
    return aggregates, excluded


def aggregate_pose(records, thresholds=ANGULAR_THRESHOLDS):
    errors = [r['pose_error'] for r in records]
    return {
        'maa': {str(t): v for t, v in maa(errors, thresholds).items()},
        'pose_auc': {str(t): v for t, v in pose_auc(errors, thresholds).items()},
        'failures': int(sum(1 for r in records if not r['success'])),
        'conventions': dict(POSE_CONVENTIONS),
    }, {}


def homography_record(pair_id, kpts0, desc0, kpts1, desc1, homography, shapes, masks=(None, None),
                      thresholds=PIXEL_THRESHOLDS, denominator='sum', ransac_threshold=3.0, confidence=0.99999,
                      seed=0):
    """
    every planar metric of one pair at every threshold
    :return: flat dict (csv row)
    """
    kpts0 = np.asarray(kpts0, dtype=np.float64).reshape(-1, 2)
    kpts1 = np.asarray(kpts1, dtype=np.float64).reshape(-1, 2)
    matches = match_descriptors(desc0, desc1, kpts0, kpts1)
    counts = covisible_counts(kpts0, kpts1, homography, shapes, masks)
    corner_error = homography_estimate_error(matches, homography, shapes[0], ransac_threshold, confidence, seed)
    record = {'pair': pair_id, 'num_kpts0': len(kpts0), 'num_kpts1': len(kpts1), 'num_matches': len(matches),
              'covisible0': counts[0], 'covisible1': counts[1],
              'corner_error': corner_error if math.isfinite(corner_error) else None}
    for t in thresholds:
        record[f'rep@{t}'] = repeatability(kpts0, kpts1, homography, t, shapes, masks, denominator)
        record[f'ms@{t}'] = matching_score(matches, homography, t, counts)
        record[f'mma@{t}'] = mma(matches, homography, t)
        record[f'mha@{t}'] = mha(matches, homography, shapes[0], t, corner_error=corner_error)
    return record


def pose_record(pair_id, kpts0, desc0, kpts2, desc2, k0, k2, pose_gt, threshold=1.0, confidence=0.99999, seed=0):
    """
    robust F, essential decomposition and angular errors of one pair; failures have error None (inf)
    :return: flat dict (csv row)
    """
    matches = match_descriptors(desc0, desc2, kpts0, kpts2)
    record = {'pair': pair_id, 'num_kpts0': len(kpts0), 'num_kpts2': len(kpts2), 'num_matches': len(matches),
              'inliers': 0, 'success': False, 'rotation_error': None, 'translation_error': None,
              'pose_error': None}
    result = estimate_fundamental_robust(matches, k0, k2, threshold, confidence, seed)
    if not result.success:
        return record
    try:
        essential = essential_from_fundamental(result.model, k0, k2)
        estimated = decompose_essential(essential, matches.subset(result.inliers), k0, k2)
    except GeometryError as e:
        log.debug(f'pair {pair_id}: pose recovery failed: {e}')
        return record
    rotation, translation = pose_errors(estimated, pose_gt)
    record.update(inliers=int(result.inliers.sum()), success=True, rotation_error=rotation,
                  translation_error=translation, pose_error=max(rotation, translation))
    return record


def _run(function, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(function, items))
    return [function(item) for item in items]


def evaluate_homography(network, manifest, max_keypoints=1024, thresholds=PIXEL_THRESHOLDS, denominator='sum',
                        ransac_threshold=3.0, confidence=0.99999, seed=0, threads=1, config=None):
    """
    planar benchmark over the (I0, I1) pairs of a dataset
    :return: EvalReport
    """

    def one(index):
        triplet = manifest.load_triplet(index)
        out0 = network.detect(triplet.cube0, max_keypoints)
        out1 = network.detect(triplet.cube1, max_keypoints)
        shapes = (triplet.cube0.shape[1:], triplet.cube1.shape[1:])
        return homography_record(manifest.triplets[index].id, out0.keypoints.numpy(), out0.descriptors.data,
                                 out1.keypoints.numpy(), out1.descriptors.data, triplet.homography, shapes,
                                 (None, triplet.mask1), thresholds, denominator, ransac_threshold, confidence,
                                 seed)

    records = _run(one, range(len(manifest)), threads)
    aggregates, excluded = aggregate_homography(records, thresholds)
    log.info(f'evaluated {len(records)} planar pairs')
    return EvalReport(HOMOGRAPHY, records, aggregates, excluded, dict(config or {}))


def evaluate_pose(network, manifest, max_keypoints=1024, thresholds=ANGULAR_THRESHOLDS, fundamental_threshold=1.0,
                  confidence=0.99999, seed=0, threads=1, config=None):
    """
    relative pose benchmark over the (I0, I2) pairs of a dataset
    :return: EvalReport
    """
    if not manifest.has_epipolar:
        raise InvalidConfigException('pose evaluation needs a dataset with calibrated second views', field='mode')
    indices = [i for i, t in enumerate(manifest.triplets) if t.frame2 is not None]

    def one(index):
        triplet = manifest.load_triplet(index)
        out0 = network.detect(triplet.cube0, max_keypoints)
        out2 = network.detect(triplet.cube2, max_keypoints)
        return pose_record(manifest.triplets[index].id, out0.keypoints.numpy(), out0.descriptors.data,
                           out2.keypoints.numpy(), out2.descriptors.data, triplet.k0, triplet.k2, triplet.pose,
                           fundamental_threshold, confidence, seed)

    records = _run(one, indices, threads)
    aggregates, excluded = aggregate_pose(records, thresholds)
    log.info(f'evaluated {len(records)} pose pairs, {aggregates["failures"]} failures')
    return EvalReport(POSE, records, aggregates, excluded, dict(config or {}))
