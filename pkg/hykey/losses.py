# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 13:30'

Usage:
the five training terms and their weighted sum

>>> weights = LossWeights.preset('full')
>>> breakdown = total_loss({'pk': l_pk, 'rp': l_rp, 'rel': l_rel, 'desc': l_desc, 'epi': l_epi}, weights, epoch=6)
>>> breakdown.total
"""
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exception import GeometryError, InvalidConfigException
from .geometry import average_focal, compose_fundamental, normalise_fundamental, sampson_matrix
from .log_obj import log
from .matching import similarity
from .model import HyKeyConfig, refine_keypoints, window_offsets
from .tensor import Tensor, as_tensor, huber, log_softmax, sigmoid, softmax, stack

TERMS = ('pk', 'rp', 'rel', 'desc', 'epi')
# sharpness of the sigmoid confidence weight around the score threshold
CONFIDENCE_SCALE = 0.1
RP_RADIUS = 5.0
LABEL_RADIUS = 3.0
HUBER_DELTA = 1.0
DESC_TEMPERATURE = 0.02
EPI_TEMPERATURE = 0.02
BCE_EPS = 1e-6

# flags attached to a breakdown
FLAG_NO_RP_PAIRS = 'rp_no_correspondences'
FLAG_NO_LABELS = 'no_labels'
FLAG_EPI_DEGENERATE = 'epi_degenerate'


@dataclass
class LossWeights:
    pk: float = 0.5
    rp: float = 1.0
    rel: float = 1.0
    desc: float = 5.0
    epi: float = 0.25

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in TERMS:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidConfigException(f'loss weight {name} must be >= 0, got {value}',
                                             field=f'LOSS_WEIGHTS.{name}')
        return self

    @classmethod
    def preset(cls, name):
        """
        ablation presets
        :param name: full | nope | rel_desc | pk_rel_desc | rp_rel_desc
        :return:
        """
        presets = {
            'full': {},
            'nope': {'epi': 0.0},
            'rel_desc': {'pk': 0.0, 'rp': 0.0, 'epi': 0.0},
            'pk_rel_desc': {'rp': 0.0, 'epi': 0.0},
            'rp_rel_desc': {'pk': 0.0, 'epi': 0.0},
        }
        if name not in presets:
            raise InvalidConfigException(f'unknown loss preset {name!r}, choose from {sorted(presets)}',
                                         field='LOSS_PRESET')
        return cls(**presets[name])

    @classmethod
    def from_mapping(cls, mapping):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping or {}) - names)
        if unknown:
            raise InvalidConfigException(f'unknown loss weight {unknown[0]!r}', field=f'LOSS_WEIGHTS.{unknown[0]}')
        try:
            return cls(**{k: float(v) for k, v in (mapping or {}).items()})
        except (TypeError, ValueError) as e:
            raise InvalidConfigException(f'loss weights must be numbers: {e}', field='LOSS_WEIGHTS')

    def to_dict(self):
        return asdict(self)


@dataclass
class LossBreakdown:
    """per-term values, the effective weights, contributions and their sum"""
    terms: dict
    weights: dict
    contributions: dict
    total: float
    total_tensor: Tensor = field(default=None, repr=False)
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            'terms': dict(self.terms),
            'weights': dict(self.weights),
            'contributions': dict(self.contributions),
            'total': self.total,
            'flags': list(self.flags),
        }


def _zero():
    return Tensor(np.zeros(()))


def confidence_weight(scores, threshold):
    """sigmoid((s - t_sc) / 0.1)"""
    return sigmoid((as_tensor(scores) - threshold) * (1.0 / CONFIDENCE_SCALE))


def project_points(points, homography):
    """
    homography applied with Tensor arithmetic so gradients reach the points
    :param points: [N, 2] Tensor
    :param homography: 3x3
    :return: (x [N, 1] Tensor, y [N, 1] Tensor, valid mask where |w| > 1e-12)
    """
    h = np.asarray(getattr(homography, 'matrix', homography), dtype=np.float64)
    points = as_tensor(points)
    x, y = points[:, 0], points[:, 1]
    w = x * h[2, 0] + y * h[2, 1] + h[2, 2]
    valid = np.abs(w.data) > 1e-12
    safe_w = w + np.where(valid, 0.0, 1.0)
    px = (x * h[0, 0] + y * h[0, 1] + h[0, 2]) / safe_w
    py = (x * h[1, 0] + y * h[1, 1] + h[1, 2]) / safe_w
    return px.reshape(-1, 1), py.reshape(-1, 1), valid


def _pairwise_distance(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))


def correspondence_labels(points0, points1, homography, radius=LABEL_RADIUS, mask1=None):
    """
    ground-truth labels: mutual nearest pairs between projected view-0 points and view-1 points within radius
    :param points0: [N0, 2] array
    :param points1: [N1, 2] array
    :param homography: H01
    :param radius: px
    :param mask1: optional validity mask of view 1
    :return: (index0, index1)
    """
    points0 = np.asarray(points0, dtype=np.float64).reshape(-1, 2)
    points1 = np.asarray(points1, dtype=np.float64).reshape(-1, 2)
    if len(points0) == 0 or len(points1) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    px, py, valid = project_points(Tensor(points0), homography)
    projected = np.concatenate([px.data, py.data], axis=1).astype(np.float64)
    if mask1 is not None:
        height, width = np.shape(mask1)
        inside = ((projected[:, 0] >= 0) & (projected[:, 0] <= width - 1)
                  & (projected[:, 1] >= 0) & (projected[:, 1] <= height - 1))
        rows = np.clip(np.round(projected[:, 1]).astype(np.int64), 0, height - 1)
        cols = np.clip(np.round(projected[:, 0]).astype(np.int64), 0, width - 1)
        valid = valid & inside & np.asarray(mask1, dtype=bool)[rows, cols]
    distance = _pairwise_distance(projected, points1)
    distance[~valid] = np.inf
    nn01 = distance.argmin(axis=1)
    nn10 = distance.argmin(axis=0)
    ids0 = np.arange(len(points0))
    keep = (nn10[nn01] == ids0) & (distance[ids0, nn01] <= radius)
    return ids0[keep], nn01[keep]


def loss_pk(score_map, keypoints, config: HyKeyConfig):
    """
    dispersity peak term: expected distance of the window cells to the refined keypoint under the
    detection softmax, weighted by the keypoint confidence
    :param score_map: [H, W] Tensor
    :param keypoints: Keypoints from dkd_detect
    :param config:
    :return: scalar Tensor
    """
    if len(keypoints) == 0:
        return _zero()
    probabilities = keypoints.probabilities
    if probabilities is None:
        _, probabilities = refine_keypoints(score_map, keypoints.pixels, config.dkd_radius, config.temperature)
    dx, dy = window_offsets(config.dkd_radius)
    offsets = keypoints.points - keypoints.pixels.astype(np.float64)
    ox = offsets[:, 0].reshape(-1, 1)
    oy = offsets[:, 1].reshape(-1, 1)
    distance = (((ox - dx[None]) ** 2 + (oy - dy[None]) ** 2) + 1e-12).sqrt()
    dispersity = (probabilities * distance).sum(axis=1)
    weight = confidence_weight(keypoints.scores, config.score_threshold)
    return (dispersity * weight).mean()


def _reprojection_direction(points_a, scores_a, points_b, scores_b, homography, threshold, radius, delta):
    px, py, valid = project_points(points_a, homography)
    projected = np.concatenate([px.data, py.data], axis=1)
    distance = _pairwise_distance(projected, np.asarray(as_tensor(points_b).data))
    distance[~valid] = np.inf
    nearest = distance.argmin(axis=1)
    ids = np.flatnonzero(distance[np.arange(len(nearest)), nearest] <= radius)
    if len(ids) == 0:
        return None
    partner = nearest[ids]
    points_b = as_tensor(points_b)
    dx = px[ids].reshape(-1) - points_b[partner, 0]
    dy = py[ids].reshape(-1) - points_b[partner, 1]
    error = (dx * dx + dy * dy + 1e-12).sqrt()
    weight = confidence_weight(as_tensor(scores_a)[ids], threshold) * confidence_weight(
        as_tensor(scores_b)[partner], threshold)
    return (huber(error, delta) * weight).mean()


def loss_rp(kpts0, scores0, kpts1, scores1, homography, config: HyKeyConfig, radius=RP_RADIUS, delta=HUBER_DELTA):
    """
    Huber reprojection error to the nearest detection within `radius`, confidence weighted,
    averaged over both directions (H01 and its inverse)
    :return: (scalar Tensor, flags)
    """
    if len(as_tensor(kpts0)) == 0 or len(as_tensor(kpts1)) == 0:
        return _zero(), [FLAG_NO_RP_PAIRS]
    matrix = np.asarray(getattr(homography, 'matrix', homography), dtype=np.float64)
    directions = [
        _reprojection_direction(kpts0, scores0, kpts1, scores1, matrix, config.score_threshold, radius, delta),
        _reprojection_direction(kpts1, scores1, kpts0, scores0, np.linalg.inv(matrix), config.score_threshold,
                                radius, delta),
    ]
    directions = [d for d in directions if d is not None]
    if not directions:
        log.warning('loss_rp: no reprojected keypoint has a detection within the radius')
        return _zero(), [FLAG_NO_RP_PAIRS]
    if len(directions) == 1:
        return directions[0], []
    return (directions[0] + directions[1]) * 0.5, []


def _bce(scores, targets):
    scores = as_tensor(scores).clip(BCE_EPS, 1.0 - BCE_EPS)
    targets = np.asarray(targets, dtype=np.float64)
    return -(scores.log() * targets + (1.0 - scores).log() * (1.0 - targets))


def loss_rel(scores0, scores1, matrix, labels, temperature=DESC_TEMPERATURE):
    """
    reliability: binary cross-entropy between the keypoint scores and their soft matchability, the
    softmax mass of the similarity row (view 0) or column (view 1) on the true partner, held constant
    :param scores0: [N0] Tensor
    :param scores1: [N1] Tensor
    :param matrix: [N0, N1] similarity
    :param labels: (index0, index1)
    :param temperature:
    :return: scalar Tensor
    """
    index0, index1 = labels
    if len(index0) == 0:
        return _zero()
    logits = np.asarray(getattr(matrix, 'data', matrix), dtype=np.float64) / temperature
    rows = np.exp(logits - logits.max(axis=1, keepdims=True))
    rows /= rows.sum(axis=1, keepdims=True)
    cols = np.exp(logits - logits.max(axis=0, keepdims=True))
    cols /= cols.sum(axis=0, keepdims=True)
    target0 = rows[index0, index1]
    target1 = cols[index0, index1]
    term0 = _bce(as_tensor(scores0)[index0], target0).mean()
    term1 = _bce(as_tensor(scores1)[index1], target1).mean()
    return (term0 + term1) * 0.5


def loss_desc(matrix, labels, temperature=DESC_TEMPERATURE):
    """
    symmetric cross-entropy of the similarity matrix over the labelled entries
    :param matrix: [N0, N1] Tensor
    :param labels: (index0, index1)
    :param temperature:
    :return: scalar Tensor
    """
    index0, index1 = labels
    if len(index0) == 0:
        log.warning('loss_desc: no labelled correspondences')
        return _zero()
    logits = as_tensor(matrix) * (1.0 / temperature)
    row = -(log_softmax(logits, axis=1)[index0, index1]).mean()
    column = -(log_softmax(logits, axis=0)[index0, index1]).mean()
    return (row + column) * 0.5


def normalise_tensor_points(points, intrinsics, focal):
    """pixels -> normalised px, f * K^-1 x, as Tensor ops"""
    points = as_tensor(points)
    x = (points[:, 0] - intrinsics.cx) * (focal / intrinsics.fx)
    y = (points[:, 1] - intrinsics.cy) * (focal / intrinsics.fy)
    return x, y


def loss_epi(kpts0, kpts2, d0, d2, fundamental, k0=None, k2=None, temperature=EPI_TEMPERATURE,
             delta=HUBER_DELTA):
    """
    expected Huber Sampson error under row and column softmax assignments, in normalised px
    :param kpts0: [N0, 2] Tensor
    :param kpts2: [N2, 2] Tensor
    :param d0: [N0, D] descriptors
    :param d2: [N2, D]
    :param fundamental: pixel F02
    :param k0: intrinsics, pixel coordinates are used when omitted
    :param k2:
    :param temperature:
    :param delta: normalised px^2
    :return: (scalar Tensor, flags)
    """
    kpts0, kpts2 = as_tensor(kpts0), as_tensor(kpts2)
    if len(kpts0) == 0 or len(kpts2) == 0:
        return _zero(), []
    try:
        if k0 is not None and k2 is not None:
            focal = average_focal(k0, k2)
            f = normalise_fundamental(fundamental, k0, k2, focal)
            x0, y0 = normalise_tensor_points(kpts0, k0, focal)
            x2, y2 = normalise_tensor_points(kpts2, k2, focal)
        else:
            f = np.asarray(getattr(fundamental, 'matrix', fundamental), dtype=np.float64)
            x0, y0, x2, y2 = kpts0[:, 0], kpts0[:, 1], kpts2[:, 0], kpts2[:, 1]
        distance = sampson_matrix(f, stack([x0, y0], axis=1), stack([x2, y2], axis=1))
    except GeometryError as e:
        log.warning(f'loss_epi skipped: {e}')
        return _zero(), [FLAG_EPI_DEGENERATE]
    penalty = huber(distance, delta)
    logits = similarity(d0, d2) * (1.0 / temperature)
    forward = (softmax(logits, axis=1) * penalty).sum(axis=1).mean()
    backward = (softmax(logits, axis=0) * penalty).sum(axis=0).mean()
    return (forward + backward) * 0.5, []


def effective_weights(weights: LossWeights, epoch, use_epipolar=True, epipolar_start_epoch=5):
    """
    epochs 1..epipolar_start_epoch keep the epipolar weight at 0; without epipolar training it stays 0
    :return: dict
    """
    values = weights.to_dict()
    if not use_epipolar or epoch <= epipolar_start_epoch:
        values['epi'] = 0.0
    return values


def total_loss(terms: dict, weights: LossWeights, epoch, use_epipolar=True, epipolar_start_epoch=5, flags=None):
    """
    weighted sum of the available terms
    :param terms: name -> scalar Tensor / float / None (None: not computed)
    :param weights:
    :param epoch: 1-based
    :param use_epipolar: False is the noPE configuration
    :param epipolar_start_epoch:
    :param flags: carried into the breakdown
    :return: LossBreakdown
    """
    effective = effective_weights(weights, epoch, use_epipolar, epipolar_start_epoch)
    values, contributions = {}, {}
    total_tensor = None
    for name in TERMS:
        term = terms.get(name)
        if term is None or effective[name] == 0:
            contributions[name] = 0.0
            if term is not None:
                values[name] = float(as_tensor(term).item())
            continue
        term = as_tensor(term)
        values[name] = term.item()
        weighted = term * effective[name]
        contributions[name] = effective[name] * values[name]
        total_tensor = weighted if total_tensor is None else total_tensor + weighted
    total_tensor = _zero() if total_tensor is None else total_tensor
    total = float(sum(contributions.values()))
    return LossBreakdown(values, effective, contributions, total, total_tensor, list(flags or []))


def compute_losses(outputs, triplet, weights: LossWeights, config: HyKeyConfig, epoch, use_epipolar=True,
                   epipolar_start_epoch=5):
    """
    all active terms for one triplet
    :param outputs: (out0, out1, out2 or None) NetworkOutputs in train mode
    :param triplet: TrainingTriplet
    :param weights:
    :param config:
    :param epoch:
    :param use_epipolar:
    :param epipolar_start_epoch:
    :return: LossBreakdown
    """
    out0, out1, out2 = outputs
    active = effective_weights(weights, epoch, use_epipolar, epipolar_start_epoch)
    terms, flags = {}, []
    if active['pk'] > 0:
        views = [o for o in (out0, out1, out2) if o is not None]
        parts = [loss_pk(o.score_map, o.keypoints, config) for o in views]
        terms['pk'] = sum(parts[1:], parts[0]) * (1.0 / len(parts))
    if active['rp'] > 0:
        terms['rp'], extra = loss_rp(out0.points, out0.scores, out1.points, out1.scores, triplet.homography,
                                     config)
        flags.extend(extra)
    if active['rel'] > 0 or active['desc'] > 0:
        labels = correspondence_labels(out0.points.data, out1.points.data, triplet.homography,
                                       mask1=triplet.mask1)
        if len(labels[0]) == 0:
            flags.append(FLAG_NO_LABELS)
        matrix = similarity(out0.descriptors, out1.descriptors)
        if active['rel'] > 0:
            terms['rel'] = loss_rel(out0.scores, out1.scores, matrix, labels)
        if active['desc'] > 0:
            terms['desc'] = loss_desc(matrix, labels)
    if active['epi'] > 0 and out2 is not None and triplet.has_epipolar:
        try:
            fundamental = compose_fundamental(triplet.k0, triplet.k2, triplet.pose)
        except GeometryError as e:
            log.warning(f'loss_epi skipped: {e}')
            fundamental = None
            flags.append(FLAG_EPI_DEGENERATE)
        if fundamental is not None:
            terms['epi'], extra = loss_epi(out0.points, out2.points, out0.descriptors, out2.descriptors, fundamental,
                                           triplet.k0, triplet.k2)
            flags.extend(extra)
    return total_loss(terms, weights, epoch, use_epipolar, epipolar_start_epoch, flags)
