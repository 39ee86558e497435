# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 18:40'

Usage:

"""
import math

import numpy as np
import pytest

from hykey.exception import InvalidConfigException
from hykey.geometry import Intrinsics, RelativePose, apply_homography, compose_fundamental, rotation_about_axis, skew
from hykey.losses import (FLAG_EPI_DEGENERATE, FLAG_NO_LABELS, FLAG_NO_RP_PAIRS, LossWeights, compute_losses,
                          correspondence_labels, effective_weights, loss_desc, loss_epi, loss_pk, loss_rel, loss_rp,
                          total_loss)
from hykey.model import EVAL, dkd_detect
from hykey.tensor import Tensor, backward
from tests import TestBase

SHIFT = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
K = Intrinsics(40.0, 40.0, 16.0, 16.0)


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def _epipolar_points(count=5):
    rotation = rotation_about_axis((0.0, 1.0, 0.0), 0.05)
    translation = np.array([0.5, 0.05, 0.0])
    rng = np.random.default_rng(2)
    world = np.stack([rng.uniform(-1, 1, count), rng.uniform(-1, 1, count), rng.uniform(4, 6, count)], axis=1)
    p0 = apply_homography(K.matrix, world[:, :2] / world[:, 2:])
    camera2 = world @ rotation.T + translation
    p2 = apply_homography(K.matrix, camera2[:, :2] / camera2[:, 2:])
    return p0, p2, compose_fundamental(K, K, RelativePose(rotation, translation))


class TestWeights(TestBase):

    def test_presets(self):
        """ nope zeroes the epipolar weight, rel_desc keeps two terms
        """
        self.check_result(LossWeights.preset('nope').epi, 0.0)
        self.check_result(LossWeights.preset('rel_desc').to_dict(),
                          {'pk': 0.0, 'rp': 0.0, 'rel': 1.0, 'desc': 5.0, 'epi': 0.0})
        with pytest.raises(InvalidConfigException):
            LossWeights.preset('all')

    def test_validation(self):
        """ negative weights and unknown names
        """
        with pytest.raises(InvalidConfigException) as e:
            LossWeights(pk=-1.0)
        self.check_result(e.value.field, 'LOSS_WEIGHTS.pk')
        with pytest.raises(InvalidConfigException) as e:
            LossWeights.from_mapping({'peak': 1.0})
        self.check_result(e.value.field, 'LOSS_WEIGHTS.peak')

    def test_epipolar_schedule(self):
        """ epochs 1..5 keep the epipolar weight at 0, noPE keeps it there
        """
        weights = LossWeights()
        self.check_result(effective_weights(weights, 5)['epi'], 0.0)
        self.check_result(effective_weights(weights, 6)['epi'], 0.25)
        self.check_result(effective_weights(weights, 6, use_epipolar=False)['epi'], 0.0)

    def test_total_is_weighted_sum(self):
        """ 0.5*1 + 1*2 + 1*3 + 5*4 + 0.25*8
        """
        terms = {'pk': 1.0, 'rp': 2.0, 'rel': 3.0, 'desc': 4.0, 'epi': 8.0}
        self.check_close(total_loss(terms, LossWeights(), epoch=6).total, 27.5, atol=1e-6)
        early = total_loss(terms, LossWeights(), epoch=1)
        self.check_close(early.total, 25.5, atol=1e-6)
        self.check_result(early.contributions['epi'], 0.0)
        self.check_close(early.terms['epi'], 8.0, atol=1e-6)

    def test_missing_terms_contribute_nothing(self):
        """ terms that were not computed are reported as 0 contributions
        """
        breakdown = total_loss({'desc': 2.0}, LossWeights(), epoch=1, flags=['x'])
        self.check_close(breakdown.total, 10.0, atol=1e-6)
        self.check_result(sorted(breakdown.terms), ['desc'])
        self.check_result(breakdown.to_dict()['flags'], ['x'])


class TestLabels(TestBase):

    def test_mutual_within_radius(self):
        """ projected nearest pairs within 3 px, far points stay unlabelled
        """
        points0 = np.array([[2.0, 2.0], [10.0, 10.0], [5.0, 12.0]])
        points1 = np.array([[3.0, 2.0], [11.0, 10.5], [40.0, 40.0]])
        index0, index1 = correspondence_labels(points0, points1, SHIFT)
        self.check_result(index0.tolist(), [0, 1])
        self.check_result(index1.tolist(), [0, 1])

    def test_mask_removes_invalid_targets(self):
        """ a projection onto an invalid pixel is not a label
        """
        points0 = np.array([[2.0, 2.0], [10.0, 10.0]])
        points1 = np.array([[3.0, 2.0], [11.0, 10.0]])
        mask = np.ones((16, 16), dtype=bool)
        mask[10, 11] = False
        index0, _ = correspondence_labels(points0, points1, SHIFT, mask1=mask)
        self.check_result(index0.tolist(), [0])


class TestTerms(TestBase):

    def test_peak_gradient(self, toy_config, rng):
        """ loss_pk is differentiable in the score map
        """
        scores = 0.01 + rng.uniform(0.0, 0.05, (16, 16))
        scores[5, 5], scores[9, 11] = 0.9, 0.5

        def f(s):
            return loss_pk(s, dkd_detect(s, EVAL, toy_config), toy_config)

        self.check_gradient(f, [scores])

    def test_peak_without_keypoints(self, toy_config):
        """ an empty detection gives 0
        """
        keypoints = dkd_detect(np.full((16, 16), 0.01), EVAL, toy_config)
        self.check_result(loss_pk(Tensor(np.full((16, 16), 0.01)), keypoints, toy_config).item(), 0.0)

    def test_reprojection_value(self, toy_config):
        """ a 1 px offset costs huber(1) = 0.5 times both confidences
        """
        kpts0 = np.array([[2.0, 2.0], [12.0, 12.0]])
        kpts1 = kpts0 + [2.0, 0.0]
        scores = np.array([0.9, 0.9])
        value, flags = loss_rp(Tensor(kpts0), Tensor(scores), Tensor(kpts1), Tensor(scores), SHIFT, toy_config)
        self.check_close(value.item(), 0.5 * _sigmoid(8.0) ** 2, atol=1e-5)
        self.check_result(flags, [])

    def test_reprojection_gradient(self, toy_config, rng):
        """ gradients reach both keypoint sets and their scores
        """
        kpts0 = np.array([[2.0, 2.0], [12.0, 12.0], [6.0, 3.0]])
        kpts1 = kpts0 + [1.5, 0.3] + rng.uniform(-0.2, 0.2, (3, 2))
        scores0, scores1 = rng.uniform(0.2, 0.8, 3), rng.uniform(0.2, 0.8, 3)
        self.check_gradient(lambda a, s, b, t: loss_rp(a, s, b, t, SHIFT, toy_config)[0],
                            [kpts0, scores0, kpts1, scores1])

    def test_reprojection_without_pairs(self, toy_config):
        """ nothing within 5 px is flagged
        """
        value, flags = loss_rp(Tensor([[0.0, 0.0]]), Tensor([0.5]), Tensor([[20.0, 20.0]]), Tensor([0.5]), SHIFT,
                               toy_config)
        self.check_result((value.item(), flags), (0.0, [FLAG_NO_RP_PAIRS]))

    def test_descriptor_perfect_matches(self):
        """ one-hot similarity at temperature 0.02 costs nothing
        """
        labels = (np.arange(3), np.arange(3))
        self.check_close(loss_desc(Tensor(np.eye(3)), labels).item(), 0.0, atol=1e-6)

    def test_descriptor_gradient(self, rng):
        """ symmetric cross-entropy gradient
        """
        labels = (np.array([0, 2]), np.array([1, 0]))
        self.check_gradient(lambda m: loss_desc(m, labels, temperature=0.5), [rng.uniform(-1, 1, (3, 4))])

    def test_descriptor_without_labels(self):
        """ no labelled pair gives 0
        """
        empty = (np.zeros(0, np.int64), np.zeros(0, np.int64))
        self.check_result(loss_desc(Tensor(np.eye(2)), empty).item(), 0.0)

    def test_reliability_targets_are_constant(self, rng):
        """ gradients flow to the scores only
        """
        labels = (np.array([0, 1]), np.array([1, 2]))
        matrix = Tensor(rng.uniform(-1, 1, (3, 3)), requires_grad=True)
        scores0 = Tensor(rng.uniform(0.2, 0.8, 3), requires_grad=True)
        backward(loss_rel(scores0, Tensor(rng.uniform(0.2, 0.8, 3)), matrix, labels))
        self.check_result(matrix.grad, None)
        self.check_result(scores0.grad.shape, (3,))
        self.check_gradient(lambda s, t: loss_rel(s, t, matrix.data, labels),
                            [rng.uniform(0.2, 0.8, 3), rng.uniform(0.2, 0.8, 3)])

    def test_epipolar_exact_matches(self):
        """ true correspondences with one-hot descriptors have no epipolar error
        """
        p0, p2, fundamental = _epipolar_points()
        descriptors = np.eye(5, 8)
        value, flags = loss_epi(Tensor(p0), Tensor(p2), Tensor(descriptors), Tensor(descriptors), fundamental, K, K)
        self.check_close(value.item(), 0.0, atol=1e-4)
        shuffled, _ = loss_epi(Tensor(p0), Tensor(p2[::-1].copy()), Tensor(descriptors), Tensor(descriptors),
                               fundamental, K, K)
        self.check_result(shuffled.item() > 1e-3, True)
        self.check_result(flags, [])

    def test_epipolar_gradient(self, rng):
        """ gradients for keypoints of both views and both descriptor sets
        """
        p0, p2, fundamental = _epipolar_points(4)
        p2 = p2 + rng.uniform(-0.5, 0.5, p2.shape)
        d0, d2 = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
        self.check_gradient(lambda a, b, c, d: loss_epi(a, b, c, d, fundamental, K, K, temperature=0.5)[0],
                            [p0, p2, d0, d2])

    def test_epipolar_degenerate(self):
        """ keypoints on the epipoles skip the term with a flag
        """
        value, flags = loss_epi(Tensor([[0.0, 0.0]]), Tensor([[0.0, 0.0]]), Tensor(np.eye(1, 8)), Tensor(np.eye(1, 8)),
                                skew((0.0, 0.0, 1.0)))
        self.check_result((value.item(), flags), (0.0, [FLAG_EPI_DEGENERATE]))


class TestComputeLosses(TestBase):

    def test_planar_epoch_has_no_epipolar_term(self, toy_network, planar_triplet):
        """ epoch 1 computes pk/rp/rel/desc and backpropagates the weighted total
        """
        rng = np.random.default_rng(0)
        outputs = (toy_network.forward(planar_triplet.cube0, rng=rng),
                   toy_network.forward(planar_triplet.cube1, rng=rng, mask=planar_triplet.mask1), None)
        breakdown = compute_losses(outputs, planar_triplet, LossWeights(), toy_network.config, epoch=1)
        self.check_result(sorted(breakdown.terms), ['desc', 'pk', 'rel', 'rp'])
        self.check_close(breakdown.total, sum(breakdown.contributions.values()), atol=1e-6)
        self.check_result(FLAG_NO_LABELS in breakdown.flags or breakdown.terms['desc'] > 0, True)
        backward(breakdown.total_tensor)
        self.check_result(toy_network.parameters()['head.conv2.weight'].grad is not None, True)

    def test_epipolar_term_after_warm_up(self, toy_network, epipolar_triplet):
        """ epoch 6 adds the epipolar term for triplets with a second view
        """
        rng = np.random.default_rng(0)
        outputs = tuple(toy_network.forward(cube, rng=rng) for cube in
                        (epipolar_triplet.cube0, epipolar_triplet.cube1, epipolar_triplet.cube2))
        breakdown = compute_losses(outputs, epipolar_triplet, LossWeights(), toy_network.config, epoch=6)
        self.check_result('epi' in breakdown.terms, True)
        self.check_result(breakdown.weights['epi'], 0.25)
        nope = compute_losses(outputs, epipolar_triplet, LossWeights(), toy_network.config, epoch=6,
                              use_epipolar=False)
        self.check_result('epi' in nope.terms, False)
