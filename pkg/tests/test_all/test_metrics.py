# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 18:55'

Usage:

"""
import csv
import json
import math

import numpy as np
import pytest

from hykey.exception import InvalidConfigException
from hykey.geometry import CorrespondenceSet, Intrinsics, RelativePose, apply_homography, rotation_about_axis
from hykey.hsidata import EPIPOLAR, PLANAR, DatasetManifest, SyntheticPairSpec, write_dataset
from hykey.metrics import (EvalReport, ThresholdCurve, aggregate_homography, aggregate_pose, auc, covisible,
                           evaluate_homography, evaluate_pose, homography_record, maa, matching_score, mha, mma,
                           pose_auc, pose_record, repeatability)
from tests import TestBase

SHAPES = ((32, 32), (32, 32))


def _unit_rows(rng, count, dim=8):
    rows = rng.normal(size=(count, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


class TestPlanarMetrics(TestBase):

    def test_repeatability_self_pair(self, rng):
        """ identical detections under the identity are fully repeatable
        """
        kpts = rng.uniform(2, 29, (15, 2))
        self.check_result(repeatability(kpts, kpts, np.eye(3), 1, SHAPES), 1.0)

    def test_repeatability_shift_beyond_tau(self, rng):
        """ detections moved by tau + 1 are never re-detected
        """
        kpts = np.array([[4.0, 4.0], [4.0, 20.0], [20.0, 4.0], [20.0, 20.0]])
        self.check_result(repeatability(kpts, kpts + [4.0, 0.0], np.eye(3), 3, SHAPES), 0.0)

    def test_repeatability_counting(self):
        """ 7 of 10 keypoints re-detected each way gives 0.7
        """
        kpts0 = np.stack([np.arange(10) * 3.0 + 1.0, np.full(10, 5.0)], axis=1)
        kpts1 = kpts0.copy()
        kpts1[7:, 1] += 10.0
        self.check_close(repeatability(kpts0, kpts1, np.eye(3), 1, SHAPES), 0.7, atol=1e-12)

    def test_repeatability_threshold_is_inclusive(self):
        """ a re-detection at exactly tau counts
        """
        kpts = np.array([[5.0, 5.0]])
        self.check_result(repeatability(kpts, kpts + [3.0, 0.0], np.eye(3), 3, SHAPES), 1.0)

    def test_repeatability_nothing_covisible(self):
        """ keypoints that leave the frame make the value undefined
        """
        far = np.array([[1.0, 0.0, 100.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        self.check_result(repeatability([[5.0, 5.0]], [[6.0, 6.0]], far, 3, SHAPES), None)

    def test_repeatability_min_denominator(self):
        """ mean hit count over the smaller covisible set, capped at 1
        """
        kpts0 = np.array([[5.0, 5.0], [15.0, 15.0]])
        kpts1 = np.array([[5.0, 5.0], [15.0, 15.0], [25.0, 25.0], [25.0, 5.0]])
        self.check_close(repeatability(kpts0, kpts1, np.eye(3), 1, SHAPES), 4 / 6.0)
        self.check_result(repeatability(kpts0, kpts1, np.eye(3), 1, SHAPES, denominator='min'), 1.0)
        with pytest.raises(InvalidConfigException):
            repeatability(kpts0, kpts1, np.eye(3), 1, SHAPES, denominator='max')

    def test_covisible_mask(self):
        """ projections onto invalid pixels are not covisible
        """
        mask = np.ones((32, 32), dtype=bool)
        mask[5, 5] = False
        result = covisible(np.array([[5.0, 5.0], [6.0, 6.0]]), np.eye(3), (32, 32), mask)
        self.check_result(result.tolist(), [False, True])

    def test_matching_score(self, rng):
        """ 12 correct matches over 20 covisible keypoints gives 0.6
        """
        p0 = rng.uniform(0, 30, (15, 2))
        p1 = p0.copy()
        p1[12:] += 10.0
        matches = CorrespondenceSet(p0, p1)
        self.check_close(matching_score(matches, np.eye(3), 3, (20, 25)), 0.6)
        self.check_result(matching_score(CorrespondenceSet(np.zeros((0, 2)), np.zeros((0, 2))), np.eye(3), 3,
                                         (20, 25)), 0.0)
        self.check_result(matching_score(matches, np.eye(3), 3, (0, 25)), None)

    def test_mma(self, rng):
        """ half the matches moved by 2 tau
        """
        p0 = rng.uniform(0, 30, (10, 2))
        p1 = p0.copy()
        p1[::2, 0] += 6.0
        matches = CorrespondenceSet(p0, p1)
        self.check_close(mma(matches, np.eye(3), 3), 0.5)
        self.check_result(mma(CorrespondenceSet(np.zeros((0, 2)), np.zeros((0, 2))), np.eye(3), 3), None)

    def test_mha(self, rng):
        """ exact correspondences align at every tau; corner error 7 px passes 10 but not 5
        """
        h = np.array([[1.0, 0.05, 2.0], [-0.03, 0.98, 1.0], [0.0, 0.0, 1.0]])
        p0 = rng.uniform(0, 32, (20, 2))
        matches = CorrespondenceSet(p0, apply_homography(h, p0))
        self.check_result([mha(matches, h, (32, 32), t) for t in (1, 3, 5, 10, 20)], [1, 1, 1, 1, 1])
        self.check_result((mha(matches, h, (32, 32), 5, corner_error=7.0),
                           mha(matches, h, (32, 32), 10, corner_error=7.0)), (0, 1))
        self.check_result(mha(matches.subset(np.arange(20) < 3), h, (32, 32), 20), 0)


class TestCurves(TestBase):

    def test_auc_constant_curves(self):
        """ constant 1 and constant 0 curves
        """
        self.check_close(auc([1, 1, 1, 1, 1]), 1.0)
        self.check_close(auc([0, 0, 0, 0, 0]), 0.0)

    def test_auc_is_normalised_trapezoid(self):
        """ (0.5 + 1 + 3.75 + 10) / 19 for [0, .5, .5, 1, 1]
        """
        self.check_close(auc([0, 0.5, 0.5, 1, 1]), 15.25 / 19.0, atol=1e-12)
        self.check_close(ThresholdCurve.from_values([0, 0.5, 0.5, 1, 1]).auc, 15.25 / 19.0, atol=1e-12)

    def test_auc_shape_check(self):
        """ values and thresholds must pair up
        """
        with pytest.raises(InvalidConfigException):
            auc([1, 1], (1, 3, 5))
        self.check_result(auc([0.4], (3,)), 0.4)

    def test_maa(self):
        """ errors [3, 8, 15, 25] give 25 / 50 / 75 %
        """
        self.check_result(maa([3.0, 8.0, 15.0, 25.0]), {5: 0.25, 10: 0.5, 20: 0.75})
        self.check_result(maa([None, None]), {5: 0.0, 10: 0.0, 20: 0.0})
        self.check_result(maa([0.0, 0.0]), {5: 1.0, 10: 1.0, 20: 1.0})

    def test_pose_auc(self):
        """ perfect poses give 1, failures give 0, a single 5 deg error leaves three quarters of the 10 deg area
        """
        self.check_close(list(pose_auc([0.0, 0.0]).values()), [1.0, 1.0, 1.0])
        self.check_close(list(pose_auc([None]).values()), [0.0, 0.0, 0.0])
        self.check_close(pose_auc([5.0], (10,))[10], 0.75)


class TestAggregation(TestBase):

    def test_excluded_pairs(self):
        """ None values are left out of the mean and counted
        """
        records = [{'rep@1': 1.0, 'ms@1': None, 'mma@1': 0.5, 'mha@1': 1},
                   {'rep@1': 0.5, 'ms@1': 0.2, 'mma@1': None, 'mha@1': 0}]
        aggregates, excluded = aggregate_homography(records, (1,))
        self.check_close(aggregates['rep']['values'], [0.75])
        self.check_close(aggregates['ms']['auc'], 0.2)
        self.check_result(excluded, {'rep': 0, 'ms': 1, 'mma': 1, 'mha': 0})

    def test_undefined_curve_has_no_auc(self):
        """ a threshold where every pair is undefined
        """
        aggregates, _ = aggregate_homography([{'rep@1': None, 'rep@3': 1.0}], (1, 3))
        self.check_result(aggregates['rep']['auc'], None)

    def test_excluded_counts_every_threshold(self):
        """ a pair undefined at the first threshold only is still counted once
        """
        records = [{'rep@1': None, 'rep@3': 1.0}, {'rep@1': 0.5, 'rep@3': 0.5}]
        _, excluded = aggregate_homography(records, (1, 3))
        self.check_result(excluded['rep'], 1)

    def test_pose_aggregate(self):
        """ failures count as infinite error
        """
        records = [{'pose_error': 3.0, 'success': True}, {'pose_error': None, 'success': False}]
        aggregates, _ = aggregate_pose(records)
        self.check_result(aggregates['maa'], {'5': 0.5, '10': 0.5, '20': 0.5})
        self.check_result(aggregates['failures'], 1)
        self.check_result(aggregates['conventions']['translation_error'].startswith('min(angle, 180 - angle)'), True)

    def test_report_files(self, tmp_path):
        """ json document and one csv row per pair, None written as an empty cell
        """
        report = EvalReport(PLANAR, [{'pair': '0', 'rep@1': 1.0}, {'pair': '1', 'rep@1': None, 'extra': 2}],
                            {'rep': {'auc': 1.0}}, {'rep': 1}, {'SEED': 0})
        report.write_json(str(tmp_path / 'r.json'))
        report.write_csv(str(tmp_path / 'r.csv'))
        with open(tmp_path / 'r.json', 'r', encoding='utf-8') as f:
            self.check_result(json.load(f)['excluded'], {'rep': 1})
        with open(tmp_path / 'r.csv', 'r', encoding='utf-8') as f:
            rows = list(csv.reader(f))
        self.check_result(rows, [['pair', 'rep@1', 'extra'], ['0', '1.0', ''], ['1', '', '2']])


class TestRecords(TestBase):

    def test_self_pair(self, rng):
        """ a detector against itself under the identity: Rep = MMA = MHA = 1
        """
        kpts = rng.uniform(2, 29, (20, 2))
        descriptors = _unit_rows(rng, 20)
        record = homography_record('0', kpts, descriptors, kpts, descriptors, np.eye(3), SHAPES)
        for t in (1, 3, 5, 10, 20):
            self.check_result((record[f'rep@{t}'], record[f'mma@{t}'], record[f'mha@{t}'], record[f'ms@{t}']),
                              (1.0, 1.0, 1, 1.0))
        self.check_result(record['num_matches'], 20)

    def test_pose_from_exact_matches(self, rng):
        """ exact correspondences recover the relative pose within half a degree
        """
        k = Intrinsics(100.0, 100.0, 50.0, 50.0)
        rotation = rotation_about_axis((0.0, 1.0, 0.2), 0.1)
        translation = np.array([1.0, 0.0, 0.2])
        world = np.stack([rng.uniform(-1, 1, 40), rng.uniform(-1, 1, 40), rng.uniform(4, 8, 40)], axis=1)
        kpts0 = apply_homography(k.matrix, world[:, :2] / world[:, 2:])
        camera2 = world @ rotation.T + translation
        kpts2 = apply_homography(k.matrix, camera2[:, :2] / camera2[:, 2:])
        descriptors = _unit_rows(rng, 40, 16)
        record = pose_record('0', kpts0, descriptors, kpts2, descriptors, k, k, RelativePose(rotation, translation))
        self.check_result(record['success'], True)
        self.check_result(record['pose_error'] < 0.5, True)
        self.check_result(record['pose_error'], max(record['rotation_error'], record['translation_error']))

    def test_pose_failure_record(self, rng):
        """ fewer than 8 matches is a failed pair, not an exception
        """
        k = Intrinsics(100.0, 100.0, 50.0, 50.0)
        kpts = rng.uniform(0, 100, (5, 2))
        descriptors = _unit_rows(rng, 5)
        record = pose_record('0', kpts, descriptors, kpts, descriptors, k, k,
                             RelativePose(np.eye(3), [1.0, 0.0, 0.0]))
        self.check_result((record['success'], record['pose_error']), (False, None))


class TestEvaluation(TestBase):

    def test_homography_benchmark(self, toy_network, tmp_path):
        """ one record per pair, threads do not change the numbers
        """
        write_dataset(str(tmp_path), PLANAR, 2, seed=0, spec=SyntheticPairSpec(height=16, width=16))
        manifest = DatasetManifest.load(str(tmp_path))
        network = toy_network.eval()
        report = evaluate_homography(network, manifest, max_keypoints=32, config={'SEED': 0})
        self.check_result(len(report.records), 2)
        self.check_result(sorted(report.aggregates), ['ms', 'mha', 'mma', 'rep'])
        self.check_result(report.config, {'SEED': 0})
        threaded = evaluate_homography(network, manifest, max_keypoints=32, threads=2)
        self.check_result(json.dumps(threaded.records, default=str), json.dumps(report.records, default=str))

    def test_pose_benchmark(self, toy_network, tmp_path):
        """ pose rows for epipolar data, planar data is refused
        """
        write_dataset(str(tmp_path / 'e'), EPIPOLAR, 1, seed=0, spec=SyntheticPairSpec(height=16, width=16))
        report = evaluate_pose(toy_network.eval(), DatasetManifest.load(str(tmp_path / 'e')), max_keypoints=32)
        self.check_result(len(report.records), 1)
        self.check_result(sorted(report.aggregates), ['conventions', 'failures', 'maa', 'pose_auc'])
        error = report.records[0]['pose_error']
        self.check_result(error is None or (math.isfinite(error) and error >= 0), True)
        write_dataset(str(tmp_path / 'p'), PLANAR, 1, seed=0, spec=SyntheticPairSpec(height=16, width=16))
        with pytest.raises(InvalidConfigException):
            evaluate_pose(toy_network, DatasetManifest.load(str(tmp_path / 'p')))
