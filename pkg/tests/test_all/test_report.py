# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 19:20'

Usage:

"""
import json
import os

import numpy as np

from hykey.geometry import CorrespondenceSet, FundamentalMatrix, Homography
from hykey.metrics import HOMOGRAPHY, PLANAR_METRICS, POSE, EvalReport, aggregate_homography, aggregate_pose
from hykey.report import (CORRECT_COLOR, UNKNOWN_COLOR, WRONG_COLOR, match_correctness, matches_document,
                          render_curve, render_matches, report_curves, write_matches, write_report)
from hykey.utils import PIXEL_THRESHOLDS
from tests import TestBase

SHIFT = Homography(np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
# x-translation camera: epipolar lines are the image rows
ROW_F = FundamentalMatrix(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]))


def _planar_report():
    records = [dict({f'{m}@{t}': 0.5 for m in PLANAR_METRICS for t in PIXEL_THRESHOLDS}, pair=str(i)) for i in range(2)]
    aggregates, excluded = aggregate_homography(records)
    return EvalReport(HOMOGRAPHY, records, aggregates, excluded, {'SEED': 0})


class TestCurves(TestBase):

    def test_render_curve(self):
        """ first and last threshold land on the axis ends, labels are escaped
        """
        svg = render_curve('MMA', [1, 3, 5, 10, 20], {'a & b': [0.0, 0.5, 1.0, 1.0, 1.0]})
        self.check_result(svg.startswith('<svg'), True)
        self.check_result('44.0,204.0' in svg, True)
        self.check_result('348.0,28.0' in svg, True)
        self.check_result('a &amp; b' in svg, True)

    def test_missing_values_are_skipped(self):
        """ None points are left out of the polyline
        """
        svg = render_curve('REP', [1, 20], {'x': [None, 1.0], 'y': [0.0, 0.0]})
        self.check_result(svg.count('<polyline'), 2)
        self.check_result('points="348.0,28.0"' in svg, True)

    def test_report_curves(self):
        """ one curve per planar metric, one maa curve for pose
        """
        self.check_result(sorted(report_curves(_planar_report())), sorted(PLANAR_METRICS))
        aggregates, excluded = aggregate_pose([{'pair': '0', 'pose_error': 3.0, 'success': True}])
        pose = EvalReport(POSE, [], aggregates, excluded)
        self.check_result(list(report_curves(pose)), ['maa'])

    def test_write_report(self, tmp_path):
        """ json, csv and the svg curves next to each other
        """
        path = str(tmp_path / 'out' / 'report.json')
        written = write_report(_planar_report(), path)
        names = sorted(os.path.basename(p) for p in written)
        self.check_result(names, sorted(['report.json', 'report.csv'] + [f'report_{m}.svg' for m in PLANAR_METRICS]))
        with open(path, encoding='utf-8') as f:
            document = json.load(f)
        self.check_result(document['mode'], HOMOGRAPHY)
        self.check_close(document['aggregates']['rep']['auc'], 0.5)
        self.check_result(document['config'], {'SEED': 0})


class TestMatchDrawing(TestBase):

    def test_correctness_under_homography(self):
        """ reprojection error 0 and 4 px against the 3 px radius
        """
        matches = CorrespondenceSet([[5.0, 5.0], [5.0, 5.0]], [[7.0, 5.0], [7.0, 9.0]])
        self.check_result(match_correctness(matches, homography=SHIFT).tolist(), [True, False])

    def test_correctness_under_fundamental(self):
        """ row offset 2 is within sqrt(2) * 5, row offset 15 is not
        """
        matches = CorrespondenceSet([[10.0, 10.0], [10.0, 10.0]], [[30.0, 12.0], [10.0, 25.0]])
        self.check_result(match_correctness(matches, fundamental=ROW_F).tolist(), [True, False])
        self.check_result(match_correctness(CorrespondenceSet(np.zeros((0, 2)), np.zeros((0, 2))),
                                            fundamental=ROW_F).tolist(), [])

    def test_correctness_unknown(self):
        """ no ground truth
        """
        self.check_result(match_correctness(CorrespondenceSet([[1.0, 1.0]], [[1.0, 1.0]])), None)

    def test_render_matches(self, toy_cube):
        """ colours follow correctness, view 1 is offset by its width plus the margin
        """
        matches = CorrespondenceSet([[3.0, 4.0], [8.0, 8.0]], [[1.0, 1.0], [2.0, 2.0]])
        svg = render_matches(toy_cube, toy_cube, matches, np.array([True, False]))
        self.check_result(svg.count('<line'), 2)
        self.check_result(CORRECT_COLOR in svg and WRONG_COLOR in svg, True)
        self.check_result('x2="27.0"' in svg, True)
        self.check_result('1/2 correct' in svg, True)
        self.check_result(svg.count('data:image/png;base64,'), 2)
        self.check_result(UNKNOWN_COLOR in render_matches(toy_cube, toy_cube, matches), True)

    def test_write_matches(self, toy_cube, tmp_path):
        """ svg plus the json match list with the config echo
        """
        matches = CorrespondenceSet([[3.0, 4.0]], [[5.0, 4.0]], similarity=[0.8], index0=[7], index1=[2])
        correct = match_correctness(matches, homography=SHIFT)
        document = matches_document(matches, correct, {'SEED': 1})
        self.check_result(document['count'], 1)
        self.check_result((document['matches'][0]['index0'], document['matches'][0]['correct']), (7, True))

        svg_path, json_path = write_matches(str(tmp_path / 'viz.svg'), toy_cube, toy_cube, matches, correct,
                                            {'SEED': 1})
        self.check_result(os.path.isfile(svg_path), True)
        with open(json_path, encoding='utf-8') as f:
            written = json.load(f)
        self.check_result(written['config'], {'SEED': 1})
        self.check_close(written['matches'][0]['p1'], [5.0, 4.0])
        self.check_close(written['matches'][0]['similarity'], 0.8)
