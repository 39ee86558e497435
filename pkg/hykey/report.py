# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 16:10'

Usage:
artifact writers: report json + csv, svg threshold curves, svg match visualisations

>>> paths = write_report(report, 'out/report.json')
>>> svg = render_matches(cube0, cube1, matches, correct)
"""
import os

import numpy as np
from jinja2 import Environment, PackageLoader, select_autoescape

from .exception import GeometryError
from .geometry import CorrespondenceSet, sampson_distance
from .hsidata import HsiCube
from .log_obj import log
from .metrics import HOMOGRAPHY, PLANAR_METRICS, reprojection_errors
from .utils import dump_json, rgb_to_png_base64

# correctness radius of drawn matches, px
PLANAR_MATCH_THRESHOLD = 3.0
EPIPOLAR_MATCH_THRESHOLD = 5.0
CORRECT_COLOR = '#00c000'
WRONG_COLOR = '#e00000'
UNKNOWN_COLOR = '#00a0ff'
CURVE_COLORS = ('#1f77b4', '#ff7f0e', '#2ca02c', '#d62728')
MATCH_MARGIN = 10

_env = Environment(loader=PackageLoader('hykey', 'templates'), autoescape=select_autoescape(['j2', 'svg']),
                   trim_blocks=True, lstrip_blocks=True)


def render_curve(title, thresholds, series, x_label='threshold [px]', width=360, height=240):
    """
    line plot of metric curves over thresholds, y in [0, 1]
    :param title:
    :param thresholds: x values
    :param series: label -> values (None entries are skipped)
    :return: svg text
    """
    left, right, top, bottom = 44, width - 12, 28, height - 36
    low, high = float(thresholds[0]), float(thresholds[-1])
    span = (high - low) or 1.0

    def x_of(t):
        return round(left + (float(t) - low) / span * (right - left), 2)

    def y_of(v):
        return round(bottom - float(v) * (bottom - top), 2)

    curves = []
    for i, (label, values) in enumerate(series.items()):
        points = ' '.join(f'{x_of(t)},{y_of(v)}' for t, v in zip(thresholds, values) if v is not None)
        curves.append({'label': label, 'points': points, 'color': CURVE_COLORS[i % len(CURVE_COLORS)]})
    return _env.get_template('curve.svg.j2').render(
        title=title, width=width, height=height, left=left, right=right, top=top, bottom=bottom,
        x_label=x_label,
        x_ticks=[{'x': x_of(t), 'label': t} for t in thresholds],
        y_ticks=[{'y': y_of(v), 'label': f'{v:.1f}'} for v in (0.0, 0.25, 0.5, 0.75, 1.0)],
        curves=curves,
    )


def report_curves(report):
    """
    :param report: EvalReport
    :return: {file stem: svg text}
    """
    if report.mode == HOMOGRAPHY:
        out = {}
        for metric in PLANAR_METRICS:
            curve = report.aggregates[metric]
            auc = curve.get('auc')
            label = f'{metric} (AUC {auc:.3f})' if auc is not None else metric
            out[metric] = render_curve(metric.upper(), curve['thresholds'], {label: curve['values']})
        return out
    maa = report.aggregates['maa']
    thresholds = [float(t) for t in maa]
    return {'maa': render_curve('mAA', thresholds, {'mAA': list(maa.values())}, x_label='threshold [deg]')}


def write_report(report, path):
    """
    json at `path`, csv and svg curves next to it
    :param report: EvalReport
    :param path: json path
    :return: list of written paths
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    stem = os.path.splitext(path)[0]
    written = [report.write_json(path), report.write_csv(f'{stem}.csv')]
    for name, svg in report_curves(report).items():
        svg_path = f'{stem}_{name}.svg'
        with open(svg_path, 'w', encoding='utf-8') as f:
            f.write(svg)
        written.append(svg_path)
    log.info(f'report written to {path} ({len(written)} files)')
    return written


def match_correctness(matches: CorrespondenceSet, homography=None, fundamental=None):
    """
    per-match correctness against ground truth geometry
    1. homography: reprojection error < 3 px
    2. fundamental: sqrt(Sampson distance) < 5 px
    :return: bool array, or None without ground truth
    """
    if homography is not None:
        return reprojection_errors(matches, homography) < PLANAR_MATCH_THRESHOLD
    if fundamental is not None:
        if len(matches) == 0:
            return np.zeros(0, dtype=bool)
        try:
            distance = np.sqrt(sampson_distance(fundamental, matches.p0, matches.p1))
        except GeometryError:
            return np.zeros(len(matches), dtype=bool)
        return distance < EPIPOLAR_MATCH_THRESHOLD
    return None


def _display(cube: HsiCube):
    return rgb_to_png_base64(cube.normalised().pseudo_rgb())


def render_matches(cube0: HsiCube, cube1: HsiCube, matches: CorrespondenceSet, correct=None, title='matches'):
    """
    side-by-side pseudo-rgb views joined by one line per match, green/red when correctness is known
    :param cube0:
    :param cube1:
    :param matches:
    :param correct: bool per match or None
    :param title:
    :return: svg text
    """
    height0, width0 = cube0.shape[1:]
    height1, width1 = cube1.shape[1:]
    offset = width0 + MATCH_MARGIN
    lines = []
    for i, (p0, p1) in enumerate(zip(matches.p0, matches.p1)):
        if correct is None:
            color = UNKNOWN_COLOR
        else:
            color = CORRECT_COLOR if correct[i] else WRONG_COLOR
        lines.append({'x0': round(float(p0[0]), 2), 'y0': round(float(p0[1]), 2),
                      'x1': round(float(p1[0]) + offset, 2), 'y1': round(float(p1[1]), 2), 'color': color})
    caption = f'{len(matches)} matches' if correct is None else f'{int(np.sum(correct))}/{len(matches)} correct'
    return _env.get_template('matches.svg.j2').render(
        title=title, width=offset + width1, height=max(height0, height1), width0=width0, height0=height0,
        width1=width1, height1=height1, offset=offset, image0=_display(cube0), image1=_display(cube1), lines=lines,
        caption=caption,
    )


def matches_document(matches: CorrespondenceSet, correct=None, config=None):
    """json-able match list, one entry per drawn line"""
    rows = []
    for i in range(len(matches)):
        row = {'index0': int(matches.index0[i]), 'index1': int(matches.index1[i]),
               'p0': matches.p0[i], 'p1': matches.p1[i], 'similarity': float(matches.similarity[i])}
        if correct is not None:
            row['correct'] = bool(correct[i])
        rows.append(row)
    return {'matches': rows, 'count': len(rows), 'config': dict(config or {})}


def write_matches(path, cube0, cube1, matches, correct=None, config=None):
    """
    svg at `path` and the match list as json next to it
    :return: (svg path, json path)
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(render_matches(cube0, cube1, matches, correct, os.path.basename(path)))
    json_path = f'{os.path.splitext(path)[0]}.json'
    with open(json_path, 'w', encoding='utf-8') as f:
        f.write(dump_json(matches_document(matches, correct, config), indent=2))
    log.info(f'{len(matches)} matches drawn to {path}')
    return path, json_path
