# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 16:45'

Usage:
$ hykey gen-data --mode planar --count 500 --out data/planar --seed 0
$ hykey train --config train.toml --out runs/full
$ hykey eval --mode homography --ckpt runs/full/final.ckpt --data data/test --out reports/h.json
$ hykey match --ckpt runs/full/final.ckpt --a a.hcube --b b.hcube --out viz.svg
$ hykey inspect runs/full/final.ckpt
"""
import json
import os
from functools import wraps

import click
import numpy as np

from .__version__ import __version__
from .exception import HyKeyException, InvalidConfigException
from .geometry import FundamentalMatrix, Homography
from .hsidata import EPIPOLAR, PLANAR, DatasetManifest, SyntheticPairSpec, load_cube, read_cube_header, write_dataset
from .log_obj import log, set_log_level
from .matching import match_descriptors
from .metrics import HOMOGRAPHY, POSE, evaluate_homography, evaluate_pose
from .model import load_network, read_checkpoint
from .report import match_correctness, write_matches, write_report
from .training import FINAL_CHECKPOINT, Trainer, TrainConfig, build_network
from .utils import (CHECKPOINT_MAGIC, MANIFEST_NAME, config_echo, dump_json, k_confidence, k_datasets, k_epochs,
                    k_fundamental_threshold, k_homography_threshold, k_log_level, k_loss_preset, k_max_keypoints,
                    k_ransac_seed, k_repeatability_denominator, k_seed, k_threads, k_use_epipolar, load_run_config)


def handle_errors(f):
    """HyKeyException -> ClickException (exit code 1) with its code"""

    @wraps(f)
    def decorator(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except HyKeyException as e:
            raise click.ClickException(str(e))

    return decorator


def resolve_config(config_file, **overrides):
    config = load_run_config(config_file, overrides)
    set_log_level(config.get(k_log_level, 'INFO'))
    return config


@click.group()
@click.version_option(version=__version__)
def cli():
    """HyKey hyperspectral keypoints: data generation, training, evaluation and matching."""


@cli.command('gen-data')
@click.option('--mode', type=click.Choice([PLANAR, EPIPOLAR]), required=True)
@click.option('--count', type=click.IntRange(min=1), required=True)
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), required=True)
@click.option('--seed', type=int, default=None, help='defaults to SEED of the run config')
@click.option('--height', type=click.IntRange(min=8), default=32, show_default=True)
@click.option('--width', type=click.IntRange(min=8), default=32, show_default=True)
@click.option('--bands', type=click.IntRange(min=4), default=16, show_default=True)
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--force', is_flag=True, help='write into a non-empty directory')
@handle_errors
def gen_data(mode, count, out_dir, seed, height, width, bands, config_file, force):
    """Generate a synthetic dataset (cubes + manifest.json)."""
    config = resolve_config(config_file, **{k_seed: seed})
    if os.path.isdir(out_dir) and os.listdir(out_dir) and not force:
        raise click.ClickException(f'{out_dir} is not empty, pass --force to write into it')
    spec = SyntheticPairSpec(mode=mode, height=height, width=width, bands=bands)
    manifest = write_dataset(out_dir, mode, count, config[k_seed], spec, config[k_threads], config_echo(config))
    click.echo(os.path.join(out_dir, MANIFEST_NAME))
    return manifest


@cli.command()
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), required=True)
@click.option('--data', 'data_dirs', multiple=True, type=click.Path(exists=True), help='overrides DATASETS')
@click.option('--no-pe', is_flag=True, help='train without the epipolar term')
@click.option('--preset', type=click.Choice(['full', 'nope', 'rel_desc', 'pk_rel_desc', 'rp_rel_desc']),
              default=None)
@click.option('--seed', type=int, default=None)
@click.option('--epochs', type=click.IntRange(min=0), default=None)
@click.option('--max-steps', type=click.IntRange(min=0), default=None, help='stop after this many steps')
@click.option('--resume', type=click.Path(exists=True, dir_okay=False), default=None)
@handle_errors
def train(config_file, out_dir, data_dirs, no_pe, preset, seed, epochs, max_steps, resume):
    """Train a network, writing checkpoints and train_log.jsonl to OUT."""
    overrides = {k_seed: seed, k_loss_preset: preset, k_epochs: epochs}
    if data_dirs:
        overrides[k_datasets] = list(data_dirs)
    if no_pe:
        overrides[k_use_epipolar] = False
    config = resolve_config(config_file, **overrides)
    if not config[k_datasets]:
        raise InvalidConfigException('no training dataset given', field=k_datasets)
    train_config = TrainConfig.from_config(config)
    datasets = [DatasetManifest.load(path) for path in config[k_datasets]]
    os.makedirs(out_dir, exist_ok=True)
    echo = config_echo(config)
    with open(os.path.join(out_dir, 'config.json'), 'w', encoding='utf-8') as f:
        f.write(dump_json(echo, indent=2))
    log.info(f'loss weights {train_config.loss_weights.to_dict()}, epipolar term '
             f'{"on after epoch " + str(train_config.epipolar_start_epoch) if train_config.use_epipolar else "off"}')
    trainer = Trainer(build_network(train_config), datasets, train_config, out_dir, echo)
    if resume:
        trainer.resume(resume)
    trainer.fit(max_steps=max_steps)
    click.echo(os.path.join(out_dir, FINAL_CHECKPOINT))


@cli.command('eval')
@click.option('--mode', type=click.Choice([HOMOGRAPHY, POSE]), required=True)
@click.option('--ckpt', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--data', 'data_dir', type=click.Path(exists=True), required=True)
@click.option('--max-kpts', type=click.IntRange(min=1), default=None, help='defaults to MAX_KEYPOINTS (1024)')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), default='report.json', show_default=True)
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--threads', type=int, default=None)
@handle_errors
def evaluate(mode, ckpt, data_dir, max_kpts, out_path, config_file, threads):
    """Evaluate a checkpoint; writes report json + csv + svg curves."""
    config = resolve_config(config_file, **{k_max_keypoints: max_kpts, k_threads: threads})
    manifest = DatasetManifest.load(data_dir)
    if mode == POSE and not manifest.has_epipolar:
        raise click.ClickException(f'{data_dir} has no calibrated second views, pose evaluation needs epipolar data')
    network, _ = load_network(ckpt)
    echo = dict(config_echo(config), CHECKPOINT=os.path.abspath(ckpt), DATA=os.path.abspath(data_dir))
    if mode == HOMOGRAPHY:
        report = evaluate_homography(network, manifest, config[k_max_keypoints],
                                     denominator=config[k_repeatability_denominator],
                                     ransac_threshold=config[k_homography_threshold],
                                     confidence=config[k_confidence], seed=config[k_ransac_seed],
                                     threads=config[k_threads], config=echo)
    else:
        report = evaluate_pose(network, manifest, config[k_max_keypoints],
                               fundamental_threshold=config[k_fundamental_threshold],
                               confidence=config[k_confidence], seed=config[k_ransac_seed],
                               threads=config[k_threads], config=echo)
    write_report(report, out_path)
    click.echo(out_path)


def _read_matrix(path, name):
    with open(path, 'r', encoding='utf-8') as f:
        try:
            document = json.load(f)
        except ValueError as e:
            raise InvalidConfigException(f'{path} is not valid json: {e}', field=name)
    value = document.get(name, document) if isinstance(document, dict) else document
    matrix = np.asarray(value, dtype=np.float64)
    if matrix.shape != (3, 3):
        raise InvalidConfigException(f'{path} must hold a 3x3 {name}', field=name)
    return matrix


@cli.command()
@click.option('--ckpt', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--a', 'cube_a', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--b', 'cube_b', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), default='viz.svg', show_default=True)
@click.option('--homography', type=click.Path(exists=True, dir_okay=False), default=None,
              help='json with a 3x3 "homography" mapping A to B')
@click.option('--fundamental', type=click.Path(exists=True, dir_okay=False), default=None,
              help='json with a 3x3 "fundamental" (p_b^T F p_a = 0)')
@click.option('--max-kpts', type=click.IntRange(min=1), default=None)
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False), default=None)
@handle_errors
def match(ckpt, cube_a, cube_b, out_path, homography, fundamental, max_kpts, config_file):
    """Match two cubes and draw the correspondences (green/red with ground truth)."""
    if homography and fundamental:
        raise click.ClickException('give either --homography or --fundamental, not both')
    config = resolve_config(config_file, **{k_max_keypoints: max_kpts})
    network, _ = load_network(ckpt)
    cube0, cube1 = load_cube(cube_a), load_cube(cube_b)
    out0 = network.detect(cube0, config[k_max_keypoints])
    out1 = network.detect(cube1, config[k_max_keypoints])
    matches = match_descriptors(out0.descriptors.data, out1.descriptors.data, out0.keypoints.numpy(),
                                out1.keypoints.numpy())
    gt_h = Homography(_read_matrix(homography, 'homography')) if homography else None
    gt_f = FundamentalMatrix(_read_matrix(fundamental, 'fundamental')) if fundamental else None
    correct = match_correctness(matches, gt_h, gt_f)
    echo = dict(config_echo(config), CHECKPOINT=os.path.abspath(ckpt))
    svg_path, json_path = write_matches(out_path, cube0, cube1, matches, correct, echo)
    click.echo(svg_path)
    click.echo(json_path)


@cli.command()
@click.argument('path', type=click.Path(exists=True))
@handle_errors
def inspect(path):
    """Print a cube header, checkpoint metadata or manifest summary as json."""
    if os.path.isdir(path) or os.path.basename(path) == MANIFEST_NAME:
        manifest = DatasetManifest.load(path)
        document = {'mode': manifest.mode, 'seed': manifest.seed, 'triplets': len(manifest),
                    'frames': len(manifest.frames), 'epipolar': manifest.has_epipolar, 'config': manifest.config}
    else:
        with open(path, 'rb') as f:
            head = f.read(8)
        if head == CHECKPOINT_MAGIC[:8]:
            document, arrays = read_checkpoint(path)
            document = dict(document, parameters=int(sum(a.size for k, a in arrays.items() if k.startswith('param.'))))
        else:
            document = read_cube_header(path)
    click.echo(dump_json(document, indent=2))


def main():
    cli(prog_name='hykey')


if __name__ == '__main__':
    main()
