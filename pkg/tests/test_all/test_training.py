# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 19:02'

Usage:

"""
import json
import os

import numpy as np
import pytest

from hykey.exception import CheckpointError, InvalidConfigException
from hykey.hsidata import EPIPOLAR, PLANAR, SyntheticDataset, SyntheticPairSpec
from hykey.model import HyKeyConfig, HyKeyNetwork, read_checkpoint
from hykey.tensor import Tensor
from hykey.training import (FINAL_CHECKPOINT, LAST_CHECKPOINT, TRAIN_LOG_NAME, AdamState, Trainer, TrainConfig,
                            adam_step, clip_gradients, epoch_schedule, lr_schedule)
from hykey.utils import k_batch_size, k_learning_rate, k_loss_preset, k_model
from tests import TestBase


def _dataset(count=4):
    return SyntheticDataset(PLANAR, count, seed=0, spec=SyntheticPairSpec(height=16, width=16))


def _train_config(toy_config, **kwargs):
    values = dict(batch_size=2, epochs=1, warmup_steps=2, use_epipolar=False, model=toy_config)
    values.update(kwargs)
    return TrainConfig(**values)


class TestSchedule(TestBase):

    def test_warmup(self):
        """ zero before the first step, half way at 250, flat from 500
        """
        config = TrainConfig()
        self.check_result(lr_schedule(0, config), 0.0)
        self.check_close(lr_schedule(250, config), 1.5e-4, atol=1e-15)
        self.check_close(lr_schedule(500, config), 3e-4, atol=1e-15)
        self.check_close(lr_schedule(5000, config), 3e-4, atol=1e-15)

    def test_no_warmup(self):
        """ warmup_steps 0 starts at the base rate
        """
        self.check_result(lr_schedule(0, TrainConfig(warmup_steps=0)), 3e-4)

    def test_single_dataset_epoch(self):
        """ a permutation cut at the frame cap, in batches
        """
        batches = epoch_schedule([10], 5, 2, np.random.default_rng(0))
        self.check_result([len(b) for b in batches], [2, 2, 1])
        items = [i for batch in batches for d, i in batch]
        self.check_result(len(set(items)), 5)
        self.check_result({d for batch in batches for d, _ in batch}, {0})

    def test_mixed_datasets_alternate(self):
        """ slots alternate, the small dataset is topped up with replacement
        """
        batches = epoch_schedule([3, 10], 8, 4, np.random.default_rng(0))
        slots = [slot for batch in batches for slot in batch]
        self.check_result([d for d, _ in slots], [0, 1] * 4)
        small = [i for d, i in slots if d == 0]
        self.check_result(set(small[:3]), {0, 1, 2})
        self.check_result(0 <= small[3] < 3, True)
        large = [i for d, i in slots if d == 1]
        self.check_result(len(set(large)), 4)

    def test_schedule_is_seeded(self):
        """ same generator seed, same order
        """
        a = epoch_schedule([7, 9], 12, 3, np.random.default_rng(4))
        b = epoch_schedule([7, 9], 12, 3, np.random.default_rng(4))
        self.check_result(a, b)

    def test_empty_dataset(self):
        """ a dataset without triplets cannot be scheduled
        """
        with pytest.raises(InvalidConfigException):
            epoch_schedule([4, 0], 10, 2, np.random.default_rng(0))
        with pytest.raises(InvalidConfigException):
            epoch_schedule([], 10, 2, np.random.default_rng(0))


class TestOptimiser(TestBase):

    def test_first_adam_step_moves_by_lr(self):
        """ bias correction makes the first update lr * sign(grad)
        """
        params = {'w': Tensor(np.array([1.0, 2.0]), requires_grad=True)}
        state = AdamState.for_parameters(params)
        applied = adam_step(params, {'w': np.array([0.5, -2.0])}, state, 0.1)
        self.check_result(applied, True)
        self.check_result(state.step, 1)
        self.check_close(params['w'].data, [0.9, 2.1], atol=1e-6)

    def test_missing_gradient_is_zero(self):
        """ a parameter without gradient stays put
        """
        params = {'w': Tensor(np.array([1.0, 2.0]), requires_grad=True)}
        state = AdamState.for_parameters(params)
        adam_step(params, {'w': None}, state, 0.1)
        self.check_close(params['w'].data, [1.0, 2.0])

    def test_non_finite_gradient_skips(self):
        """ nan anywhere leaves parameters and step counter untouched
        """
        params = {'a': Tensor(np.ones(2), requires_grad=True), 'b': Tensor(np.ones(2), requires_grad=True)}
        state = AdamState.for_parameters(params)
        applied = adam_step(params, {'a': np.ones(2), 'b': np.array([np.nan, 0.0])}, state, 0.1)
        self.check_result(applied, False)
        self.check_result(state.step, 0)
        self.check_close(params['a'].data, np.ones(2))

    def test_clip_gradients(self):
        """ global norm 5 clipped to 1
        """
        grads = {'a': np.array([3.0, 0.0]), 'b': np.array([0.0, 4.0]), 'c': None}
        clipped, norm, done = clip_gradients(grads, 1.0)
        self.check_close(norm, 5.0)
        self.check_result(done, True)
        self.check_close(clipped['a'], [0.6, 0.0])
        self.check_close(clipped['b'], [0.0, 0.8])
        self.check_result(clipped['c'], None)

    def test_clip_below_norm_or_disabled(self):
        """ nothing happens under the limit or without one
        """
        grads = {'a': np.array([3.0, 4.0])}
        self.check_result(clip_gradients(grads, 10.0)[2], False)
        self.check_result(clip_gradients(grads, None)[2], False)

    def test_adam_state_load_errors(self):
        """ missing entries and wrong shapes
        """
        params = {'w': Tensor(np.zeros((2, 3)), requires_grad=True)}
        state = AdamState.for_parameters(params)
        with pytest.raises(CheckpointError):
            state.load({'adam.m.w': np.zeros((2, 3))}, state.meta())
        with pytest.raises(CheckpointError):
            state.load({'adam.m.w': np.zeros((2, 3)), 'adam.v.w': np.zeros(6)}, state.meta())
        loaded = state.load({'adam.m.w': np.ones((2, 3)), 'adam.v.w': np.ones((2, 3))}, dict(state.meta(), step=7))
        self.check_result(loaded.step, 7)
        self.check_close(loaded.m['w'], np.ones((2, 3)))


class TestTrainConfig(TestBase):

    def test_validation(self):
        """ the failing field is named
        """
        with pytest.raises(InvalidConfigException) as e:
            TrainConfig(learning_rate=0.0)
        self.check_result(e.value.field, k_learning_rate)
        with pytest.raises(InvalidConfigException) as e:
            TrainConfig(batch_size=0)
        self.check_result(e.value.field, k_batch_size)
        with pytest.raises(InvalidConfigException):
            TrainConfig(grad_clip=-1.0)
        self.check_result(TrainConfig(grad_clip=None).grad_clip, None)

    def test_from_config_preset(self):
        """ the nope preset zeroes the epipolar weight and switches the term off
        """
        config = TrainConfig.from_config({k_loss_preset: 'nope', k_model: {'channels': [4, 4, 8],
                                                                           'descriptor_dim': 8}})
        self.check_result(config.loss_weights.epi, 0.0)
        self.check_result(config.use_epipolar, False)
        self.check_result(config.model.channels, (4, 4, 8))
        self.check_result(config.grad_clip, None)

    def test_from_config_bad_value(self):
        """ a non-numeric batch size
        """
        with pytest.raises(InvalidConfigException):
            TrainConfig.from_config({k_batch_size: 'six'})
        with pytest.raises(InvalidConfigException):
            TrainConfig.from_config({k_loss_preset: 'everything'})


class TestTrainer(TestBase):

    def test_needs_data(self, toy_config, toy_network):
        """ empty datasets are rejected up front
        """
        with pytest.raises(InvalidConfigException):
            Trainer(toy_network, [], _train_config(toy_config))
        with pytest.raises(InvalidConfigException):
            Trainer(toy_network, [_dataset(0)], _train_config(toy_config))

    def test_train_step_record(self, toy_config, toy_network):
        """ one step updates the parameters and reports every field
        """
        trainer = Trainer(toy_network, [_dataset()], _train_config(toy_config))
        before = {k: v.copy() for k, v in toy_network.state_arrays().items()}
        record = trainer.train_step([trainer.datasets[0].load_triplet(i) for i in range(2)], epoch=1)
        self.check_result(sorted(record), sorted(['step', 'epoch', 'lr', 'terms', 'weights', 'contributions', 'total',
                                                  'keypoints', 'flags', 'grad_norm', 'clipped', 'skipped']))
        self.check_result(record['step'], 1)
        self.check_close(record['lr'], 1.5e-4, atol=1e-15)
        self.check_result(record['skipped'], False)
        self.check_result(set(record['terms']) <= {'pk', 'rp', 'rel', 'desc', 'epi'}, True)
        self.check_result(record['weights']['epi'], 0.0)
        self.check_result([k[2] for k in record['keypoints']], [0, 0])
        self.check_result(bool(np.isfinite(record['total'])), True)
        after = toy_network.state_arrays()
        self.check_result(any(not np.array_equal(before[k], after[k]) for k in before), True)

    def test_epipolar_switch_before_start_epoch(self, toy_config):
        """ before the epipolar term starts, the full and the noPE runs see the same views and the same loss
        """
        data = SyntheticDataset(EPIPOLAR, 2, seed=0, spec=SyntheticPairSpec(height=24, width=24))
        records = []
        for use_epipolar in (True, False):
            trainer = Trainer(HyKeyNetwork(toy_config, seed=0), [data],
                              _train_config(toy_config, use_epipolar=use_epipolar))
            records.append(trainer.train_step([data.load_triplet(i) for i in range(2)], epoch=1))
        full, no_epipolar = records
        self.check_close(full['total'], no_epipolar['total'])
        self.check_result(full['keypoints'], no_epipolar['keypoints'])
        self.check_result(all(k[2] > 0 for k in full['keypoints']), True)
        for record in records:
            self.check_result(record['contributions']['epi'], 0.0)
            self.check_result(record['weights']['epi'], 0.0)

    def test_checkpoint_mismatch(self, toy_config, toy_network, tmp_path):
        """ resuming into a different architecture
        """
        trainer = Trainer(toy_network, [_dataset()], _train_config(toy_config))
        path = trainer.save_checkpoint(str(tmp_path / 'a.ckpt'))
        other = _train_config(HyKeyConfig(channels=(4, 4, 4), descriptor_dim=8))
        with pytest.raises(CheckpointError):
            Trainer(HyKeyNetwork(other.model, seed=0), [_dataset()], other).resume(path)

    @pytest.mark.slow
    def test_fit_writes_log_and_checkpoints(self, toy_config, toy_network, tmp_path):
        """ one epoch of two steps, one log line per step
        """
        out_dir = str(tmp_path / 'run')
        logs = Trainer(toy_network, [_dataset()], _train_config(toy_config), out_dir).fit()
        self.check_result([(log['epoch'], log['steps'], log['complete']) for log in logs], [(1, 2, True)])
        with open(os.path.join(out_dir, TRAIN_LOG_NAME), encoding='utf-8') as f:
            lines = [json.loads(line) for line in f]
        self.check_result([line['step'] for line in lines], [1, 2])
        for name in (LAST_CHECKPOINT, FINAL_CHECKPOINT, 'epoch_001.ckpt'):
            self.check_result(os.path.isfile(os.path.join(out_dir, name)), True)
        meta, _ = read_checkpoint(os.path.join(out_dir, FINAL_CHECKPOINT))
        self.check_result((meta['epoch'], meta['batch'], meta['step']), (2, 0, 2))

    @pytest.mark.slow
    def test_resume_is_bit_exact(self, toy_config, tmp_path):
        """ stopping after one step and resuming ends on the same weights as an uninterrupted run
        """
        config = _train_config(toy_config)
        straight = Trainer(HyKeyNetwork(toy_config, seed=0), [_dataset()], config, str(tmp_path / 'a'))
        straight.fit()

        first = Trainer(HyKeyNetwork(toy_config, seed=0), [_dataset()], config, str(tmp_path / 'b'))
        first.fit(max_steps=1)
        self.check_result((first.epoch, first.batch, first.step), (1, 1, 1))
        resumed = Trainer(HyKeyNetwork(toy_config, seed=0), [_dataset()], config, str(tmp_path / 'b'))
        resumed.resume(str(tmp_path / 'b' / LAST_CHECKPOINT)).fit()

        self.check_result(resumed.step, 2)
        expected = straight.network.state_arrays()
        result = resumed.network.state_arrays()
        for name in expected:
            self.check_result((name, np.array_equal(result[name], expected[name])), (name, True))
        for name in straight.adam.m:
            self.check_result(np.array_equal(resumed.adam.m[name], straight.adam.m[name]), True)
