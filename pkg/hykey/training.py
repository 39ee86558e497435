# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 15:05'

Usage:
adam with linear warmup, mixed-dataset epochs, json-lines step log, resumable checkpoints

>>> trainer = Trainer(HyKeyNetwork(config.model, seed=0), [DatasetManifest.load('data/planar')], config, 'runs/a')
>>> trainer.fit()
"""
import os
import queue
import threading
from dataclasses import asdict, dataclass, field

import numpy as np

from .exception import CheckpointError, InvalidConfigException
from .log_obj import log
from .losses import TERMS, LossWeights, compute_losses
from .model import TRAIN, HyKeyConfig, HyKeyNetwork, checkpoint_to_bytes, read_checkpoint
from .tensor import backward
from .utils import (dump_json, k_batch_size, k_checkpoint_every, k_epipolar_start_epoch, k_epoch_frame_cap, k_epochs,
                    k_grad_clip, k_learning_rate, k_loss_preset, k_loss_weights, k_model, k_seed, k_threads,
                    k_use_epipolar, k_warmup_steps)

TRAIN_LOG_NAME = 'train_log.jsonl'
LAST_CHECKPOINT = 'last.ckpt'
FINAL_CHECKPOINT = 'final.ckpt'


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    warmup_steps: int = 500
    batch_size: int = 6
    epoch_frame_cap: int = 10000
    epochs: int = 10
    epipolar_start_epoch: int = 5
    use_epipolar: bool = True
    grad_clip: float = 10.0
    seed: int = 0
    threads: int = 1
    checkpoint_every: int = 1
    loss_weights: LossWeights = field(default_factory=LossWeights)
    model: HyKeyConfig = field(default_factory=HyKeyConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.learning_rate > 0:
            raise InvalidConfigException('learning rate must be > 0', field=k_learning_rate)
        if self.warmup_steps < 0:
            raise InvalidConfigException('warmup steps must be >= 0', field=k_warmup_steps)
        if self.batch_size < 1:
            raise InvalidConfigException('batch size must be >= 1', field=k_batch_size)
        if self.epoch_frame_cap < 1:
            raise InvalidConfigException('epoch frame cap must be >= 1', field=k_epoch_frame_cap)
        if self.epochs < 0:
            raise InvalidConfigException('epochs must be >= 0', field=k_epochs)
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise InvalidConfigException('gradient clip must be > 0 or null', field=k_grad_clip)
        return self

    @classmethod
    def from_config(cls, config):
        """
        typed view over a resolved run config
        :param config: flask.Config / mapping with the UPPER_CASE keys
        :return:
        """
        preset = config.get(k_loss_preset)
        weights = LossWeights.preset(preset) if preset else LossWeights.from_mapping(config.get(k_loss_weights))
        use_epipolar = bool(config.get(k_use_epipolar, True))
        try:
            return cls(
                learning_rate=float(config.get(k_learning_rate, 3e-4)),
                warmup_steps=int(config.get(k_warmup_steps, 500)),
                batch_size=int(config.get(k_batch_size, 6)),
                epoch_frame_cap=int(config.get(k_epoch_frame_cap, 10000)),
                epochs=int(config.get(k_epochs, 10)),
                epipolar_start_epoch=int(config.get(k_epipolar_start_epoch, 5)),
                use_epipolar=use_epipolar and weights.epi > 0,
                grad_clip=None if config.get(k_grad_clip) is None else float(config.get(k_grad_clip)),
                seed=int(config.get(k_seed, 0)),
                threads=int(config.get(k_threads, 1)),
                checkpoint_every=int(config.get(k_checkpoint_every, 1)),
                loss_weights=weights,
                model=HyKeyConfig.from_dict(config.get(k_model)),
            )
        except (TypeError, ValueError) as e:
            raise InvalidConfigException(f'training config: {e}', field='train')

    def to_dict(self):
        return asdict(self)


def lr_schedule(step, config: TrainConfig):
    """
    linear warmup to the base rate, constant afterwards
    :param step: optimiser steps taken, the first update uses step 1
    :param config:
    :return:

    Usage:
    >>> lr_schedule(250, TrainConfig())
    >>> 0.00015
    """
    if config.warmup_steps == 0:
        return config.learning_rate
    return config.learning_rate * min(1.0, step / float(config.warmup_steps))


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_parameters(cls, params: dict, **kwargs):
        state = cls(**kwargs)
        for name, param in params.items():
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        return state

    def state_arrays(self):
        arrays = {}
        for name in self.m:
            arrays[f'adam.m.{name}'] = self.m[name]
        for name in self.v:
            arrays[f'adam.v.{name}'] = self.v[name]
        return arrays

    def meta(self):
        return {'step': self.step, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps}

    def load(self, arrays: dict, meta: dict):
        for name, current in self.m.items():
            for prefix, target in (('adam.m', self.m), ('adam.v', self.v)):
                key = f'{prefix}.{name}'
                if key not in arrays:
                    raise CheckpointError(f'missing optimiser entry {key}')
                if arrays[key].shape != current.shape:
                    raise CheckpointError(f'{key}: checkpoint shape {arrays[key].shape} != {current.shape}')
                target[name] = np.array(arrays[key], dtype=current.dtype)
        self.step = int(meta['step'])
        self.beta1, self.beta2, self.eps = float(meta['beta1']), float(meta['beta2']), float(meta['eps'])
        return self


def adam_step(params: dict, grads: dict, state: AdamState, lr):
    """
    bias-corrected adam update in place; a non-finite gradient skips the whole step
    :param params: name -> Tensor
    :param grads: name -> array or None (zero gradient)
    :param state:
    :param lr:
    :return: True when the update was applied
    """
    for name, grad in grads.items():
        if grad is not None and not np.all(np.isfinite(grad)):
            log.warning(f'skipping adam step {state.step + 1}: non-finite gradient in {name}')
            return False
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        dtype = param.data.dtype
        grad = grads.get(name)
        grad = np.zeros_like(param.data) if grad is None else np.asarray(grad, dtype=dtype)
        state.m[name] = (state.beta1 * state.m[name] + (1.0 - state.beta1) * grad).astype(dtype)
        state.v[name] = (state.beta2 * state.v[name] + (1.0 - state.beta2) * grad * grad).astype(dtype)
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        param.data = (param.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(dtype)
    return True


def clip_gradients(grads: dict, max_norm):
    """
    scale every gradient by max_norm / global norm when the global norm exceeds max_norm
    :return: (grads, global norm before clipping, clipped)
    """
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()
                             if g is not None)))
    if max_norm is None or not np.isfinite(norm) or norm <= max_norm:
        return grads, norm, False
    scale = max_norm / norm
    return {k: None if g is None else g * scale for k, g in grads.items()}, norm, True


def epoch_schedule(sizes, cap, batch_size, rng):
    """
    item order of one epoch
    1. one dataset: a permutation truncated to the frame cap
    2. several datasets: batch slots alternate between datasets, each contributing an equal share;
       a dataset smaller than its share is resampled with replacement
    :param sizes: triplet count per dataset
    :param cap: epoch frame cap
    :param batch_size:
    :param rng:
    :return: list of batches of (dataset index, item index)
    """
    if not sizes or min(sizes) == 0:
        raise InvalidConfigException('every training dataset needs at least one triplet', field='DATASETS')
    if len(sizes) == 1:
        order = [(0, int(i)) for i in rng.permutation(sizes[0])[:cap]]
    else:
        total = min(cap, sum(sizes))
        shares = [total // len(sizes) + (1 if d < total % len(sizes) else 0) for d in range(len(sizes))]
        streams = []
        for d, (size, share) in enumerate(zip(sizes, shares)):
            items = list(rng.permutation(size)[:share])
            if share > size:
                log.warning(f'dataset {d} exhausted after {size} triplets, resampling {share - size} with replacement')
                items.extend(rng.integers(0, size, share - size))
            streams.append([(d, int(i)) for i in items])
        order = []
        for slot in range(total):
            order.append(streams[slot % len(sizes)][slot // len(sizes)])
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def _prefetch(loader, items, depth):
    """yield loader(item) in order from a background thread through a bounded queue"""
    buffer = queue.Queue(maxsize=depth)
    done = object()

    def produce():
        try:
            for item in items:
                buffer.put(loader(item))
        except Exception as e:
            buffer.put(e)
        buffer.put(done)

    worker = threading.Thread(target=produce, daemon=True)
    worker.start()
    while True:
        value = buffer.get()
        if value is done:
            break
        if isinstance(value, Exception):
            raise value
        yield value
    worker.join()


class Trainer(object):
    """
    owns the network, the adam state and the counters
    a dataset is anything with __len__, load_triplet(i) and has_epipolar (DatasetManifest, SyntheticDataset)
    """

    def __init__(self, network: HyKeyNetwork, datasets, config: TrainConfig, out_dir=None, run_config=None):
        if not datasets or any(len(d) == 0 for d in datasets):
            raise InvalidConfigException('training needs at least one non-empty dataset', field='DATASETS')
        if config.use_epipolar and not any(d.has_epipolar for d in datasets):
            log.warning('epipolar loss enabled but no dataset has a second view, the term stays inactive')
        self.network = network.train()
        self.datasets = list(datasets)
        self.config = config
        self.out_dir = out_dir
        self.run_config = dict(run_config or {})
        self.adam = AdamState.for_parameters(network.parameters())
        self.step = 0
        self.epoch = 1
        self.batch = 0
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

    @property
    def log_path(self):
        return os.path.join(self.out_dir, TRAIN_LOG_NAME) if self.out_dir else None

    def _views(self, triplet, item):
        out = []
        for view, cube in enumerate((triplet.cube0, triplet.cube1, triplet.cube2)):
            if cube is None:
                out.append(None)
                continue
            rng = np.random.default_rng([self.config.seed, self.step, item, view])
            mask = triplet.mask1 if view == 1 else None
            out.append(self.network.forward(cube, TRAIN, rng=rng, mask=mask))
        return out

    def train_step(self, triplets, epoch):
        """
        one optimiser step over a batch, gradients averaged over its triplets
        :param triplets: TrainingTriplet list
        :param epoch: 1-based
        :return: json-able step record
        """
        self.step += 1
        self.network.zero_grad()
        lr = lr_schedule(self.step, self.config)
        scale = 1.0 / len(triplets)
        terms = {name: [] for name in TERMS}
        contributions = {name: 0.0 for name in TERMS}
        totals, flags, keypoints = [], [], []
        weights = None
        for item, triplet in enumerate(triplets):
            outputs = self._views(triplet, item)
            breakdown = compute_losses(outputs, triplet, self.config.loss_weights, self.config.model, epoch,
                                       self.config.use_epipolar, self.config.epipolar_start_epoch)
            if breakdown.total_tensor.requires_grad:
                backward(breakdown.total_tensor * scale)
            weights = breakdown.weights
            for name, value in breakdown.terms.items():
                terms[name].append(value)
            for name, value in breakdown.contributions.items():
                contributions[name] += value * scale
            totals.append(breakdown.total)
            flags.extend(f for f in breakdown.flags if f not in flags)
            keypoints.append([len(o.keypoints) if o is not None else 0 for o in outputs])

        params = self.network.parameters()
        grads, norm, clipped = clip_gradients({k: p.grad for k, p in params.items()}, self.config.grad_clip)
        if clipped:
            log.warning(f'step {self.step}: gradient norm {norm:.3f} clipped to {self.config.grad_clip}')
        applied = adam_step(params, grads, self.adam, lr)
        record = {
            'step': self.step,
            'epoch': epoch,
            'lr': lr,
            'terms': {k: float(np.mean(v)) for k, v in terms.items() if v},
            'weights': weights,
            'contributions': contributions,
            'total': float(np.mean(totals)),
            'keypoints': keypoints,
            'flags': flags,
            'grad_norm': norm,
            'clipped': clipped,
            'skipped': not applied,
        }
        log.debug(f'step {self.step} total {record["total"]:.5f}')
        return record

    def _write_record(self, record):
        if self.log_path:
            with open(self.log_path, 'a', encoding='utf-8') as f:
                f.write(dump_json(record) + '\n')

    def schedule(self, epoch):
        rng = np.random.default_rng([self.config.seed, epoch])
        return epoch_schedule([len(d) for d in self.datasets], self.config.epoch_frame_cap, self.config.batch_size, rng)

    def _load(self, slot):
        dataset, index = slot
        return self.datasets[dataset].load_triplet(index)

    def train_epoch(self, epoch, max_steps=None):
        """
        run the remaining batches of `epoch` (resumes at self.batch)
        :param epoch: 1-based
        :param max_steps: stop early after this many steps, the epoch stays open
        :return: epoch log {epoch, steps, mean_total, records, complete}
        """
        batches = self.schedule(epoch)[self.batch:]
        if max_steps is not None:
            batches = batches[:max_steps]
        slots = [slot for batch in batches for slot in batch]
        if self.config.threads > 1:
            loaded = _prefetch(self._load, slots, depth=2 * self.config.batch_size)
        else:
            loaded = (self._load(slot) for slot in slots)
        records = []
        for batch in batches:
            triplets = [next(loaded) for _ in batch]
            record = self.train_step(triplets, epoch)
            self.batch += 1
            self._write_record(record)
            records.append(record)
        complete = self.batch == len(self.schedule(epoch))
        if complete:
            self.epoch, self.batch = epoch + 1, 0
        mean_total = float(np.mean([r['total'] for r in records])) if records else None
        if complete:
            log.info(f'epoch {epoch} finished: {len(records)} steps, mean loss {mean_total}')
        return {'epoch': epoch, 'steps': len(records), 'mean_total': mean_total, 'records': records,
                'complete': complete}

    def fit(self, epochs=None, max_steps=None):
        """
        train until `epochs` (default config.epochs) epochs are complete, checkpointing as configured
        :param epochs:
        :param max_steps: total step budget for this call
        :return: list of epoch logs
        """
        epochs = self.config.epochs if epochs is None else epochs
        logs = []
        budget = max_steps
        while self.epoch <= epochs and (budget is None or budget > 0):
            epoch = self.epoch
            result = self.train_epoch(epoch, budget)
            logs.append(result)
            if budget is not None:
                budget -= result['steps']
            if self.out_dir:
                self.save_checkpoint(os.path.join(self.out_dir, LAST_CHECKPOINT))
                every = self.config.checkpoint_every
                if result['complete'] and every > 0 and epoch % every == 0:
                    self.save_checkpoint(os.path.join(self.out_dir, f'epoch_{epoch:03d}.ckpt'))
        if self.out_dir:
            self.save_checkpoint(os.path.join(self.out_dir, FINAL_CHECKPOINT))
        return logs

    def checkpoint_meta(self):
        return {
            'model': self.config.model.to_dict(),
            'train': self.config.to_dict(),
            'epoch': self.epoch,
            'batch': self.batch,
            'step': self.step,
            'adam': self.adam.meta(),
            'config': self.run_config,
        }

    def checkpoint_bytes(self):
        arrays = dict(self.network.state_arrays())
        arrays.update(self.adam.state_arrays())
        return checkpoint_to_bytes(arrays, self.checkpoint_meta())

    def save_checkpoint(self, path):
        data = self.checkpoint_bytes()
        with open(path, 'wb') as f:
            f.write(data)
        log.info(f'checkpoint saved to {path} (epoch {self.epoch}, step {self.step})')
        return path

    def resume(self, path):
        """
        restore network, optimiser and counters; the model config must match
        :param path:
        :return: self
        """
        meta, arrays = read_checkpoint(path)
        try:
            stored = HyKeyConfig.from_dict(meta['model']).to_dict()
        except (KeyError, TypeError) as e:
            raise CheckpointError(f'checkpoint has no usable model config: {e}')
        current = self.config.model.to_dict()
        if stored != current:
            diff = sorted(k for k in current if stored.get(k) != current[k])
            raise CheckpointError(f'model config mismatch on {diff}')
        try:
            self.network.load_state_arrays(arrays)
            self.adam.load(arrays, meta['adam'])
            self.epoch, self.batch, self.step = int(meta['epoch']), int(meta['batch']), int(meta['step'])
        except KeyError as e:
            raise CheckpointError(f'checkpoint lacks training state {e}')
        log.info(f'resumed from {path} at epoch {self.epoch}, step {self.step}')
        return self


def build_network(config: TrainConfig) -> HyKeyNetwork:
    return HyKeyNetwork(config.model, seed=config.seed)
