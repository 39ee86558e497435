# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:16'

Usage:
config keys (flask.Config only keeps UPPER_CASE keys) and format constants
"""

# environment prefix, HYKEY_SEED -> SEED
ENV_PREFIX = 'HYKEY'

# run config keys
k_seed = 'SEED'
# worker threads for prefetching / evaluation, <=1 means strict sequential mode
k_threads = 'THREADS'
k_log_level = 'LOG_LEVEL'
k_learning_rate = 'LEARNING_RATE'
k_warmup_steps = 'WARMUP_STEPS'
k_batch_size = 'BATCH_SIZE'
k_epoch_frame_cap = 'EPOCH_FRAME_CAP'
k_epochs = 'EPOCHS'
k_epipolar_start_epoch = 'EPIPOLAR_START_EPOCH'
k_use_epipolar = 'USE_EPIPOLAR'
k_grad_clip = 'GRAD_CLIP'
k_loss_weights = 'LOSS_WEIGHTS'
k_loss_preset = 'LOSS_PRESET'
k_model = 'MODEL'
k_datasets = 'DATASETS'
k_max_keypoints = 'MAX_KEYPOINTS'
k_ransac_seed = 'RANSAC_SEED'
k_homography_threshold = 'HOMOGRAPHY_THRESHOLD'
k_fundamental_threshold = 'FUNDAMENTAL_THRESHOLD'
k_confidence = 'CONFIDENCE'
k_repeatability_denominator = 'REPEATABILITY_DENOMINATOR'
k_checkpoint_every = 'CHECKPOINT_EVERY'

DEFAULT_RUN_CONFIG = {
    k_seed: 0,
    k_threads: 1,
    k_log_level: 'INFO',
    k_learning_rate: 3e-4,
    k_warmup_steps: 500,
    k_batch_size: 6,
    k_epoch_frame_cap: 10000,
    k_epochs: 10,
    k_epipolar_start_epoch: 5,
    k_use_epipolar: True,
    k_grad_clip: 10.0,
    k_loss_weights: {'pk': 0.5, 'rp': 1.0, 'rel': 1.0, 'desc': 5.0, 'epi': 0.25},
    k_loss_preset: None,
    k_model: {},
    k_datasets: [],
    k_max_keypoints: 1024,
    k_ransac_seed: 0,
    k_homography_threshold: 3.0,
    k_fundamental_threshold: 1.0,
    k_confidence: 0.99999,
    k_repeatability_denominator: 'sum',
    k_checkpoint_every: 1,
}

# evaluation thresholds
PIXEL_THRESHOLDS = (1, 3, 5, 10, 20)
ANGULAR_THRESHOLDS = (5, 10, 20)

# 16 bands of the snapshot mosaic camera
DEFAULT_BANDS = 16
WAVELENGTH_RANGE_NM = (460.0, 600.0)

# cube file: 16 byte magic, the last byte is the format version
CUBE_MAGIC = b'HYKYCUBE' + b'\0' * 7 + b'\1'
CUBE_VERSION = 1
CUBE_DTYPE = 'f32le'

CHECKPOINT_MAGIC = b'HYKYCKPT' + b'\0' * 7 + b'\1'
CHECKPOINT_VERSION = 1

MANIFEST_NAME = 'manifest.json'
MANIFEST_VERSION = 1
