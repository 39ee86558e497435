# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:12'

Usage:
spectral-spatial keypoint detection and description for hyperspectral cubes

>>> from hykey import HyKeyNetwork, HyKeyConfig, load_cube
>>> net = HyKeyNetwork(HyKeyConfig(), seed=0).eval()
>>> out = net.detect(load_cube('a.hcube'))
"""

from .__version__ import __version__
from .exception import *
from .geometry import (CorrespondenceSet, EstimationResult, FundamentalMatrix, Homography, Intrinsics, RelativePose,
                       compose_fundamental, estimate_fundamental_robust, estimate_homography_robust, sampson_distance)
from .hsidata import (DatasetManifest, HsiCube, MosaicFrame, SyntheticDataset, SyntheticPairSpec, TrainingTriplet,
                      demosaic_4x4, generate_triplet, load_cube, save_cube, write_dataset)
from .log_obj import log
from .losses import LossBreakdown, LossWeights, compute_losses, total_loss
from .matching import match_descriptors, mnn_match, similarity
from .metrics import EvalReport, auc, evaluate_homography, evaluate_pose, maa, matching_score, mha, mma, repeatability
from .model import HyKeyConfig, HyKeyNetwork, NetworkOutput, load_network
from .training import AdamState, TrainConfig, Trainer, adam_step, lr_schedule
