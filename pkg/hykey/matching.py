# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 12:10'

Usage:
>>> m = similarity(d0, d1)
>>> matches = mnn_match(m, kpts0=k0, kpts1=k1)
"""
import numpy as np

from .exception import DimensionError
from .geometry import CorrespondenceSet
from .tensor import Tensor


def similarity(d0, d1):
    """
    cosine similarity of unit-norm rows, M = d0 . d1^T
    :param d0: [N0, D] array or Tensor
    :param d1: [N1, D]
    :return: [N0, N1], a Tensor when either input is one
    """
    shape0, shape1 = np.shape(getattr(d0, 'data', d0)), np.shape(getattr(d1, 'data', d1))
    if len(shape0) != 2 or len(shape1) != 2 or shape0[1] != shape1[1]:
        raise DimensionError(f'descriptor shapes {shape0} and {shape1} do not match')
    if isinstance(d0, Tensor) or isinstance(d1, Tensor):
        d1 = d1 if isinstance(d1, Tensor) else Tensor(d1)
        return (d0 if isinstance(d0, Tensor) else Tensor(d0)) @ d1.T
    return np.asarray(d0, dtype=np.float64) @ np.asarray(d1, dtype=np.float64).T


def mutual_nearest(matrix):
    """
    :param matrix: [N0, N1]
    :return: (index0, index1) of mutual row/column argmax pairs, ties go to the lowest index
    """
    matrix = np.asarray(getattr(matrix, 'data', matrix))
    if matrix.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    nn01 = matrix.argmax(axis=1)
    nn10 = matrix.argmax(axis=0)
    ids0 = np.arange(matrix.shape[0])
    mask = ids0 == nn10[nn01]
    return ids0[mask], nn01[mask]


def mnn_match(matrix, min_similarity=None, kpts0=None, kpts1=None):
    """
    mutual nearest neighbours, optionally thresholded (M[i, j] >= min_similarity)
    :param matrix: SimilarityMatrix [N0, N1]
    :param min_similarity: None keeps every mutual pair
    :param kpts0: optional [N0, 2] keypoints, the result carries their coordinates
    :param kpts1: optional [N1, 2]
    :return: CorrespondenceSet with index0/index1 into the keypoint lists

    Usage:
    >>> mnn_match(np.array([[0.9, 0.1], [0.2, 0.8]])).index1
    >>> array([0, 1])
    """
    values = np.asarray(getattr(matrix, 'data', matrix), dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f'similarity matrix must be 2-d, got {values.shape}')
    index0, index1 = mutual_nearest(values)
    scores = values[index0, index1] if len(index0) else np.zeros(0)
    if min_similarity is not None:
        keep = scores >= min_similarity
        index0, index1, scores = index0[keep], index1[keep], scores[keep]
    p0 = np.asarray(kpts0, dtype=np.float64)[index0] if kpts0 is not None else np.zeros((len(index0), 2))
    p1 = np.asarray(kpts1, dtype=np.float64)[index1] if kpts1 is not None else np.zeros((len(index1), 2))
    return CorrespondenceSet(p0, p1, scores, index0, index1)


def match_descriptors(d0, d1, kpts0, kpts1, min_similarity=None):
    """similarity + mnn_match on plain arrays"""
    d0 = np.asarray(getattr(d0, 'data', d0))
    d1 = np.asarray(getattr(d1, 'data', d1))
    if len(d0) == 0 or len(d1) == 0:
        return CorrespondenceSet(np.zeros((0, 2)), np.zeros((0, 2)))
    return mnn_match(similarity(d0, d1), min_similarity, kpts0, kpts1)
