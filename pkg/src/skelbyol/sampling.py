"""Positive-pair construction and deterministic batch iteration.

With multi-viewpoint sampling (MVS) an epoch iterates over action samples
and draws two camera views per sample, with replacement. Without it the
epoch iterates over individual sequences, pairing each with itself. Either
way both elements then pass through their branch's augmentation pipeline
and get the bone channels appended.

Randomness is derived per (seed, epoch, action, camera, branch), so results
do not depend on scheduling or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .augment import AugmentationSpec, apply_pipeline
from .data import ActionSample, Dataset, SkeletonSequence
from .errors import DataError
from .preprocess import concat_joint_bone

_SHUFFLE, _PAIR, _AUG = 0x51, 0x52, 0x53


@dataclass
class PairBatch:
    """Two aligned stacks of augmented views, [B, T, J, C] each."""

    view1: np.ndarray
    view2: np.ndarray
    action_ids: list[int]
    labels: list[int | None]


def multiview_pair(sample: ActionSample, rng: np.random.Generator) -> tuple[SkeletonSequence, SkeletonSequence]:
    """Draw two views uniformly with replacement; a singleton pairs with itself."""
    if not sample.views:
        raise DataError(f"sample {sample.action_id} has no views")
    idx = rng.integers(0, len(sample.views), size=2)
    return sample.views[int(idx[0])], sample.views[int(idx[1])]


def pair_count(dataset: Dataset, mvs_enabled: bool) -> int:
    return len(dataset.samples) if mvs_enabled else len(dataset.sequences)


def batches_per_epoch(n_units: int, batch_size: int) -> int:
    """ceil(n/B), except a trailing singleton merges into the previous batch."""
    if n_units < 1:
        raise DataError("empty dataset")
    full, rem = divmod(n_units, batch_size)
    if rem == 0:
        return full
    if rem == 1 and full >= 1:
        return full
    return full + 1


def _batch_slices(n_units: int, batch_size: int) -> list[tuple[int, int]]:
    bounds = []
    start = 0
    while start < n_units:
        end = min(start + batch_size, n_units)
        if n_units - end == 1:
            end = n_units
        bounds.append((start, end))
        start = end
    return bounds


def iter_pair_batches(
    dataset: Dataset,
    batch_size: int,
    spec1: AugmentationSpec,
    spec2: AugmentationSpec,
    seed: int,
    epoch: int,
    mvs_enabled: bool = True,
    dtype=np.float32,
) -> Iterator[PairBatch]:
    """One epoch of PairBatches over a shuffled permutation of the units."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    graph = dataset.graph
    if mvs_enabled:
        units = list(dataset.samples)
    else:
        units = dataset.sequences
    n = len(units)
    if n == 0:
        raise DataError("empty dataset")
    order = np.random.default_rng([seed, _SHUFFLE, epoch]).permutation(n)

    for start, end in _batch_slices(n, batch_size):
        v1, v2, ids, labels = [], [], [], []
        for u in order[start:end]:
            unit = units[int(u)]
            if mvs_enabled:
                pair_rng = np.random.default_rng([seed, _PAIR, epoch, unit.action_id])
                s1, s2 = multiview_pair(unit, pair_rng)
            else:
                s1 = s2 = unit
            a1 = _augment(s1, spec1, graph, seed, epoch, branch=0)
            a2 = _augment(s2, spec2, graph, seed, epoch, branch=1)
            v1.append(_to_net(a1, graph, dtype))
            v2.append(_to_net(a2, graph, dtype))
            ids.append(s1.action_id)
            labels.append(s1.label)
        yield PairBatch(np.stack(v1), np.stack(v2), ids, labels)


def _augment(seq: SkeletonSequence, spec: AugmentationSpec, graph, seed: int, epoch: int,
             branch: int) -> SkeletonSequence:
    rng = np.random.default_rng([seed, _AUG, epoch, seq.action_id, seq.camera_id, branch])
    return apply_pipeline(seq, spec, rng, graph)


def _to_net(seq: SkeletonSequence, graph, dtype) -> np.ndarray:
    """[T, J, C] joints -> [T, J, 2C] network input with bone channels."""
    full = concat_joint_bone(seq, graph)
    return np.ascontiguousarray(full.data, dtype=dtype)
