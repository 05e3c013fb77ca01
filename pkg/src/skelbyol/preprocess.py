"""Sequence preprocessing: length normalization, centering, orientation,
and the bone feature channels.

All functions are pure and dtype-preserving. The standard order is
crop_or_repeat -> center -> canonical_rotate; bones are computed after
augmentation so they stay consistent with augmented joints.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, SkeletonSequence
from .errors import DataError
from .graphs import SkeletonGraph


def crop_or_repeat(seq: SkeletonSequence, target_len: int = 150) -> SkeletonSequence:
    """Crop to ``target_len`` frames; shorter sequences repeat cyclically."""
    if target_len < 1:
        raise DataError(f"target_len must be >= 1, got {target_len}")
    t = seq.frames
    if t >= target_len:
        return seq.with_data(seq.data[:target_len].copy())
    idx = np.arange(target_len) % t
    return seq.with_data(seq.data[idx].copy())


def center(seq: SkeletonSequence, graph: SkeletonGraph) -> SkeletonSequence:
    """Subtract the frame-0 position of the center joint from every frame."""
    origin = seq.data[0, graph.center_joint, :]
    return seq.with_data(seq.data - origin[None, None, :])


def canonical_rotation_matrix(frame0: np.ndarray, graph: SkeletonGraph) -> np.ndarray:
    """Rotation that maps the frame-0 pose to the canonical orientation.

    Convention: the left-hip -> right-hip direction becomes +x, and the
    center -> spine direction falls in the x-z plane with positive z.
    Returns a 3x3 matrix R applied as p -> R @ p.
    """
    hips = frame0[graph.hip_right] - frame0[graph.hip_left]
    hips_norm = np.linalg.norm(hips)
    if hips_norm < 1e-8:
        raise DataError("degenerate pose: hip joints coincide in frame 0")
    ex = hips / hips_norm
    up = frame0[graph.spine] - frame0[graph.center_joint]
    up_perp = up - (up @ ex) * ex
    up_norm = np.linalg.norm(up_perp)
    if up_norm < 1e-8:
        raise DataError("degenerate pose: spine direction parallel to hip line in frame 0")
    ez = up_perp / up_norm
    ey = np.cross(ez, ex)
    # Rows of R are the canonical axes expressed in world coordinates.
    return np.stack([ex, ey, ez], axis=0)


def canonical_rotate(seq: SkeletonSequence, graph: SkeletonGraph) -> SkeletonSequence:
    """Apply one rigid rotation (from frame 0) to the whole sequence."""
    if seq.channels != 3:
        raise DataError("canonical_rotate expects raw 3-channel joint data")
    r = canonical_rotation_matrix(seq.data[0], graph).astype(seq.data.dtype)
    rotated = np.einsum("ij,tkj->tki", r, seq.data)
    return seq.with_data(np.ascontiguousarray(rotated))


def bone_features(seq: SkeletonSequence, graph: SkeletonGraph) -> SkeletonSequence:
    """Per-edge child-minus-parent vectors; the root joint's bone is zero."""
    if seq.channels != 3:
        raise DataError("bone_features expects 3-channel joint data")
    parents = graph.parents()
    bones = np.zeros_like(seq.data)
    has_parent = parents >= 0
    bones[:, has_parent, :] = seq.data[:, has_parent, :] - seq.data[:, parents[has_parent], :]
    return seq.with_data(bones)


def concat_joint_bone(seq: SkeletonSequence, graph: SkeletonGraph) -> SkeletonSequence:
    """Channels 0-2 are the joints, channels 3-5 the bone vectors."""
    bones = bone_features(seq, graph)
    return seq.with_data(np.concatenate([seq.data, bones.data], axis=2))


def preprocess_sequence(
    seq: SkeletonSequence,
    graph: SkeletonGraph,
    target_len: int,
    do_center: bool = True,
    do_rotate: bool = True,
) -> SkeletonSequence:
    out = crop_or_repeat(seq, target_len)
    if do_center:
        out = center(out, graph)
    if do_rotate:
        out = canonical_rotate(out, graph)
    return out


def preprocess_dataset(
    ds: Dataset,
    target_len: int,
    do_center: bool = True,
    do_rotate: bool = True,
) -> Dataset:
    return ds.map_sequences(
        lambda s: preprocess_sequence(s, ds.graph, target_len, do_center, do_rotate)
    )
