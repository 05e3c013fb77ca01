"""Skeleton graph definitions.

A skeleton is a tree of joints. Edges are stored as (child, parent) pairs;
the symmetric normalized adjacency (with self-loops) derived from them is
what the graph-convolution layers consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SkeletonGraph:
    """Joint topology plus the side/landmark annotations the pipeline needs.

    Attributes
    ----------
    joint_count : int
        Number of joints J.
    edges : tuple[tuple[int, int], ...]
        (child, parent) pairs forming a spanning tree (J - 1 edges).
    center_joint : int
        Joint used as the translation reference (typically the pelvis).
    left_joints, right_joints : frozenset[int]
        Disjoint limb sets zeroed by the left/right-drop augmentation.
    hip_left, hip_right, spine : int
        Landmarks used to compute the canonical body orientation.
    """

    joint_count: int
    edges: tuple[tuple[int, int], ...]
    center_joint: int
    left_joints: frozenset[int]
    right_joints: frozenset[int]
    hip_left: int
    hip_right: int
    spine: int
    joint_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        validate_graph(self)

    @property
    def adjacency_norm(self) -> np.ndarray:
        """D^(-1/2) (A + I) D^(-1/2) for the binary symmetric adjacency A."""
        return normalized_adjacency(self.joint_count, self.edges)

    def parents(self) -> np.ndarray:
        """Parent index per joint; -1 for the root (= center joint)."""
        par = np.full(self.joint_count, -1, dtype=np.int64)
        for child, parent in self.edges:
            par[child] = parent
        return par

    def to_dict(self) -> dict:
        return {
            "joint_count": self.joint_count,
            "edges": [list(e) for e in self.edges],
            "center_joint": self.center_joint,
            "left_joints": sorted(self.left_joints),
            "right_joints": sorted(self.right_joints),
            "hip_left": self.hip_left,
            "hip_right": self.hip_right,
            "spine": self.spine,
            "joint_names": list(self.joint_names),
        }

    @staticmethod
    def from_dict(d: dict) -> "SkeletonGraph":
        return SkeletonGraph(
            joint_count=int(d["joint_count"]),
            edges=tuple((int(c), int(p)) for c, p in d["edges"]),
            center_joint=int(d["center_joint"]),
            left_joints=frozenset(int(j) for j in d["left_joints"]),
            right_joints=frozenset(int(j) for j in d["right_joints"]),
            hip_left=int(d["hip_left"]),
            hip_right=int(d["hip_right"]),
            spine=int(d["spine"]),
            joint_names=tuple(d.get("joint_names", ())),
        )


def validate_graph(graph: SkeletonGraph) -> None:
    j = graph.joint_count
    if j < 1:
        raise DataError("graph needs at least one joint")
    if len(graph.edges) != j - 1:
        raise DataError(f"expected {j - 1} edges for a spanning tree, got {len(graph.edges)}")
    seen_children = set()
    for child, parent in graph.edges:
        if not (0 <= child < j and 0 <= parent < j) or child == parent:
            raise DataError(f"invalid edge ({child}, {parent})")
        if child in seen_children:
            raise DataError(f"joint {child} has two parents")
        seen_children.add(child)
    # Connectivity: J-1 edges + unique children + reachability of the root.
    parents = {c: p for c, p in graph.edges}
    for start in range(j):
        node, hops = start, 0
        while node in parents:
            node = parents[node]
            hops += 1
            if hops > j:
                raise DataError("edge list contains a cycle")
    roots = set(range(j)) - seen_children
    if len(roots) != 1:
        raise DataError(f"expected a single root joint, found {sorted(roots)}")
    if graph.left_joints & graph.right_joints:
        raise DataError("left and right joint sets overlap")
    if graph.center_joint in graph.left_joints | graph.right_joints:
        raise DataError("center joint cannot belong to a side set")
    for idx in (graph.center_joint, graph.hip_left, graph.hip_right, graph.spine):
        if not 0 <= idx < j:
            raise DataError(f"landmark joint {idx} out of range")
    if graph.joint_names and len(graph.joint_names) != j:
        raise DataError("joint_names length does not match joint_count")


def normalized_adjacency(joint_count: int, edges) -> np.ndarray:
    a = np.zeros((joint_count, joint_count), dtype=np.float64)
    for child, parent in edges:
        a[child, parent] = 1.0
        a[parent, child] = 1.0
    a += np.eye(joint_count)
    d = a.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(d)
    return (a * d_inv_sqrt[:, None]) * d_inv_sqrt[None, :]


_H15_NAMES = (
    "center", "spine", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)

_H15_EDGES = (
    (1, 0), (2, 1),
    (3, 1), (4, 3), (5, 4),
    (6, 1), (7, 6), (8, 7),
    (9, 0), (10, 9), (11, 10),
    (12, 0), (13, 12), (14, 13),
)

# Rest pose in meters, z up, right side of the body toward +x.
HUMANOID15_REST_POSE = np.array(
    [
        [0.00, 0.00, 1.00],   # center (pelvis)
        [0.00, 0.00, 1.35],   # spine
        [0.00, 0.00, 1.65],   # head
        [-0.20, 0.00, 1.45],  # l_shoulder
        [-0.50, 0.00, 1.45],  # l_elbow
        [-0.78, 0.00, 1.45],  # l_wrist
        [0.20, 0.00, 1.45],   # r_shoulder
        [0.50, 0.00, 1.45],   # r_elbow
        [0.78, 0.00, 1.45],   # r_wrist
        [-0.12, 0.00, 0.95],  # l_hip
        [-0.14, 0.00, 0.52],  # l_knee
        [-0.15, 0.00, 0.08],  # l_ankle
        [0.12, 0.00, 0.95],   # r_hip
        [0.14, 0.00, 0.52],   # r_knee
        [0.15, 0.00, 0.08],   # r_ankle
    ],
    dtype=np.float64,
)


def humanoid15() -> SkeletonGraph:
    """Compact 15-joint humanoid used by the synthetic experiments."""
    return SkeletonGraph(
        joint_count=15,
        edges=_H15_EDGES,
        center_joint=0,
        left_joints=frozenset({3, 4, 5, 9, 10, 11}),
        right_joints=frozenset({6, 7, 8, 12, 13, 14}),
        hip_left=9,
        hip_right=12,
        spine=1,
        joint_names=_H15_NAMES,
    )


def ntu25() -> SkeletonGraph:
    """25-joint Kinect-v2 skeleton, provided as an alternative topology."""
    edges_1based = (
        (1, 2), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7),
        (9, 21), (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14),
        (16, 15), (17, 1), (18, 17), (19, 18), (20, 19), (21, 2),
        (22, 23), (23, 8), (24, 25), (25, 12),
    )
    edges = tuple((c - 1, p - 1) for c, p in edges_1based)
    left = frozenset({4, 5, 6, 7, 21, 22, 12, 13, 14, 15})
    right = frozenset({8, 9, 10, 11, 23, 24, 16, 17, 18, 19})
    return SkeletonGraph(
        joint_count=25,
        edges=edges,
        center_joint=1,
        left_joints=left,
        right_joints=right,
        hip_left=12,
        hip_right=16,
        spine=20,
    )


GRAPHS = {"humanoid15": humanoid15, "ntu25": ntu25}


def graph_by_name(name: str) -> SkeletonGraph:
    try:
        return GRAPHS[name]()
    except KeyError:
        raise DataError(f"unknown skeleton graph '{name}' (choose from {sorted(GRAPHS)})") from None
