"""Skeleton sequence data model and the on-disk dataset container.

A dataset is a JSON manifest next to a single binary blob. The manifest
describes the graph, the class count, and for every action sample its
camera views with byte offsets into the blob. The blob stores each view
as little-endian float32 in frame-major [T][J][C] order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError
from .graphs import SkeletonGraph

MANIFEST_NAME = "manifest.json"
BLOB_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class SkeletonSequence:
    """One camera view of one performance: data is [T, J, C] in meters."""

    data: np.ndarray
    camera_id: int
    subject_id: int
    action_id: int
    label: int | None = None

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "SkeletonSequence":
        return replace(self, data=data)


@dataclass(frozen=True)
class ActionSample:
    """All simultaneous camera views of one performance."""

    action_id: int
    views: tuple[SkeletonSequence, ...]

    @property
    def label(self) -> int | None:
        return self.views[0].label

    @property
    def subject_id(self) -> int:
        return self.views[0].subject_id


@dataclass(frozen=True)
class Dataset:
    graph: SkeletonGraph
    samples: tuple[ActionSample, ...]
    class_count: int
    # Generator provenance, e.g. per-view world rotations; never serialized.
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def sequences(self) -> list[SkeletonSequence]:
        return [view for sample in self.samples for view in sample.views]

    def __len__(self) -> int:
        return len(self.samples)

    def map_sequences(self, fn) -> "Dataset":
        """Apply ``fn`` to every view's SkeletonSequence, keeping structure."""
        samples = tuple(
            ActionSample(s.action_id, tuple(fn(v) for v in s.views)) for s in self.samples
        )
        return replace(self, samples=samples)


def validate_sequence(seq: SkeletonSequence, graph: SkeletonGraph, what: str = "sequence") -> None:
    d = seq.data
    if d.ndim != 3:
        raise DataError(f"{what}: expected [T, J, C] array, got shape {d.shape}")
    if d.shape[0] < 1:
        raise DataError(f"{what}: empty sequence")
    if d.shape[1] != graph.joint_count:
        raise DataError(
            f"{what}: {d.shape[1]} joints but graph has {graph.joint_count}"
        )
    if d.shape[2] not in (3, 6):
        raise DataError(f"{what}: channel count must be 3 or 6, got {d.shape[2]}")
    if not np.isfinite(d).all():
        raise DataError(f"{what}: non-finite values")


def validate_dataset(ds: Dataset) -> None:
    seen_actions = set()
    for sample in ds.samples:
        if not sample.views:
            raise DataError(f"sample {sample.action_id}: no views")
        if sample.action_id in seen_actions:
            raise DataError(f"duplicate action_id {sample.action_id}")
        seen_actions.add(sample.action_id)
        cams = [v.camera_id for v in sample.views]
        if len(set(cams)) != len(cams):
            raise DataError(f"sample {sample.action_id}: duplicate camera_ids {cams}")
        ref = sample.views[0]
        for v in sample.views:
            name = f"sample {sample.action_id} camera {v.camera_id}"
            validate_sequence(v, ds.graph, name)
            if v.action_id != sample.action_id:
                raise DataError(f"{name}: action_id mismatch")
            if v.subject_id != ref.subject_id or v.label != ref.label:
                raise DataError(f"{name}: views disagree on subject or label")
            if v.label is not None and not 0 <= v.label < ds.class_count:
                raise DataError(f"{name}: label {v.label} outside [0, {ds.class_count})")


def save_dataset(ds: Dataset, out_dir: str | Path) -> Path:
    """Write manifest + blob into ``out_dir``; returns the manifest path."""
    validate_dataset(ds)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blob_name = "data.bin"
    offset = 0
    manifest_samples = []
    chunks = []
    for sample in ds.samples:
        views = []
        for v in sample.views:
            raw = np.ascontiguousarray(v.data, dtype=BLOB_DTYPE).tobytes()
            views.append(
                {
                    "camera_id": v.camera_id,
                    "shape": list(v.data.shape),
                    "blob_offset": offset,
                    "blob_length": len(raw),
                }
            )
            chunks.append(raw)
            offset += len(raw)
        manifest_samples.append(
            {
                "action_id": sample.action_id,
                "subject_id": sample.subject_id,
                "label": sample.label,
                "views": views,
            }
        )
    manifest = {
        "graph": ds.graph.to_dict(),
        "class_count": ds.class_count,
        "blob": blob_name,
        "samples": manifest_samples,
    }
    (out_dir / blob_name).write_bytes(b"".join(chunks))
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest_path


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load a dataset container, enforcing every manifest/blob invariant."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc}") from exc
    try:
        graph = SkeletonGraph.from_dict(manifest["graph"])
        class_count = int(manifest["class_count"])
        blob_path = manifest_path.parent / manifest["blob"]
        sample_entries = manifest["samples"]
    except KeyError as exc:
        raise DataError(f"manifest missing required key {exc}") from exc
    if not blob_path.exists():
        raise DataError(f"blob not found: {blob_path}")
    blob = blob_path.read_bytes()

    samples = []
    for entry in sample_entries:
        action_id = int(entry["action_id"])
        views = []
        for view in entry["views"]:
            name = f"sample {action_id} camera {view['camera_id']}"
            t, j, c = (int(x) for x in view["shape"])
            offset, length = int(view["blob_offset"]), int(view["blob_length"])
            if length != t * j * c * BLOB_DTYPE.itemsize:
                raise DataError(f"{name}: blob_length {length} does not match shape {[t, j, c]}")
            if offset < 0 or offset + length > len(blob):
                raise DataError(f"{name}: blob truncated (needs bytes up to {offset + length})")
            data = np.frombuffer(blob, dtype=BLOB_DTYPE, count=t * j * c, offset=offset)
            data = data.reshape(t, j, c).copy()
            if not np.isfinite(data).all():
                raise DataError(f"{name}: non-finite values in blob")
            label = entry["label"]
            views.append(
                SkeletonSequence(
                    data=data,
                    camera_id=int(view["camera_id"]),
                    subject_id=int(entry["subject_id"]),
                    action_id=action_id,
                    label=None if label is None else int(label),
                )
            )
        samples.append(ActionSample(action_id, tuple(views)))
    ds = Dataset(graph=graph, samples=tuple(samples), class_count=class_count)
    validate_dataset(ds)
    return ds


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic class-stratified split at ActionSample granularity."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng([seed, 0x5B17])
    by_class: dict[int | None, list[int]] = {}
    for idx, sample in enumerate(ds.samples):
        by_class.setdefault(sample.label, []).append(idx)
    test_idx: set[int] = set()
    for label in sorted(by_class, key=lambda x: (x is None, x)):
        idxs = np.array(by_class[label])
        n_test = max(1, int(round(test_fraction * len(idxs))))
        picked = rng.choice(len(idxs), size=min(n_test, len(idxs)), replace=False)
        test_idx.update(int(i) for i in idxs[np.sort(picked)])
    train = tuple(s for i, s in enumerate(ds.samples) if i not in test_idx)
    test = tuple(s for i, s in enumerate(ds.samples) if i in test_idx)
    if not train or not test:
        raise DataError("split produced an empty side; adjust test_fraction")
    return (
        replace(ds, samples=train),
        replace(ds, samples=test),
    )
