"""Evaluation protocols on top of a pretrained encoder.

* LinearProbe: linear classifier on the frozen encoder.
* SemiSupervisedFineTuner: class-balanced label subsets; the encoder stays
  frozen for the first third of the iterations, then joins at a heavily
  scaled-down learning rate.
* KnowledgeDistiller: trains a randomly initialized student to match a
  fixed teacher's temperature-softened predictions, reading no labels.

All protocols use only the conservative augmentation pipeline during
training and evaluate un-augmented sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .augment import conservative_preset, spec_by_name
from .byol import encode_sequences
from .data import Dataset, SkeletonSequence
from .errors import ConfigError, DataError
from .nn.checkpoint import CheckpointBundle, load_checkpoint
from .nn.layers import momentum_bn_update, softmax, softmax_cross_entropy
from .nn.network import (
    ArchDescriptor,
    ParamSet,
    build_classifier_params,
    classifier_forward,
    extract_grads,
    scale_arch,
    wrap_trainable,
)
from .nn.optim import sgd_step
from .nn.tensor import Tensor
from .preprocess import preprocess_dataset
from .sampling import _augment, _to_net, batches_per_epoch

_EVAL_SHUFFLE = 0x61


@dataclass(frozen=True)
class LabeledSubset:
    """Class-balanced selection of ActionSample indices."""

    indices: tuple[int, ...]
    fraction: float
    seed: int


def sample_label_fraction(dataset: Dataset, fraction: float, seed: int) -> LabeledSubset:
    """Per class, round(fraction * class_size) samples (at least 1), without
    replacement; deterministic in the seed."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    by_class: dict[int, list[int]] = {}
    for idx, sample in enumerate(dataset.samples):
        if sample.label is None:
            raise DataError(f"sample {sample.action_id} has no label")
        by_class.setdefault(sample.label, []).append(idx)
    missing = [c for c in range(dataset.class_count) if c not in by_class]
    if missing:
        raise DataError(f"classes absent from dataset: {missing}")
    chosen: list[int] = []
    for label in sorted(by_class):
        pool = by_class[label]
        k = max(1, int(math.floor(fraction * len(pool) + 0.5)))
        k = min(k, len(pool))
        rng = np.random.default_rng([seed, 0xF8AC, label])
        picked = rng.choice(len(pool), size=k, replace=False)
        chosen.extend(pool[int(i)] for i in picked)
    return LabeledSubset(indices=tuple(sorted(chosen)), fraction=fraction, seed=seed)


def subset_dataset(dataset: Dataset, subset: LabeledSubset) -> Dataset:
    from dataclasses import replace

    samples = tuple(dataset.samples[i] for i in subset.indices)
    return replace(dataset, samples=samples)


def top1_accuracy(logits: np.ndarray, labels) -> float:
    """Fraction of rows whose argmax matches; ties go to the lowest index."""
    labels = np.asarray(labels)
    if logits.shape[0] != labels.shape[0]:
        raise DataError(f"{logits.shape[0]} rows vs {labels.shape[0]} labels")
    return float((logits.argmax(axis=1) == labels).mean())


def _resolve_encoder(encoder, dtype) -> tuple[ParamSet, ArchDescriptor, float]:
    """Accept a checkpoint path, a CheckpointBundle, or (ParamSet, arch, width)."""
    if isinstance(encoder, (str, Path)):
        encoder = load_checkpoint(encoder, dtype)
    if isinstance(encoder, CheckpointBundle):
        return encoder.params.subset(("encoder.",)), encoder.arch, encoder.params.width_multiplier
    if isinstance(encoder, tuple) and len(encoder) == 3:
        params, arch, width = encoder
        return params.subset(("encoder.",)), arch, width
    raise ConfigError("encoder must be a checkpoint path, CheckpointBundle, or (params, arch, width)")


class _SupervisedMixin:
    """Shared plumbing: preprocessing, augmentation streams, prediction."""

    def _prep(self, dataset: Dataset) -> Dataset:
        return preprocess_dataset(dataset, self.frames, self.center, self.rotate)

    def _labels_of(self, sequences) -> np.ndarray:
        labels = [s.label for s in sequences]
        if any(l is None for l in labels):
            raise DataError("labeled protocol requires labels on every sequence")
        return np.asarray(labels, dtype=np.int64)

    def _predict_prepped(self, prepped: Dataset) -> np.ndarray:
        np_dtype = np.dtype(self.dtype).type
        feats = encode_sequences(
            self.classifier_, self.scaled_arch_, self.adjacency_, prepped.sequences,
            prepped.graph, dtype=np_dtype)
        w = self.classifier_.tensors["head.w"]
        b = self.classifier_.tensors["head.b"]
        return feats @ w.T + b

    def predict(self, dataset: Dataset) -> np.ndarray:
        self._check_fitted()
        return self._predict_prepped(self._prep(dataset)).argmax(axis=1)

    def decision_function(self, dataset: Dataset) -> np.ndarray:
        self._check_fitted()
        return self._predict_prepped(self._prep(dataset))

    def score(self, dataset: Dataset, y=None) -> float:
        self._check_fitted()
        prepped = self._prep(dataset)
        logits = self._predict_prepped(prepped)
        return top1_accuracy(logits, self._labels_of(prepped.sequences))

    def _check_fitted(self):
        if not hasattr(self, "classifier_"):
            raise ConfigError("estimator is not fitted yet")


class LinearProbe(BaseEstimator, _SupervisedMixin):
    """Linear classifier on frozen eval-mode encoder representations.

    SGD with momentum 0.9 and no weight decay; the learning rate starts at
    30 and is multiplied by 0.1 at 60% and 80% of the epochs.
    """

    def __init__(self, encoder=None, epochs: int = 30, batch_size: int = 64,
                 lr: float = 30.0, momentum: float = 0.9, milestones=(0.6, 0.8),
                 augment="conservative", seed: int = 0, frames: int = 50,
                 center: bool = True, rotate: bool = True, dtype: str = "float32"):
        self.encoder = encoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.milestones = milestones
        self.augment = augment
        self.seed = seed
        self.frames = frames
        self.center = center
        self.rotate = rotate
        self.dtype = dtype

    def _epoch_lr(self, epoch: int) -> float:
        lr = self.lr
        for frac in self.milestones:
            if epoch >= math.floor(frac * self.epochs):
                lr *= 0.1
        return lr

    def fit(self, dataset: Dataset, y=None):
        np_dtype = np.dtype(self.dtype).type
        enc_params, arch, width = _resolve_encoder(self.encoder, np_dtype)
        if arch.class_count is not None and arch.class_count != dataset.class_count:
            raise ConfigError(
                f"checkpoint expects {arch.class_count} classes, dataset has {dataset.class_count}")
        prepped = self._prep(dataset)
        spec = spec_by_name(self.augment)
        sc = scale_arch(arch, width)
        params = build_classifier_params(arch, width, self.seed, dataset.class_count,
                                         np_dtype, encoder=enc_params)
        adjacency = prepped.graph.adjacency_norm.astype(np_dtype)
        sequences = prepped.sequences
        labels = self._labels_of(sequences)
        n = len(sequences)
        buffers: dict = {}
        for epoch in range(self.epochs):
            lr = self._epoch_lr(epoch)
            aug = [_augment(s, spec, prepped.graph, self.seed, epoch, branch=0) for s in sequences]
            feats = encode_sequences(params, sc, adjacency, aug, prepped.graph, dtype=np_dtype)
            order = np.random.default_rng([self.seed, _EVAL_SHUFFLE, epoch]).permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                w = Tensor(params.tensors["head.w"], requires_grad=True)
                b = Tensor(params.tensors["head.b"], requires_grad=True)
                x = Tensor(feats[idx])
                logits = _head_forward(x, w, b)
                loss = softmax_cross_entropy(logits, labels[idx])
                loss.backward()
                sgd_step(params, {"head.w": w.grad, "head.b": b.grad},
                         lr, self.momentum, 0.0, buffers)
        self.classifier_ = params
        self.arch_ = ArchDescriptor.from_dict({**arch.to_dict(), "class_count": dataset.class_count})
        self.scaled_arch_ = sc
        self.adjacency_ = adjacency
        self.width_ = width
        return self


def _head_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    from .nn.layers import linear

    return linear(x, w, b)


class SemiSupervisedFineTuner(BaseEstimator, _SupervisedMixin):
    """Head plus encoder fine-tuning on a class-balanced label subset.

    The head's learning rate decays from ``lr`` to 0 on a cosine over all
    iterations. The encoder is frozen (weights and BN statistics) for the
    first ceil(total/3) iterations, then follows the head's schedule scaled
    by ``encoder_lr_scale``.
    """

    def __init__(self, encoder=None, epochs: int = 20, batch_size: int = 16,
                 lr: float = 10.0, momentum: float = 0.9, encoder_lr_scale: float = 1e-3,
                 augment="conservative", seed: int = 0, frames: int = 50,
                 center: bool = True, rotate: bool = True, dtype: str = "float32",
                 step_callback=None):
        self.encoder = encoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.encoder_lr_scale = encoder_lr_scale
        self.augment = augment
        self.seed = seed
        self.frames = frames
        self.center = center
        self.rotate = rotate
        self.dtype = dtype
        self.step_callback = step_callback

    def fit(self, dataset: Dataset, subset: LabeledSubset | None = None):
        np_dtype = np.dtype(self.dtype).type
        enc_params, arch, width = _resolve_encoder(self.encoder, np_dtype)
        if arch.class_count is not None and arch.class_count != dataset.class_count:
            raise ConfigError(
                f"checkpoint expects {arch.class_count} classes, dataset has {dataset.class_count}")
        if subset is not None:
            dataset = subset_dataset(dataset, subset)
        if not dataset.samples:
            raise DataError("empty labeled subset")
        prepped = self._prep(dataset)
        spec = spec_by_name(self.augment)
        sc = scale_arch(arch, width)
        params = build_classifier_params(arch, width, self.seed, dataset.class_count,
                                         np_dtype, encoder=enc_params)
        adjacency = prepped.graph.adjacency_norm.astype(np_dtype)
        sequences = prepped.sequences
        labels = self._labels_of(sequences)
        n = len(sequences)
        steps_per_epoch = batches_per_epoch(n, min(self.batch_size, n))
        total_steps = self.epochs * steps_per_epoch
        freeze_steps = math.ceil(total_steps / 3)
        buffers: dict = {}
        step = 0
        for epoch in range(self.epochs):
            order = np.random.default_rng([self.seed, _EVAL_SHUFFLE, epoch]).permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                frozen = step < freeze_steps
                head_lr = self.lr * (math.cos(math.pi * step / total_steps) + 1.0) / 2.0
                enc_lr = 0.0 if frozen else head_lr * self.encoder_lr_scale
                batch_seqs = [sequences[int(i)] for i in idx]
                aug = [_augment(s, spec, prepped.graph, self.seed, epoch, branch=0)
                       for s in batch_seqs]
                x = Tensor(np.stack([_to_net(s, prepped.graph, np_dtype) for s in aug]))
                prefixes = ("head.",) if frozen else None
                wrapped = wrap_trainable(params, requires_grad=True, trainable_prefixes=prefixes)
                collector: dict = {}
                mode = "eval" if frozen else "train"
                logits = classifier_forward(wrapped, params, sc, x, adjacency, mode, collector)
                loss = softmax_cross_entropy(logits, labels[idx])
                loss.backward()
                grads = extract_grads(wrapped)
                sgd_step(params, grads, {"head.": head_lr, "encoder.": enc_lr},
                         self.momentum, 0.0, buffers)
                if not frozen:
                    from .byol import ONLINE_BN_ALPHA

                    for name, collected in collector.items():
                        mu = np.mean([m for m, _ in collected], axis=0)
                        var = np.mean([v for _, v in collected], axis=0)
                        momentum_bn_update(params.bn[name], mu, var, ONLINE_BN_ALPHA)
                if self.step_callback is not None:
                    self.step_callback(step, frozen, params)
                step += 1
        self.classifier_ = params
        self.arch_ = ArchDescriptor.from_dict({**arch.to_dict(), "class_count": dataset.class_count})
        self.scaled_arch_ = sc
        self.adjacency_ = adjacency
        self.width_ = width
        self.freeze_steps_ = freeze_steps
        self.total_steps_ = total_steps
        return self


class KnowledgeDistiller(BaseEstimator, _SupervisedMixin):
    """Student training against a frozen teacher's softened predictions.

    Minimizes the cross-entropy between softmax(teacher/T) and
    softmax(student/T) over unlabeled sequences; the label field is never
    read. The student is built from its own seed, not from the teacher.
    """

    def __init__(self, teacher=None, student_arch: ArchDescriptor | None = None,
                 student_width: float = 0.5, temperature: float = 1.0,
                 epochs: int = 30, batch_size: int = 64, base_lr: float = 0.2,
                 momentum: float = 0.9, weight_decay: float = 1e-4,
                 augment="conservative", seed: int = 0, frames: int = 50,
                 center: bool = True, rotate: bool = True, dtype: str = "float32"):
        self.teacher = teacher
        self.student_arch = student_arch
        self.student_width = student_width
        self.temperature = temperature
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.augment = augment
        self.seed = seed
        self.frames = frames
        self.center = center
        self.rotate = rotate
        self.dtype = dtype

    def fit(self, dataset: Dataset, y=None):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        np_dtype = np.dtype(self.dtype).type
        teacher = self.teacher
        if isinstance(teacher, (str, Path)):
            teacher = load_checkpoint(teacher, np_dtype)
        if not isinstance(teacher, CheckpointBundle):
            raise ConfigError("teacher must be a classifier checkpoint path or bundle")
        if "head.w" not in teacher.params.tensors:
            raise ConfigError("teacher checkpoint has no classifier head")
        t_classes = teacher.params.tensors["head.w"].shape[0]
        arch = self.student_arch if self.student_arch is not None else teacher.arch
        s_arch = ArchDescriptor.from_dict({**arch.to_dict(), "class_count": t_classes})
        prepped = self._prep(dataset)
        spec = spec_by_name(self.augment)

        t_sc = scale_arch(teacher.arch, teacher.params.width_multiplier)
        s_sc = scale_arch(s_arch, self.student_width)
        student = build_classifier_params(s_arch, self.student_width, self.seed,
                                          t_classes, np_dtype)
        adjacency = prepped.graph.adjacency_norm.astype(np_dtype)
        # Never touch labels: only the raw view data enters this loop.
        sequences = prepped.sequences
        n = len(sequences)
        steps_per_epoch = batches_per_epoch(n, min(self.batch_size, n))
        total_steps = self.epochs * steps_per_epoch
        wrapped_teacher = wrap_trainable(teacher.params, requires_grad=False)
        buffers: dict = {}
        step = 0
        for epoch in range(self.epochs):
            order = np.random.default_rng([self.seed, _EVAL_SHUFFLE, epoch]).permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                lr = self.base_lr * (math.cos(math.pi * step / total_steps) + 1.0) / 2.0
                aug = [_augment(sequences[int(i)], spec, prepped.graph, self.seed, epoch, branch=0)
                       for i in idx]
                x = Tensor(np.stack([_to_net(s, prepped.graph, np_dtype) for s in aug]))
                t_logits = classifier_forward(wrapped_teacher, teacher.params, t_sc, x,
                                              adjacency, "eval")
                wrapped = wrap_trainable(student, requires_grad=True)
                s_logits = classifier_forward(wrapped, student, s_sc, x, adjacency, "train")
                loss = distillation_loss(s_logits, t_logits.data, self.temperature)
                loss.backward()
                sgd_step(student, extract_grads(wrapped), lr, self.momentum,
                         self.weight_decay, buffers)
                step += 1
        self.classifier_ = student
        self.arch_ = s_arch
        self.scaled_arch_ = s_sc
        self.adjacency_ = adjacency
        self.width_ = self.student_width
        return self


def distillation_loss(student_logits: Tensor, teacher_logits: np.ndarray,
                      temperature: float = 1.0) -> Tensor:
    """H_CE(softmax(teacher/T), softmax(student/T)), mean over the batch."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    targets = softmax(np.asarray(teacher_logits) / temperature, axis=1)
    scaled = student_logits * (1.0 / temperature)
    return softmax_cross_entropy(scaled, targets)


def export_embeddings(encoder, dataset: Dataset, out_dir: str | Path,
                      frames: int = 50, center: bool = True, rotate: bool = True,
                      dtype: str = "float32") -> Path:
    """Write [N x D] eval-mode representations plus labels as manifest+blob."""
    np_dtype = np.dtype(dtype).type
    enc_params, arch, width = _resolve_encoder(encoder, np_dtype)
    prepped = preprocess_dataset(dataset, frames, center, rotate)
    sc = scale_arch(arch, width)
    adjacency = prepped.graph.adjacency_norm.astype(np_dtype)
    feats = encode_sequences(enc_params, sc, adjacency, prepped.sequences, prepped.graph,
                             dtype=np_dtype)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = np.ascontiguousarray(feats, dtype="<f4").tobytes()
    rows = []
    offset = 0
    row_bytes = feats.shape[1] * 4
    for seq in prepped.sequences:
        rows.append(
            {
                "action_id": seq.action_id,
                "camera_id": seq.camera_id,
                "label": seq.label,
                "blob_offset": offset,
                "blob_length": row_bytes,
            }
        )
        offset += row_bytes
    manifest = {
        "kind": "embeddings",
        "dim": int(feats.shape[1]),
        "count": int(feats.shape[0]),
        "blob": "embeddings.bin",
        "rows": rows,
    }
    (out_dir / "embeddings.bin").write_bytes(blob)
    path = out_dir / "embeddings.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_embeddings(manifest_path: str | Path) -> tuple[np.ndarray, list]:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("kind") != "embeddings":
        raise DataError(f"{manifest_path}: not an embeddings manifest")
    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    dim, count = int(manifest["dim"]), int(manifest["count"])
    feats = np.frombuffer(blob, dtype="<f4", count=count * dim).reshape(count, dim).copy()
    labels = [row["label"] for row in manifest["rows"]]
    return feats, labels
