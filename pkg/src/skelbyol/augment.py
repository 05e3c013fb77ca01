"""Skeleton sequence augmentations and the two transformation pipelines.

Five transforms operate on preprocessed 3-channel joint data:

* low-pass filtering (Savitzky-Golay smoothing, mirror padding)
* temporal resampling at a random rate (cyclic timeline)
* shear on the channel dimension
* cyclic temporal shift
* left/right limb drop

``apply_pipeline`` composes them in the fixed order
filter -> resample -> shear -> shift -> drop. The aggressive pipeline
enables everything; the conservative one only resamples.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import savgol_coeffs

from .data import SkeletonSequence
from .errors import ConfigError, DataError
from .graphs import SkeletonGraph


@dataclass(frozen=True)
class ShearParams:
    """Off-diagonal factors of the 3x3 shear matrix (row X/Y/Z, column Y/Z/X...)."""

    s_xy: float = 0.0
    s_xz: float = 0.0
    s_yx: float = 0.0
    s_yz: float = 0.0
    s_zx: float = 0.0
    s_zy: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0, self.s_xy, self.s_xz],
                [self.s_yx, 1.0, self.s_yz],
                [self.s_zx, self.s_zy, 1.0],
            ]
        )


def shear(seq: SkeletonSequence, params: ShearParams) -> SkeletonSequence:
    """Left-multiply every joint coordinate by the shear matrix."""
    _require_raw(seq)
    s = params.matrix.astype(seq.data.dtype)
    out = np.einsum("ij,tkj->tki", s, seq.data)
    return seq.with_data(np.ascontiguousarray(out))


def left_right_drop(seq: SkeletonSequence, side: str, graph: SkeletonGraph) -> SkeletonSequence:
    """Zero out all channels of the chosen side's joints for every frame."""
    _require_raw(seq)
    if side not in ("left", "right"):
        raise ConfigError(f"side must be 'left' or 'right', got {side!r}")
    joints = sorted(graph.left_joints if side == "left" else graph.right_joints)
    out = seq.data.copy()
    out[:, joints, :] = 0.0
    return seq.with_data(out)


def resample(seq: SkeletonSequence, rate: float) -> SkeletonSequence:
    """Speed change: output frame k linearly interpolates the input at k*rate.

    The input timeline is extended cyclically, so the output keeps length T.
    """
    if rate <= 0:
        raise ConfigError(f"resample rate must be positive, got {rate}")
    t = seq.frames
    if t < 2:
        raise DataError("resample needs at least 2 frames")
    if rate == 1.0:
        return seq.with_data(seq.data.copy())
    pos = (np.arange(t) * float(rate)) % t
    i0 = np.floor(pos).astype(np.int64)
    frac = (pos - i0)[:, None, None].astype(seq.data.dtype)
    i1 = (i0 + 1) % t
    out = (1.0 - frac) * seq.data[i0] + frac * seq.data[i1]
    return seq.with_data(out.astype(seq.data.dtype))


def lowpass_filter(seq: SkeletonSequence, poly_order: int = 2, window: int = 15) -> SkeletonSequence:
    """Savitzky-Golay smoothing along time, per joint and channel.

    Boundaries use mirror padding (edge frame not repeated), which keeps the
    filter well defined for any T >= 2.
    """
    if window % 2 == 0 or window <= poly_order or poly_order < 0:
        raise ConfigError(f"need odd window > poly_order, got window={window} order={poly_order}")
    t = seq.frames
    if t < 2:
        raise DataError("lowpass_filter needs at least 2 frames")
    coeffs = savgol_coeffs(window, poly_order, use="dot").astype(np.float64)
    half = window // 2
    padded = np.pad(seq.data.astype(np.float64), ((half, half), (0, 0), (0, 0)), mode="reflect")
    windows = sliding_window_view(padded, window, axis=0)  # [T, J, C, window]
    out = np.einsum("tjcw,w->tjc", windows, coeffs)
    return seq.with_data(out.astype(seq.data.dtype))


def temporal_shift(seq: SkeletonSequence, offset: int) -> SkeletonSequence:
    """Cyclic shift: output frame k = input frame (k + offset) mod T."""
    if offset < 0:
        raise ConfigError(f"offset must be >= 0, got {offset}")
    out = np.roll(seq.data, -int(offset) % seq.frames, axis=0)
    return seq.with_data(out)


@dataclass(frozen=True)
class ResampleSpec:
    enabled: bool = False
    rate_range: tuple[float, float] = (0.7, 1.3)


@dataclass(frozen=True)
class FilterSpec:
    enabled: bool = False
    probability: float = 0.5
    poly_order: int = 2
    window: int = 15


@dataclass(frozen=True)
class ShearSpec:
    enabled: bool = False
    factor_range: tuple[float, float] = (-1.0, 1.0)


@dataclass(frozen=True)
class ShiftSpec:
    enabled: bool = False
    offset_range: tuple[int, int] = (0, 150)


@dataclass(frozen=True)
class DropSpec:
    enabled: bool = False
    probability: float = 0.5
    side_probability: float = 0.5  # chance of dropping the left side


@dataclass(frozen=True)
class AugmentationSpec:
    """Declarative pipeline: which transforms run and their parameter ranges."""

    resample: ResampleSpec = field(default_factory=ResampleSpec)
    filter: FilterSpec = field(default_factory=FilterSpec)
    shear: ShearSpec = field(default_factory=ShearSpec)
    temporal_shift: ShiftSpec = field(default_factory=ShiftSpec)
    lr_drop: DropSpec = field(default_factory=DropSpec)

    def __post_init__(self):
        for p in (self.filter.probability, self.lr_drop.probability, self.lr_drop.side_probability):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"probability {p} outside [0, 1]")
        if self.filter.window % 2 == 0 or self.filter.window <= self.filter.poly_order:
            raise ConfigError("filter window must be odd and greater than poly_order")
        lo, hi = self.resample.rate_range
        if lo <= 0 or hi < lo:
            raise ConfigError(f"rate_range must be positive and ordered, got {self.resample.rate_range}")
        lo, hi = self.temporal_shift.offset_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"offset_range must be ordered non-negative ints, got {self.temporal_shift.offset_range}")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "AugmentationSpec":
        def tup(x):
            return tuple(x) if isinstance(x, (list, tuple)) else x

        return AugmentationSpec(
            resample=ResampleSpec(**{**d.get("resample", {}), "rate_range": tup(d.get("resample", {}).get("rate_range", (0.7, 1.3)))}),
            filter=FilterSpec(**d.get("filter", {})),
            shear=ShearSpec(**{**d.get("shear", {}), "factor_range": tup(d.get("shear", {}).get("factor_range", (-1.0, 1.0)))}),
            temporal_shift=ShiftSpec(**{**d.get("temporal_shift", {}), "offset_range": tup(d.get("temporal_shift", {}).get("offset_range", (0, 150)))}),
            lr_drop=DropSpec(**d.get("lr_drop", {})),
        )


def aggressive_preset() -> AugmentationSpec:
    """Everything on: filter p=0.5, resample [0.7, 1.3], shear [-1, 1],
    shift [0, 150), drop p=0.5 with both sides equally likely."""
    return AugmentationSpec(
        resample=ResampleSpec(enabled=True, rate_range=(0.7, 1.3)),
        filter=FilterSpec(enabled=True, probability=0.5, poly_order=2, window=15),
        shear=ShearSpec(enabled=True, factor_range=(-1.0, 1.0)),
        temporal_shift=ShiftSpec(enabled=True, offset_range=(0, 150)),
        lr_drop=DropSpec(enabled=True, probability=0.5, side_probability=0.5),
    )


def conservative_preset() -> AugmentationSpec:
    """Only random resampling."""
    return AugmentationSpec(resample=ResampleSpec(enabled=True, rate_range=(0.7, 1.3)))


PRESETS = {"aggressive": aggressive_preset, "conservative": conservative_preset}


def spec_by_name(name_or_dict) -> AugmentationSpec:
    if isinstance(name_or_dict, AugmentationSpec):
        return name_or_dict
    if isinstance(name_or_dict, str):
        try:
            return PRESETS[name_or_dict]()
        except KeyError:
            raise ConfigError(f"unknown augmentation preset '{name_or_dict}'") from None
    if isinstance(name_or_dict, dict):
        return AugmentationSpec.from_dict(name_or_dict)
    raise ConfigError(f"cannot interpret augmentation spec {name_or_dict!r}")


def apply_pipeline(
    seq: SkeletonSequence, spec: AugmentationSpec, rng: np.random.Generator,
    graph: SkeletonGraph | None = None,
) -> SkeletonSequence:
    """Run the enabled transforms in fixed order with parameters from ``rng``.

    Draw order (only enabled transforms consume randomness): filter
    activation, resample rate, shear factors, shift offset, drop activation
    then side. Deterministic given the generator state.
    """
    _require_raw(seq)
    out = seq
    if spec.filter.enabled and rng.random() < spec.filter.probability:
        out = lowpass_filter(out, spec.filter.poly_order, spec.filter.window)
    if spec.resample.enabled:
        rate = rng.uniform(*spec.resample.rate_range)
        out = resample(out, rate)
    if spec.shear.enabled:
        lo, hi = spec.shear.factor_range
        factors = rng.uniform(lo, hi, size=6)
        out = shear(out, ShearParams(*factors))
    if spec.temporal_shift.enabled:
        lo, hi = spec.temporal_shift.offset_range
        offset = int(rng.integers(lo, max(hi, lo + 1)))
        out = temporal_shift(out, offset)
    if spec.lr_drop.enabled and rng.random() < spec.lr_drop.probability:
        if graph is None:
            raise ConfigError("left/right drop requires the skeleton graph")
        side = "left" if rng.random() < spec.lr_drop.side_probability else "right"
        out = left_right_drop(out, side, graph)
    if out is seq:
        out = seq.with_data(seq.data.copy())
    return out


def _require_raw(seq: SkeletonSequence) -> None:
    if seq.channels != 3:
        raise DataError(f"augmentations expect 3-channel joint data, got C={seq.channels}")
