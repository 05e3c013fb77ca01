"""Input validation helpers for the estimator API.

These mirror the role of scikit-learn's ``check_array`` for this package's
domain objects: call them at the top of ``fit``/``transform``-style entry
points to fail fast with a clear message.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, validate_dataset
from .errors import ConfigError, DataError


def check_dataset(obj, require_labels: bool = False, min_samples: int = 1) -> Dataset:
    if not isinstance(obj, Dataset):
        raise ConfigError(f"expected a Dataset, got {type(obj).__name__}")
    validate_dataset(obj)
    if len(obj.samples) < min_samples:
        raise DataError(f"dataset has {len(obj.samples)} samples, need >= {min_samples}")
    if require_labels and any(s.label is None for s in obj.samples):
        raise DataError("this protocol requires a label on every sample")
    return obj


def check_probability(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must be in [0, 1], got {value}")
    return float(value)


def check_positive(value, name: str):
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def check_finite_array(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite values")
    return arr
