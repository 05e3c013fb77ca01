"""Run configuration: shipped profiles, config-file loading, and validation.

A run config is a JSON object with per-command sections. Two profiles are
shipped: ``desk`` (minutes-scale CPU runs on synthetic data, the default)
and ``paper`` (the full-scale hyperparameters the protocols were designed
with). A config file may set ``"profile"`` and override any subset of keys;
unknown keys are rejected.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigError

DESK_PROFILE: dict = {
    "seed": 0,
    "data": {
        "graph": "humanoid15",
        "class_count": 4,
        "samples_per_class": 128,
        "views_per_sample": 2,
        "frames_raw": 60,
        "frames": 50,
        "sample_noise": 0.012,
        "view_noise": 0.01,
        "amplitude": 0.12,
        "max_view_angle": 6.283185307179586,
        "center": True,
        "rotate": True,
        "test_fraction": 0.25,
        "split_seed": 0,
    },
    "augmentation": {
        "spec1": "aggressive",
        "spec2": "conservative",
    },
    "arch": {
        "blocks": [
            {"out_channels": 16, "temporal_kernel": 9, "stride": 2, "residual": False},
            {"out_channels": 32, "temporal_kernel": 9, "stride": 2, "residual": True},
            {"out_channels": 64, "temporal_kernel": 9, "stride": 1, "residual": True},
        ],
        "in_channels": 6,
        "hidden_dim": 128,
        "projection_dim": 64,
    },
    "train": {
        "epochs": 100,
        "batch_size": 128,
        "base_lr": 0.05,
        "start_lr": 1e-6,
        "warmup_epochs": 10,
        "weight_decay": 1e-4,
        "sgd_momentum": 0.9,
        "lambda_base": 0.99,
        "bn_alpha": 0.99,
        "mvs_enabled": True,
        "width_multiplier": 1.0,
        "dtype": "float32",
    },
    "eval": {
        "probe_epochs": 30,
        "probe_batch_size": 64,
        "probe_lr": 30.0,
        "milestones": [0.6, 0.8],
        "finetune_epochs": 20,
        "finetune_batch_size": 16,
        "finetune_lr": 10.0,
        "encoder_lr_scale": 1e-3,
        "fractions": [0.01, 0.05, 0.1],
        "subset_seeds": [0, 1, 2, 3, 4],
    },
    "distill": {
        "temperature": 1.0,
        "epochs": 30,
        "batch_size": 64,
        "base_lr": 0.2,
        "weight_decay": 1e-4,
        "student_width": 0.5,
        "student_seed": 0,
    },
}

# Full-scale settings: 150-frame crops, 1600-epoch pre-training at batch
# 512, probe for 100 epochs at lr 30 with milestones 60/80, fine-tuning at
# lr 10 with a frozen first third, distillation for 100 epochs at lr 0.2.
PAPER_PROFILE: dict = copy.deepcopy(DESK_PROFILE)
PAPER_PROFILE["data"].update({"frames_raw": 300, "frames": 150})
PAPER_PROFILE["train"].update({"epochs": 1600, "batch_size": 512, "base_lr": 0.2, "warmup_epochs": 10})
PAPER_PROFILE["eval"].update({"probe_epochs": 100, "probe_batch_size": 256,
                              "finetune_epochs": 100, "finetune_batch_size": 8})
PAPER_PROFILE["distill"].update({"epochs": 100, "batch_size": 256})

PROFILES = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(file_path: str | Path | None = None, overrides: dict | None = None,
                   profile: str | None = None) -> dict:
    """Profile defaults <- config file <- explicit overrides, validated.

    ``profile`` (e.g. a --profile flag) wins over the file's "profile" key.
    """
    file_cfg: dict = {}
    if file_path is not None:
        path = Path(file_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must contain a JSON object")
    profile_name = profile or file_cfg.pop("profile", "desk")
    file_cfg.pop("profile", None)
    if profile_name not in PROFILES:
        raise ConfigError(f"unknown profile '{profile_name}' (choose from {sorted(PROFILES)})")
    cfg = _merge(PROFILES[profile_name], file_cfg)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    """Cross-checks run before any work starts."""
    from .augment import spec_by_name
    from .nn.network import ArchDescriptor

    data, train = cfg["data"], cfg["train"]
    for key in ("class_count", "samples_per_class", "views_per_sample", "frames", "frames_raw"):
        if data[key] < 1:
            raise ConfigError(f"data.{key} must be >= 1, got {data[key]}")
    if not 0.0 < data["test_fraction"] < 1.0:
        raise ConfigError(f"data.test_fraction must be in (0, 1), got {data['test_fraction']}")
    if train["epochs"] > 0 and train["warmup_epochs"] >= train["epochs"]:
        raise ConfigError("train.warmup_epochs must be < train.epochs")
    if not 0.0 <= train["lambda_base"] <= 1.0:
        raise ConfigError("train.lambda_base outside [0, 1]")
    if not 0.0 <= train["bn_alpha"] <= 1.0:
        raise ConfigError("train.bn_alpha outside [0, 1]")
    spec_by_name(cfg["augmentation"]["spec1"])
    spec_by_name(cfg["augmentation"]["spec2"])
    ArchDescriptor.from_dict(cfg["arch"])
    if cfg["distill"]["temperature"] <= 0:
        raise ConfigError("distill.temperature must be positive")
    for frac in cfg["eval"]["fractions"]:
        if not 0.0 < frac <= 1.0:
            raise ConfigError(f"eval fraction {frac} outside (0, 1]")


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
