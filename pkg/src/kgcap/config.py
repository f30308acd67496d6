"""Pipeline configuration: strict JSON schema with exact key-path errors.

Unknown keys are rejected; every configured path must exist before any
stage runs (the output directory is created instead). Per-module seeds
are derived from the single global seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .seeds import derive_seed

_SCHEMA: dict[str, Any] = {
    "seed": int,
    "dataset": str,
    "backbone": str,
    "kg_enabled": bool,
    "max_seq_len": int,
    "paths": {
        "captions_csv": str,
        "caption_column": str,
        "baseline_csv": (str, type(None)),
        "baseline_column": (str, type(None)),
        "image_features": str,
        "eval_image_features": (str, type(None)),
        "eval_text_features": (str, type(None)),
        "vector_table": str,
        "lexical_source": (str, type(None)),
        "concept_source": (str, type(None)),
        "stopwords": (str, type(None)),
        "frequency_table": str,
        "output_dir": str,
    },
    "model": {
        "kind": str,
        "d_model": int,
        "d_emb": int,
        "layers": int,
        "heads": int,
        "ffn_dim": (int, type(None)),
        "dropout": float,
        "regional_patches": int,
        "local_patches": int,
        "d_img": int,
        "hidden": int,
        "fusion_dense": int,
    },
    "training": {
        "phase1_lr": float,
        "phase1_epochs": int,
        "phase2_lr": float,
        "phase2_epochs": int,
        "batch_size": int,
    },
    "split": {"ratio": float},
    "keywords": {"top_k": int},
    "knowledge": {"allowed_relations": (list, type(None))},
    "embedding": {"epsilon": float, "frozen": bool},
    "evaluation": {
        "mode": str,
        "alpha": (float, type(None)),
        "beta": (float, type(None)),
        "gamma": (float, type(None)),
        "rescale_clip": bool,
    },
    "generate": {"split": str, "max_len": int},
}

_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "dataset": "unnamed",
    "backbone": "vit-768",
    "kg_enabled": True,
    "max_seq_len": 192,
    "paths": {
        "caption_column": "caption",
        "baseline_csv": None,
        "baseline_column": None,
        "eval_image_features": None,
        "eval_text_features": None,
        "lexical_source": None,
        "concept_source": None,
        "stopwords": None,
    },
    "model": {
        "kind": "transformer",
        "d_model": 300,
        "d_emb": 300,
        "layers": 2,
        "heads": 6,
        "ffn_dim": None,
        "dropout": 0.1,
        "regional_patches": 4,
        "local_patches": 12,
        "d_img": 768,
        "hidden": 256,
        "fusion_dense": 256,
    },
    "training": {
        "phase1_lr": 1e-3,
        "phase1_epochs": 10,
        "phase2_lr": 1e-4,
        "phase2_epochs": 5,
        "batch_size": 32,
    },
    "split": {"ratio": 0.8},
    "keywords": {"top_k": 10},
    "knowledge": {"allowed_relations": None},
    "embedding": {"epsilon": 0.05, "frozen": True},
    "evaluation": {
        "mode": "product",
        "alpha": None,
        "beta": None,
        "gamma": None,
        "rescale_clip": False,
    },
    "generate": {"split": "test", "max_len": 192},
}

_REQUIRED_PATHS = ("captions_csv", "image_features", "vector_table", "frequency_table")
# keys under "paths" that are not filesystem paths
_NON_FILE_KEYS = ("caption_column", "baseline_column", "output_dir")


def _check_section(raw: dict, schema: dict, defaults: dict, prefix: str) -> dict:
    out = {}
    for key in raw:
        if key not in schema:
            raise ConfigError(f"unknown config key: {prefix}{key}")
    for key, expected in schema.items():
        if isinstance(expected, dict):
            sub_raw = raw.get(key, {})
            if not isinstance(sub_raw, dict):
                raise ConfigError(f"config key {prefix}{key} must be an object")
            out[key] = _check_section(sub_raw, expected, defaults.get(key, {}), f"{prefix}{key}.")
            continue
        if key in raw:
            value = raw[key]
        elif key in defaults:
            value = defaults[key]
        else:
            raise ConfigError(f"missing required config key: {prefix}{key}")
        types = expected if isinstance(expected, tuple) else (expected,)
        if isinstance(value, bool) and bool not in types:
            raise ConfigError(f"config key {prefix}{key} has wrong type bool")
        if isinstance(value, int) and float in types and int not in types:
            value = float(value)
        if not isinstance(value, types):
            names = "/".join(t.__name__ for t in types)
            raise ConfigError(
                f"config key {prefix}{key} must be {names}, got {type(value).__name__}"
            )
        out[key] = value
    return out


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path
    config_hash: str = field(init=False)

    def __post_init__(self) -> None:
        # The hash identifies the computation (inputs + parameters); where
        # artifacts land is not part of that identity.
        hashed = json.loads(json.dumps(self.raw))
        hashed["paths"].pop("output_dir", None)
        canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
        self.config_hash = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    # -- accessors -------------------------------------------------------
    def __getitem__(self, dotted: str) -> Any:
        node: Any = self.raw
        for part in dotted.split("."):
            node = node[part]
        return node

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    def module_seed(self, module: str) -> int:
        return derive_seed(self.seed, module)

    def path(self, key: str) -> Path | None:
        value = self.raw["paths"][key]
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def require_path(self, key: str, hint: str) -> Path:
        p = self.path(key)
        if p is None:
            raise ConfigError(f"paths.{key} is not configured but {hint}")
        return p

    @property
    def out_dir(self) -> Path:
        return self.require_path("output_dir", "it is always required")

    def stage_dir(self, stage: str) -> Path:
        return self.out_dir / stage

    # -- construction ----------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        checked = _check_section(raw, _SCHEMA, _DEFAULTS, "")
        cfg = cls(raw=checked, base_dir=Path(base_dir))
        cfg.validate_paths()
        if checked["model"]["kind"] not in ("transformer", "lstm"):
            raise ConfigError(
                f"config key model.kind must be 'transformer' or 'lstm', "
                f"got {checked['model']['kind']!r}"
            )
        if checked["generate"]["split"] not in ("train", "test", "all"):
            raise ConfigError("config key generate.split must be train, test or all")
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top-level config must be an object")
        return cls.from_dict(raw, base_dir=path.parent)

    def validate_paths(self) -> None:
        for key in self.raw["paths"]:
            if key in _NON_FILE_KEYS:
                continue
            p = self.path(key)
            if key in _REQUIRED_PATHS and p is None:
                raise ConfigError(f"paths.{key} is required")
            if p is not None and not p.exists():
                raise ConfigError(f"paths.{key} does not exist: {p}")

    def apply_overrides(self, overrides: dict[str, Any]) -> "PipelineConfig":
        """Dotted-key overrides (CLI flags beat config-file values)."""
        merged = json.loads(json.dumps(self.raw))
        for dotted, value in overrides.items():
            node = merged
            parts = dotted.split(".")
            for part in parts[:-1]:
                if part not in node or not isinstance(node[part], dict):
                    raise ConfigError(f"unknown config key: {dotted}")
                node = node[part]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key: {dotted}")
            node[parts[-1]] = value
        return PipelineConfig.from_dict(merged, base_dir=self.base_dir)
