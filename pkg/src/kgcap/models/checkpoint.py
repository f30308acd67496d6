"""Model checkpoints: parameters in a VLCF file plus a JSON sidecar.

VLCF records share one dimensionality, so each parameter's float32 data
is stored as fixed-width chunks with ids ``<parameter path>:<chunk>``;
true shapes live in the sidecar and the final chunk is zero-padded. The
embedding matrix is stored even when frozen so a checkpoint reconstructs
a runnable model on its own.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..embeddings import EmbeddingMatrix
from ..errors import ConfigError, DataError
from ..vlcf import FeatureStore, load_feature_store, write_feature_store

CHUNK_DIM = 512


def _model_arrays(model) -> dict[str, np.ndarray]:
    arrays = {name: p.data for name, p in model.parameters()}
    arrays["embedding.weight"] = model.embedding.weight.data
    return arrays


def save_params(arrays: dict[str, np.ndarray], path: str | Path) -> dict:
    store = FeatureStore(dim=CHUNK_DIM)
    shapes = {}
    for name in sorted(arrays):
        data = np.asarray(arrays[name], dtype=np.float32).reshape(-1)
        shapes[name] = list(np.asarray(arrays[name]).shape)
        n_chunks = max(1, -(-data.size // CHUNK_DIM))
        padded = np.zeros(n_chunks * CHUNK_DIM, dtype=np.float32)
        padded[: data.size] = data
        for k in range(n_chunks):
            store.add(f"{name}:{k}", padded[k * CHUNK_DIM : (k + 1) * CHUNK_DIM])
    write_feature_store(store, path)
    return shapes


def load_params(path: str | Path, shapes: dict[str, list[int]]) -> dict[str, np.ndarray]:
    store = load_feature_store(path)
    out = {}
    for name, shape in shapes.items():
        size = int(np.prod(shape)) if shape else 1
        n_chunks = max(1, -(-size // CHUNK_DIM))
        flat = np.concatenate([store.get(f"{name}:{k}") for k in range(n_chunks)])
        out[name] = flat[:size].astype(np.float64).reshape(shape)
    return out


def save_checkpoint(model, base: str | Path, meta: dict | None = None) -> Path:
    """Write ``<base>.vlcf`` and ``<base>.json``; returns the vlcf path."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    shapes = save_params(_model_arrays(model), base.with_suffix(".vlcf"))
    sidecar = {
        "kind": model.kind,
        "config": model.cfg.to_dict(),
        "init_seed": model.init_seed,
        "vocab_rows": model.vocab_rows,
        "embedding_frozen": model.embedding.frozen,
        "chunk_dim": CHUNK_DIM,
        "param_shapes": shapes,
    }
    sidecar.update(meta or {})
    base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return base.with_suffix(".vlcf")


def load_checkpoint(base: str | Path):
    """Rebuild a captioner from ``<base>.vlcf`` + ``<base>.json``."""
    from .lstm import LstmCaptioner, LstmConfig
    from .transformer import TransformerCaptioner, TransformerConfig

    base = Path(base)
    sidecar = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    arrays = load_params(base.with_suffix(".vlcf"), sidecar["param_shapes"])
    if "embedding.weight" not in arrays:
        raise DataError(f"{base}: checkpoint lacks the embedding matrix")
    emb = EmbeddingMatrix(
        matrix=arrays["embedding.weight"],
        provenance=[],
        seed=sidecar["init_seed"],
        epsilon=1.0,
        frozen=sidecar["embedding_frozen"],
    )
    kind = sidecar["kind"]
    if kind == "transformer":
        model = TransformerCaptioner(
            TransformerConfig(**sidecar["config"]), emb, seed=sidecar["init_seed"]
        )
    elif kind == "lstm":
        model = LstmCaptioner(LstmConfig(**sidecar["config"]), emb, seed=sidecar["init_seed"])
    else:
        raise ConfigError(f"unknown model kind {kind!r} in {base}")
    targets = dict(model.parameters())
    targets["embedding.weight"] = model.embedding.weight
    for name, data in arrays.items():
        if name not in targets:
            raise DataError(f"{base}: checkpoint parameter {name!r} has no target")
        if targets[name].data.shape != data.shape:
            raise DataError(
                f"{base}: parameter {name!r} shape {data.shape} != model {targets[name].data.shape}"
            )
        targets[name].data = data
    return model, sidecar
