"""Backbone registry: architectures, preprocessing and pooling per spec.

Each backbone declares its resize edge, pixel normalization and output
dimensionality. Weights come from the sources pinned in
``backbones.lock.json``; when they are unreachable (air-gapped machines,
CI), ``weights="none"`` builds the same architecture with a seeded random
initialization so the export path stays testable end to end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

log = logging.getLogger("vlcf_exporter")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    dim: int
    resize: int  # square edge in pixels
    mean: tuple[float, float, float] | None  # None: keep the [0,1] range
    std: tuple[float, float, float] | None


IMAGE_BACKBONES = {
    "uav-vit": BackboneSpec("uav-vit", 768, 224, None, None),
    "eurosat-resnet50": BackboneSpec("eurosat-resnet50", 2048, 299, IMAGENET_MEAN, IMAGENET_STD),
    "clip-image": BackboneSpec("clip-image", 512, 224, CLIP_MEAN, CLIP_STD),
}

TEXT_BACKBONES = {"clip-text": 512}


def _seed_everything(seed: int) -> None:
    torch.manual_seed(seed)


class VitMeanPool(torch.nn.Module):
    """ViT-B/16 trunk with mean pooling over the last-layer patch tokens."""

    def __init__(self, vit: torch.nn.Module):
        super().__init__()
        self.vit = vit

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        x = self.vit._process_input(pixels)
        cls = self.vit.class_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1)
        x = self.vit.encoder(x)
        return x[:, 1:, :].mean(dim=1)  # average pool, class token excluded


def build_image_model(name: str, weights: str, seed: int) -> torch.nn.Module:
    """weights: "pinned" loads the lockfile source, "none" random-inits."""
    import torchvision

    if name not in IMAGE_BACKBONES:
        raise ValueError(f"unknown image backbone {name!r}")
    if weights not in ("pinned", "none"):
        raise ValueError(f"weights must be 'pinned' or 'none', got {weights!r}")
    _seed_everything(seed)
    if name == "uav-vit":
        vit = torchvision.models.vit_b_16(weights=None)
        model: torch.nn.Module = VitMeanPool(vit)
        if weights == "pinned":
            _load_pinned_state(model.vit, name)
    elif name == "eurosat-resnet50":
        resnet = torchvision.models.resnet50(weights=None)
        resnet.fc = torch.nn.Identity()
        model = resnet
        if weights == "pinned":
            _load_pinned_state(model, name)
    else:  # clip-image
        from transformers import CLIPVisionConfig, CLIPVisionModelWithProjection

        if weights == "pinned":
            model = _load_pinned_clip(name, vision=True)
        else:
            model = CLIPVisionModelWithProjection(CLIPVisionConfig())
        model = _ClipVisionWrapper(model)
    model.eval()
    return model


class _ClipVisionWrapper(torch.nn.Module):
    def __init__(self, clip_vision: torch.nn.Module):
        super().__init__()
        self.clip = clip_vision

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        return self.clip(pixel_values=pixels).image_embeds


class HashTokenizer:
    """Deterministic fallback tokenizer for offline random-init text runs.

    Maps whitespace tokens into the model vocabulary by hashing; only the
    pinned-weights path uses the real BPE tokenizer.
    """

    def __init__(self, vocab_size: int, bos: int, eos: int, max_len: int = 77):
        self.vocab_size = vocab_size
        self.bos = bos
        self.eos = eos
        self.max_len = max_len

    def encode(self, text: str) -> list[int]:
        import hashlib

        span = self.vocab_size - 2
        ids = [
            int.from_bytes(hashlib.sha256(tok.encode()).digest()[:4], "little") % span
            for tok in text.lower().split()
        ]
        ids = ids[: self.max_len - 2]
        return [self.bos] + ids + [self.eos]


class ClipTextEncoder:
    def __init__(self, weights: str, seed: int):
        from transformers import CLIPTextConfig, CLIPTextModelWithProjection

        if weights not in ("pinned", "none"):
            raise ValueError(f"weights must be 'pinned' or 'none', got {weights!r}")
        _seed_everything(seed)
        if weights == "pinned":
            self.model, self.tokenizer = _load_pinned_clip("clip-text", vision=False)
        else:
            config = CLIPTextConfig()
            self.model = CLIPTextModelWithProjection(config)
            self.tokenizer = HashTokenizer(
                config.vocab_size, config.bos_token_id, config.eos_token_id,
                config.max_position_embeddings,
            )
            log.warning("clip-text running with random weights and the hash tokenizer")
        self.model.eval()
        self.dim = TEXT_BACKBONES["clip-text"]

    @torch.no_grad()
    def encode(self, text: str) -> np.ndarray:
        if isinstance(self.tokenizer, HashTokenizer):
            ids = torch.tensor([self.tokenizer.encode(text)])
        else:
            ids = self.tokenizer(
                text, return_tensors="pt", truncation=True, padding=False
            ).input_ids
        return self.model(input_ids=ids).text_embeds[0].numpy().astype(np.float32)


def _load_pinned_state(model: torch.nn.Module, name: str) -> None:
    """Fetch the lockfile-pinned checkpoint for a torchvision trunk."""
    import json
    from pathlib import Path

    lock = json.loads(
        (Path(__file__).resolve().parents[2] / "backbones.lock.json").read_text()
    )
    entry = lock["backbones"][name]
    state = torch.hub.load_state_dict_from_url(entry["url"], map_location="cpu")
    model.load_state_dict(state)


def _load_pinned_clip(name: str, vision: bool):
    import json
    from pathlib import Path

    from transformers import (
        AutoTokenizer,
        CLIPTextModelWithProjection,
        CLIPVisionModelWithProjection,
    )

    lock = json.loads(
        (Path(__file__).resolve().parents[2] / "backbones.lock.json").read_text()
    )
    entry = lock["backbones"][name]
    if vision:
        return CLIPVisionModelWithProjection.from_pretrained(
            entry["model_id"], revision=entry["revision"]
        )
    model = CLIPTextModelWithProjection.from_pretrained(
        entry["model_id"], revision=entry["revision"]
    )
    tokenizer = AutoTokenizer.from_pretrained(entry["model_id"], revision=entry["revision"])
    return model, tokenizer
