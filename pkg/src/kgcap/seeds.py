"""Stable per-module seed derivation from one global seed."""

from __future__ import annotations

import hashlib


def derive_seed(global_seed: int, name: str) -> int:
    """Stable 32-bit seed for ``name`` under ``global_seed``."""
    digest = hashlib.sha256(f"{global_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")
