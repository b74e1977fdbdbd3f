"""Versioned checkpoint container for converter and generator training."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Any

import torch

from reenact.errors import StructuralError

CHECKPOINT_FORMAT_VERSION = 1


def state_dict_hash(module: torch.nn.Module) -> str:
    """Order-stable hash of all parameter and buffer bytes."""
    h = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(
    path: str | Path,
    kind: str,
    model_states: dict[str, dict],
    optimizer_states: dict[str, dict],
    epoch: int,
    config_hash: str,
    extra: dict[str, Any] | None = None,
) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "model_states": model_states,
        "optimizer_states": optimizer_states,
        "epoch": epoch,
        "config_hash": config_hash,
        "extra": extra or {},
    }
    torch.save(doc, path)


def load_checkpoint(
    path: str | Path,
    kind: str | None = None,
    expected_config_hash: str | None = None,
) -> dict:
    path = Path(path)
    if not path.exists():
        raise StructuralError(f"checkpoint not found: {path}")
    doc = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(doc, dict) or doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise StructuralError(f"{path}: not a recognized checkpoint (format_version mismatch)")
    if kind is not None and doc.get("kind") != kind:
        raise StructuralError(f"{path}: checkpoint kind {doc.get('kind')!r}, expected {kind!r}")
    if expected_config_hash is not None and doc["config_hash"] != expected_config_hash:
        raise StructuralError(
            f"{path}: config hash mismatch (checkpoint {doc['config_hash'][:12]}..., "
            f"expected {expected_config_hash[:12]}...)"
        )
    return doc
