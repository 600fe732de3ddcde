"""Versioned checkpoint files for every trainable component.

Each checkpoint embeds a format version, a component kind, the arguments
needed to rebuild the module, and an architecture fingerprint so that
embed/extract can refuse mismatched encoder/decoder/codec combinations
with a precise error instead of garbage output.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import torch

from .types import ContractViolation

CHECKPOINT_VERSION = 1


def arch_fingerprint(arch: dict) -> str:
    text = repr(sorted(arch.items()))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def save_checkpoint(path, kind: str, state_dict: dict, arch: dict, meta: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "kind": kind,
            "arch": arch,
            "arch_fingerprint": arch_fingerprint(arch),
            "meta": dict(meta or {}),
            "state_dict": state_dict,
        },
        path,
    )


def load_checkpoint(path, expected_kind: str | None = None) -> dict:
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ContractViolation(f"{path} is not a recognized checkpoint file")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise ContractViolation(
            f"{path} has checkpoint version {payload['format_version']}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    if expected_kind is not None and payload["kind"] != expected_kind:
        raise ContractViolation(
            f"{path} holds a {payload['kind']!r} checkpoint, expected {expected_kind!r}"
        )
    if payload.get("arch_fingerprint") != arch_fingerprint(payload["arch"]):
        raise ContractViolation(f"{path} fingerprint does not match its architecture record")
    return payload
