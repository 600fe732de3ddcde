"""Dataset ingestion: decode, resize, and deterministically split cover images."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .types import ContractViolation


class IngestError(OSError):
    """The dataset root is unusable (missing, unreadable, or too small)."""


@dataclass
class DatasetSpec:
    root: str | Path
    target_size: int = 128
    eval_count: int | None = None  # None -> min(3000, available)
    split_seed: int = 0

    def __post_init__(self):
        if self.target_size < 8:
            raise ContractViolation(f"target_size must be >= 8, got {self.target_size}")
        if self.eval_count is not None and self.eval_count < 0:
            raise ContractViolation(f"eval_count must be >= 0, got {self.eval_count}")


@dataclass
class CoverDataset:
    train: np.ndarray  # (N, S, S, 3) float32 in [0, 1]
    eval: np.ndarray
    train_paths: list[str]
    eval_paths: list[str]
    spec: DatasetSpec

    def __len__(self) -> int:
        return self.train.shape[0] + self.eval.shape[0]


def _load_image(path: Path, size: int) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(rgb, dtype=np.float32) / 255.0


def ingest(spec: DatasetSpec) -> CoverDataset:
    """Load every decodable image under the root and split train/eval.

    The split is a seeded permutation, so the same spec always yields the
    same disjoint partitions.
    """
    root = Path(spec.root)
    if not root.is_dir():
        raise IngestError(f"dataset root {root} is not a directory")
    candidates = sorted(p for p in root.rglob("*") if p.is_file())
    images, paths, failures = [], [], []
    for path in candidates:
        try:
            images.append(_load_image(path, spec.target_size))
            paths.append(str(path))
        except Exception:
            failures.append(str(path))
    if len(images) < 2:
        detail = ("; undecodable: " + ", ".join(failures)) if failures else ""
        raise IngestError(
            f"dataset root {root} holds {len(images)} decodable images, need at least 2{detail}"
        )
    stack = np.stack(images)
    n = stack.shape[0]
    eval_count = min(3000, n) if spec.eval_count is None else min(spec.eval_count, n)
    perm = np.random.default_rng(spec.split_seed).permutation(n)
    eval_idx, train_idx = perm[:eval_count], perm[eval_count:]
    return CoverDataset(
        train=stack[train_idx],
        eval=stack[eval_idx],
        train_paths=[paths[i] for i in train_idx],
        eval_paths=[paths[i] for i in eval_idx],
        spec=spec,
    )
