"""Shared domain types and contract checking.

Three currencies flow through the system: fixed-length binary messages,
their real-valued (pre-threshold) estimates, and H x W x 3 images with
entries in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractViolation(ValueError):
    """A caller broke a documented precondition of an operation."""


def _as_1d(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ContractViolation(f"{name} must be non-empty")
    return arr


@dataclass(frozen=True, eq=False)
class BitMessage:
    """Fixed-length binary message; every entry is exactly 0 or 1."""

    bits: np.ndarray

    def __post_init__(self):
        arr = _as_1d(self.bits, "bits")
        if not np.isin(arr, (0, 1)).all():
            raise ContractViolation("bits must contain only 0s and 1s")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        return isinstance(other, BitMessage) and np.array_equal(self.bits, other.bits)

    def complement(self) -> "BitMessage":
        return BitMessage(1 - self.bits)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "BitMessage":
        if length <= 0:
            raise ContractViolation(f"message length must be positive, got {length}")
        return cls(rng.integers(0, 2, size=length))

    @classmethod
    def from_string(cls, text: str) -> "BitMessage":
        if not text or any(c not in "01" for c in text):
            raise ContractViolation("message string must be a non-empty run of 0/1 characters")
        return cls(np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0"))

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_hex(cls, text: str, length: int | None = None) -> "BitMessage":
        text = text.strip().lower().removeprefix("0x")
        if not text or any(c not in "0123456789abcdef" for c in text):
            raise ContractViolation("hex message must be a non-empty run of hex digits")
        bits = []
        for c in text:
            bits.extend(int(d) for d in format(int(c, 16), "04b"))
        if length is not None and length != len(bits):
            raise ContractViolation(
                f"hex message encodes {len(bits)} bits but {length} were expected"
            )
        return cls(np.array(bits))

    def to_hex(self) -> str:
        if self.length % 4 != 0:
            raise ContractViolation(
                f"hex form requires a length divisible by 4, got {self.length}"
            )
        s = self.to_string()
        return "".join(format(int(s[i : i + 4], 2), "x") for i in range(0, len(s), 4))


@dataclass(frozen=True, eq=False)
class SoftMessage:
    """Real-valued message estimate, before thresholding to bits."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_1d(self.values, "values").astype(np.float64)
        if not np.isfinite(arr).all():
            raise ContractViolation("soft message values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def length(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.length


def as_bit_array(msg) -> np.ndarray:
    """Coerce a BitMessage or array-like of 0/1 to a uint8 vector."""
    if isinstance(msg, BitMessage):
        return msg.bits
    arr = _as_1d(msg, "bits")
    if not np.isin(arr, (0, 1)).all():
        raise ContractViolation("bits must contain only 0s and 1s")
    return arr.astype(np.uint8)


def as_soft_array(msg) -> np.ndarray:
    """Coerce a SoftMessage, BitMessage, or array-like to a float vector."""
    if isinstance(msg, SoftMessage):
        return msg.values
    if isinstance(msg, BitMessage):
        return msg.bits.astype(np.float64)
    return _as_1d(msg, "values").astype(np.float64)


def ensure_image(img, name: str = "image", min_side: int = 8) -> np.ndarray:
    """Validate an H x W x 3 image with entries in [0, 1]; returns float64."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractViolation(f"{name} must be H x W x 3, got shape {arr.shape}")
    if min(arr.shape[0], arr.shape[1]) < min_side:
        raise ContractViolation(
            f"{name} sides must be at least {min_side}, got {arr.shape[0]}x{arr.shape[1]}"
        )
    arr = arr.astype(np.float64, copy=False)
    if not np.isfinite(arr).all():
        raise ContractViolation(f"{name} must contain finite values")
    if arr.min() < -1e-6 or arr.max() > 1 + 1e-6:
        raise ContractViolation(
            f"{name} entries must lie in [0, 1], got range "
            f"[{arr.min():.4g}, {arr.max():.4g}]"
        )
    return np.clip(arr, 0.0, 1.0)
