"""Bit accuracy, PSNR, and YUV colorspace utilities."""
from __future__ import annotations

import numpy as np

from .types import ContractViolation, as_bit_array, as_soft_array, ensure_image

PSNR_CAP_DB = 100.0

# BT.601 full-range transform; U and V are offset to sit at 0.5 for gray.
RGB_TO_YUV = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YUV_OFFSET = np.array([0.0, 0.5, 0.5])
YUV_TO_RGB = np.linalg.inv(RGB_TO_YUV)

_CHANNEL_INDEX = {"y": 0, "u": 1, "v": 2}


def rng_from_seed(seed) -> np.random.Generator:
    """Build a Generator from a seed; pass Generators through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def threshold_bits(values) -> np.ndarray:
    """Binarize soft values at 0.5; ties round up to 1."""
    return (np.asarray(values, dtype=np.float64) >= 0.5).astype(np.uint8)


def bit_accuracy(estimate, truth) -> float:
    """Fraction of positions where the thresholded estimate matches the truth."""
    est = as_soft_array(estimate)
    tru = as_bit_array(truth)
    if est.size != tru.size:
        raise ContractViolation(
            f"length mismatch: estimate has {est.size} values, truth has {tru.size} bits"
        )
    return float(np.mean(threshold_bits(est) == tru))


def rgb_to_yuv(img) -> np.ndarray:
    """BT.601 full-range RGB -> YUV; Y in [0,1], U and V centered at 0.5."""
    arr = ensure_image(img)
    return arr @ RGB_TO_YUV.T + YUV_OFFSET


def yuv_to_rgb(yuv) -> np.ndarray:
    """Inverse of rgb_to_yuv. Output is not clipped."""
    arr = np.asarray(yuv, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractViolation(f"yuv grid must be H x W x 3, got shape {arr.shape}")
    return (arr - YUV_OFFSET) @ YUV_TO_RGB.T


def psnr(a, b, channels: str = "rgb", cap_db: float = PSNR_CAP_DB) -> float:
    """PSNR in dB over the selected channels (``rgb``, ``y``, ``u`` or ``v``).

    MAX is 1.0; identical inputs return ``cap_db``.
    """
    x = ensure_image(a, "a")
    y = ensure_image(b, "b")
    if x.shape != y.shape:
        raise ContractViolation(f"dimension mismatch: {x.shape} vs {y.shape}")
    sel = channels.lower()
    if sel == "rgb":
        diff = x - y
    elif sel in _CHANNEL_INDEX:
        idx = _CHANNEL_INDEX[sel]
        diff = rgb_to_yuv(x)[..., idx] - rgb_to_yuv(y)[..., idx]
    else:
        raise ContractViolation(f"unknown channel selector {channels!r}")
    mse = float(np.mean(diff**2))
    if mse == 0.0:
        return cap_db
    return 10.0 * float(np.log10(1.0 / mse))
