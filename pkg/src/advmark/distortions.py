"""Image distortion bank: evaluation suites plus differentiable training variants.

Two suites drive evaluation: the "known" set used to train the combined
baseline (real JPEG, crop, dropout, Gaussian blur) and an 18-entry
held-out set spanning pixel noise, color changes, palette compression and
resizing. For training, JPEG is swapped for a differentiable
approximation (blockwise DCT, libjpeg quantization tables, a smooth
rounding surrogate) so gradients reach the embedder.

Dropout strength is the probability that a pixel is REPLACED by the cover
pixel, so larger values are stronger attacks.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from skimage.color import hsv2rgb, rgb2hsv

from .types import ContractViolation, ensure_image

FAMILIES = (
    "identity",
    "jpeg",
    "jpeg_diff",
    "crop",
    "dropout",
    "gaussian_blur",
    "gaussian_noise",
    "salt_pepper",
    "hue",
    "saturation",
    "gif",
    "resize_width",
)

# families with a differentiable batched implementation, usable in training
TRAINABLE_FAMILIES = ("identity", "jpeg_diff", "crop", "dropout", "gaussian_blur")


def _check_strength(family: str, s: float) -> None:
    ok = {
        "identity": s == 0.0,
        "jpeg": 1.0 <= s <= 100.0,
        "jpeg_diff": 1.0 <= s <= 100.0,
        "crop": 0.0 < s <= 1.0,
        "dropout": 0.0 <= s <= 1.0,
        "gaussian_blur": s >= 0.0,
        "gaussian_noise": s >= 0.0,
        "salt_pepper": 0.0 <= s <= 1.0,
        "hue": 0.0 <= s < 1.0,
        "saturation": s >= 0.0,
        "gif": 2.0 <= s <= 256.0 and float(s).is_integer(),
        "resize_width": 0.0 < s <= 1.0,
    }[family]
    if not ok:
        raise ContractViolation(f"strength {s} is outside the domain of {family!r}")


def _fmt_strength(s: float) -> str:
    if float(s).is_integer():
        return str(int(s))
    return f"{s:.2f}"


@dataclass(frozen=True)
class DistortionSpec:
    family: str
    strength: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractViolation(f"unknown distortion family {self.family!r}")
        object.__setattr__(self, "strength", float(self.strength))
        _check_strength(self.family, self.strength)

    @property
    def key(self) -> str:
        return f"{self.family}:{_fmt_strength(self.strength)}"

    @staticmethod
    def parse(text: str) -> "DistortionSpec":
        text = text.strip()
        if ":" not in text:
            if text == "identity":
                return DistortionSpec("identity", 0.0)
            raise ContractViolation(f"distortion spec {text!r} is not 'family:strength'")
        family, _, raw = text.partition(":")
        try:
            strength = float(raw)
        except ValueError:
            raise ContractViolation(f"bad distortion strength {raw!r}") from None
        return DistortionSpec(family, strength)


def known_suite() -> list[DistortionSpec]:
    return [
        DistortionSpec("identity", 0.0),
        DistortionSpec("jpeg", 50),
        DistortionSpec("crop", 0.3),
        DistortionSpec("dropout", 0.3),
        DistortionSpec("gaussian_blur", 1.0),
    ]


def unknown_suite() -> list[DistortionSpec]:
    specs = []
    for s in (0.06, 0.08, 0.10):
        specs.append(DistortionSpec("gaussian_noise", s))
    for s in (0.05, 0.10, 0.15):
        specs.append(DistortionSpec("salt_pepper", s))
    for s in (0.2, 0.4, 0.6):
        specs.append(DistortionSpec("hue", s))
    for s in (5, 10, 15):
        specs.append(DistortionSpec("saturation", s))
    for s in (64, 32, 16):
        specs.append(DistortionSpec("gif", s))
    for s in (0.9, 0.7, 0.5):
        specs.append(DistortionSpec("resize_width", s))
    return specs


def ablation_suite() -> list[DistortionSpec]:
    """The four distortions used for model-ablation comparisons."""
    return [
        DistortionSpec("jpeg", 50),
        DistortionSpec("crop", 0.09),
        DistortionSpec("gaussian_blur", 1.0),
        DistortionSpec("dropout", 0.3),
    ]


def training_variant(spec: DistortionSpec) -> DistortionSpec:
    """Swap eval-only families for their differentiable training stand-ins."""
    if spec.family == "jpeg":
        return DistortionSpec("jpeg_diff", spec.strength)
    if spec.family not in TRAINABLE_FAMILIES:
        raise ContractViolation(f"{spec.family!r} has no differentiable training variant")
    return spec


# ---------------------------------------------------------------------------
# differentiable JPEG


_JPEG_QY = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
_JPEG_QC = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def jpeg_quant_tables(quality: float) -> tuple[np.ndarray, np.ndarray]:
    """libjpeg quality scaling of the standard tables."""
    q = float(quality)
    if not 1.0 <= q <= 100.0:
        raise ContractViolation(f"jpeg quality must lie in [1, 100], got {q}")
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    tables = []
    for base in (_JPEG_QY, _JPEG_QC):
        t = np.floor((base * scale + 50.0) / 100.0)
        tables.append(np.clip(t, 1.0, 255.0))
    return tables[0], tables[1]


def _dct_matrix(dtype, device) -> torch.Tensor:
    i = np.arange(8)
    t = 0.5 * np.cos((2 * i[None, :] + 1) * i[:, None] * np.pi / 16.0)
    t[0, :] = np.sqrt(1.0 / 8.0)
    return torch.tensor(t, dtype=dtype, device=device)


def _diff_round(x: torch.Tensor) -> torch.Tensor:
    # smooth stand-in for round(); derivative 3(x - round(x))^2 a.e.
    return torch.round(x) + (x - torch.round(x)) ** 3


def _blocks(plane: torch.Tensor) -> torch.Tensor:
    b, h, w = plane.shape
    x = plane.reshape(b, h // 8, 8, w // 8, 8).permute(0, 1, 3, 2, 4)
    return x.reshape(b, -1, 8, 8)


def _unblocks(blocks: torch.Tensor, h: int, w: int) -> torch.Tensor:
    b = blocks.shape[0]
    x = blocks.reshape(b, h // 8, w // 8, 8, 8).permute(0, 1, 3, 2, 4)
    return x.reshape(b, h, w)


def _quantize_plane(plane: torch.Tensor, table: torch.Tensor, dct: torch.Tensor) -> torch.Tensor:
    h, w = plane.shape[-2:]
    coeffs = dct @ _blocks(plane - 128.0) @ dct.T
    coeffs = _diff_round(coeffs / table) * table
    return _unblocks(dct.T @ coeffs @ dct, h, w) + 128.0


def jpeg_diff_batch(images: torch.Tensor, quality: float) -> torch.Tensor:
    """Differentiable JPEG round trip on a BCHW tensor in [0, 1].

    Chroma is 2x subsampled below quality 95, matching codec defaults.
    """
    qy, qc = jpeg_quant_tables(quality)
    dtype, device = images.dtype, images.device
    b, _, h, w = images.shape
    pad_h = (-h) % 16
    pad_w = (-w) % 16
    x = F.pad(images, (0, pad_w, 0, pad_h), mode="replicate") * 255.0
    r, g, bl = x[:, 0], x[:, 1], x[:, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * bl
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * bl
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * bl

    dct = _dct_matrix(dtype, device)
    ty = torch.tensor(qy, dtype=dtype, device=device)
    tc = torch.tensor(qc, dtype=dtype, device=device)

    y = _quantize_plane(y, ty, dct)
    subsample = quality < 95
    chroma = []
    for plane in (cb, cr):
        if subsample:
            small = F.avg_pool2d(plane.unsqueeze(1), 2)
            small = _quantize_plane(small.squeeze(1), tc, dct)
            plane = F.interpolate(
                small.unsqueeze(1), scale_factor=2, mode="bilinear", align_corners=False
            ).squeeze(1)
        else:
            plane = _quantize_plane(plane, tc, dct)
        chroma.append(plane)
    cb, cr = chroma

    r = y + 1.402 * (cr - 128.0)
    g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0)
    bl = y + 1.772 * (cb - 128.0)
    out = torch.stack([r, g, bl], dim=1) / 255.0
    return out[:, :, :h, :w].clamp(0.0, 1.0)


def jpeg_diff_gradcheck(quality: float, probe, step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients
    of mean(jpeg_diff(probe)) with respect to each probe pixel."""
    arr = ensure_image(probe)
    x = torch.tensor(arr, dtype=torch.float64).permute(2, 0, 1).unsqueeze(0)
    x.requires_grad_(True)
    jpeg_diff_batch(x, quality).mean().backward()
    analytic = x.grad.squeeze(0).numpy()

    flat = x.detach().clone().reshape(-1)
    fd = np.zeros(flat.numel())
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            for sign in (1.0, -1.0):
                flat[i] = orig + sign * step
                val = jpeg_diff_batch(flat.reshape(x.shape), quality).mean().item()
                fd[i] += sign * val
            flat[i] = orig
    fd = (fd / (2.0 * step)).reshape(analytic.shape)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(analytic - fd) / denom))


# ---------------------------------------------------------------------------
# other families


def jpeg_real(image: np.ndarray, quality: float) -> np.ndarray:
    """Round trip through an actual JPEG codec."""
    arr = ensure_image(image)
    buf = io.BytesIO()
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(
        buf, format="JPEG", quality=int(quality)
    )
    buf.seek(0)
    out = np.asarray(Image.open(buf).convert("RGB"), dtype=np.float64)
    return out / 255.0


def gif_quantize(image: np.ndarray, colors: int) -> np.ndarray:
    """Median-cut palette quantization to at most ``colors`` colors, no dithering."""
    arr = ensure_image(image)
    pil = Image.fromarray(np.round(arr * 255.0).astype(np.uint8))
    quant = pil.quantize(colors=int(colors), method=Image.MEDIANCUT, dither=Image.Dither.NONE)
    return np.asarray(quant.convert("RGB"), dtype=np.float64) / 255.0


def hue_rotate(image: np.ndarray, delta: float) -> np.ndarray:
    arr = ensure_image(image)
    if delta == 0.0:
        return arr.copy()
    hsv = rgb2hsv(arr)
    hsv[..., 0] = (hsv[..., 0] + delta) % 1.0
    return np.clip(hsv2rgb(hsv), 0.0, 1.0)


def saturation_scale(image: np.ndarray, factor: float) -> np.ndarray:
    arr = ensure_image(image)
    if factor == 1.0:
        return arr.copy()
    hsv = rgb2hsv(arr)
    hsv[..., 1] = np.clip(hsv[..., 1] * factor, 0.0, 1.0)
    return np.clip(hsv2rgb(hsv), 0.0, 1.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian; kernel size 2*ceil(2*sigma) + 1."""
    if sigma < 0:
        raise ContractViolation(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return np.ones(1, dtype=np.float64)
    radius = int(np.ceil(2.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def blur_batch(images: torch.Tensor, sigma: float) -> torch.Tensor:
    """Separable Gaussian blur with reflective padding on a BCHW tensor."""
    if sigma == 0.0:
        return images
    k = gaussian_kernel(sigma)
    radius = (k.size - 1) // 2
    if radius >= min(images.shape[-2:]):
        raise ContractViolation(
            f"blur radius {radius} too large for image {tuple(images.shape[-2:])}"
        )
    kt = torch.tensor(k, dtype=images.dtype, device=images.device)
    c = images.shape[1]
    kh = kt.view(1, 1, 1, -1).expand(c, 1, 1, -1)
    kv = kt.view(1, 1, -1, 1).expand(c, 1, -1, 1)
    x = F.pad(images, (radius, radius, 0, 0), mode="reflect")
    x = F.conv2d(x, kh, groups=c)
    x = F.pad(x, (0, 0, radius, radius), mode="reflect")
    return F.conv2d(x, kv, groups=c)


def crop_batch(
    images: torch.Tensor, keep_fraction: float, rng: np.random.Generator
) -> torch.Tensor:
    """Keep one uniformly placed square holding ``keep_fraction`` of the area.

    One placement per call; callers wanting per-image placement call per image.
    """
    h, w = images.shape[-2:]
    side = int(np.floor(np.sqrt(keep_fraction) * min(h, w)))
    side = max(side, 1)
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    return images[..., top : top + side, left : left + side]


def dropout_batch(
    images: torch.Tensor, covers: torch.Tensor, p: float, rng: np.random.Generator
) -> torch.Tensor:
    """Replace each pixel (all channels) by the cover pixel with probability p."""
    b, _, h, w = images.shape
    mask = torch.from_numpy((rng.random((b, 1, h, w)) < p).astype(np.float32))
    mask = mask.to(images.dtype)
    return images * (1.0 - mask) + covers * mask


def apply_batch(
    spec: DistortionSpec,
    images: torch.Tensor,
    covers: torch.Tensor | None,
    rng: np.random.Generator,
) -> torch.Tensor:
    """Differentiable distortion of a BCHW batch (training families only)."""
    if spec.family == "identity":
        return images
    if spec.family == "jpeg_diff":
        return jpeg_diff_batch(images, spec.strength)
    if spec.family == "crop":
        return crop_batch(images, spec.strength, rng)
    if spec.family == "gaussian_blur":
        return blur_batch(images, spec.strength).clamp(0.0, 1.0)
    if spec.family == "dropout":
        if covers is None:
            raise ContractViolation("dropout requires the cover images")
        return dropout_batch(images, covers, spec.strength, rng)
    raise ContractViolation(f"{spec.family!r} is not a differentiable training family")


def apply(
    spec: DistortionSpec,
    image: np.ndarray,
    cover: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Apply one distortion to one H x W x 3 image in [0, 1].

    ``cover`` is consulted only by dropout. Stochastic families draw from
    ``rng``; pass a seeded generator for reproducibility.
    """
    arr = ensure_image(image)
    if rng is None:
        rng = np.random.default_rng()
    s = spec.strength
    fam = spec.family
    if fam == "identity":
        return arr.copy()
    if fam == "jpeg":
        return jpeg_real(arr, s)
    if fam == "gif":
        return gif_quantize(arr, int(s))
    if fam == "hue":
        return hue_rotate(arr, s)
    if fam == "saturation":
        return saturation_scale(arr, s)
    if fam == "gaussian_noise":
        if s == 0.0:
            return arr.copy()
        return np.clip(arr + rng.normal(0.0, s, size=arr.shape), 0.0, 1.0)
    if fam == "salt_pepper":
        out = arr.copy()
        chosen = rng.random(arr.shape[:2]) < s
        values = rng.integers(0, 2, size=arr.shape[:2]).astype(np.float64)
        out[chosen] = values[chosen, None]
        return out
    if fam == "resize_width":
        if s == 1.0:
            return arr.copy()
        h, w = arr.shape[:2]
        new_w = max(1, int(round(s * w)))
        x = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
        out = F.interpolate(x, size=(h, new_w), mode="bilinear", align_corners=False)
        return out.squeeze(0).permute(1, 2, 0).numpy()
    # torch-backed families share the batched implementations
    x = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    if fam == "dropout":
        if cover is None:
            raise ContractViolation("dropout requires the cover image")
        cov = ensure_image(cover, "cover")
        if cov.shape != arr.shape:
            raise ContractViolation(
                f"cover shape {cov.shape} must match image shape {arr.shape}"
            )
        c = torch.from_numpy(cov).permute(2, 0, 1).unsqueeze(0)
        out = dropout_batch(x, c, s, rng)
    elif fam == "crop":
        out = crop_batch(x, s, rng)
    elif fam == "gaussian_blur":
        out = blur_batch(x, s).clamp(0.0, 1.0)
    elif fam == "jpeg_diff":
        out = jpeg_diff_batch(x, s)
    else:  # pragma: no cover - family list is closed
        raise ContractViolation(f"unknown distortion family {fam!r}")
    return out.squeeze(0).permute(1, 2, 0).numpy()
