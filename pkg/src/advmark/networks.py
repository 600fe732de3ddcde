"""Watermark embedding/extraction networks and the realism critic.

The embedder runs the cover through four Conv-BN-ReLU blocks, concatenates
the spatially replicated message and the cover itself onto the features,
and maps back to three channels with two more blocks. All of its
convolutions are valid; the input is symmetrically padded once so the
output is exactly the cover size, which avoids the boundary artifacts of
zero padding. The extractor is seven Conv-BN-ReLU layers (last two
stride 2) with global average pooling and a linear head, so it accepts
any input at least 8 x 8 (crops, resizes) and always emits a fixed-length
vector. The critic scores realism with spectrally normalized weights.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm

from .types import BitMessage, ContractViolation, SoftMessage, as_bit_array, ensure_image

# torch momentum 0.01 == running-average decay 0.99
BN_MOMENTUM = 0.01


def symmetric_pad(x: torch.Tensor, pad: int) -> torch.Tensor:
    """Edge-including mirror padding of a BCHW tensor (TF 'SYMMETRIC')."""
    if pad <= 0:
        return x
    if pad > x.shape[-1] or pad > x.shape[-2]:
        raise ContractViolation(f"cannot symmetric-pad {tuple(x.shape[-2:])} by {pad}")
    x = torch.cat([x[..., :pad].flip(-1), x, x[..., -pad:].flip(-1)], dim=-1)
    x = torch.cat([x[..., :pad, :].flip(-2), x, x[..., -pad:, :].flip(-2)], dim=-2)
    return x


def _block(cin: int, cout: int, stride: int = 1, padding: int = 0) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=padding),
        nn.BatchNorm2d(cout, momentum=BN_MOMENTUM),
        nn.ReLU(),
    )


class WatermarkEncoder(nn.Module):
    def __init__(self, message_len: int = 120, width: int = 64):
        super().__init__()
        if message_len <= 0:
            raise ContractViolation(f"message_len must be positive, got {message_len}")
        self.message_len = message_len
        self.width = width
        self.pre = nn.Sequential(
            _block(3, width), _block(width, width), _block(width, width), _block(width, width)
        )
        self.post = nn.Sequential(_block(width + message_len + 3, width), _block(width, 3))

    def forward(self, image: torch.Tensor, message: torch.Tensor) -> torch.Tensor:
        if image.shape[-1] < 8 or image.shape[-2] < 8:
            raise ContractViolation(f"cover sides must be >= 8, got {tuple(image.shape[-2:])}")
        if message.shape[-1] != self.message_len:
            raise ContractViolation(
                f"message has {message.shape[-1]} bits but the encoder expects {self.message_len}"
            )
        # 6 valid 3x3 convs eat 12 pixels per axis; pad once so output is H x W
        feats = self.pre(symmetric_pad(image, 6))
        planes = message[:, :, None, None].expand(-1, -1, feats.shape[-2], feats.shape[-1])
        cover = symmetric_pad(image, 2)
        out = self.post(torch.cat([feats, planes, cover], dim=1))
        return out.clamp(0.0, 1.0)


class WatermarkDecoder(nn.Module):
    def __init__(self, message_len: int = 120, width: int = 64):
        super().__init__()
        if message_len <= 0:
            raise ContractViolation(f"message_len must be positive, got {message_len}")
        self.message_len = message_len
        self.width = width
        self.features = nn.Sequential(
            _block(3, width, padding=1),
            _block(width, width, padding=1),
            _block(width, width, padding=1),
            _block(width, width, padding=1),
            _block(width, width, padding=1),
            _block(width, width, stride=2, padding=1),
            _block(width, width, stride=2, padding=1),
        )
        self.head = nn.Linear(width, message_len)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.shape[-1] < 8 or image.shape[-2] < 8:
            raise ContractViolation(f"image sides must be >= 8, got {tuple(image.shape[-2:])}")
        feats = self.features(image).mean(dim=(-2, -1))
        return self.head(feats)


class Discriminator(nn.Module):
    """Realness critic; every weight matrix is spectrally normalized."""

    def __init__(self, width: int = 64, blocks: int = 3):
        super().__init__()
        layers: list[nn.Module] = []
        cin = 3
        for _ in range(blocks):
            layers += [
                spectral_norm(nn.Conv2d(cin, width, 3, padding=1)),
                nn.BatchNorm2d(width, momentum=BN_MOMENTUM),
                nn.ReLU(),
            ]
            cin = width
        self.features = nn.Sequential(*layers)
        self.head = spectral_norm(nn.Linear(width, 1))
        self.width = width
        self.blocks = blocks

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        feats = self.features(image).mean(dim=(-2, -1))
        return self.head(feats).squeeze(-1)


def image_to_tensor(img) -> torch.Tensor:
    arr = ensure_image(img)
    return torch.from_numpy(arr.astype(np.float32)).permute(2, 0, 1).unsqueeze(0)


def tensor_to_image(x: torch.Tensor) -> np.ndarray:
    return x.squeeze(0).permute(1, 2, 0).detach().numpy().astype(np.float64)


def _inference(module: nn.Module):
    class _Ctx:
        def __enter__(self):
            self.was_training = module.training
            module.eval()
            self.grad = torch.no_grad()
            self.grad.__enter__()
            return module

        def __exit__(self, *exc):
            self.grad.__exit__(*exc)
            module.train(self.was_training)
            return False

    return _Ctx()


def encode_image(encoder: WatermarkEncoder, cover, message) -> np.ndarray:
    """Embed a message into one cover image; output same size, in [0, 1]."""
    bits = as_bit_array(message)
    if bits.size != encoder.message_len:
        raise ContractViolation(
            f"message has {bits.size} bits but the encoder expects {encoder.message_len}"
        )
    x = image_to_tensor(cover)
    m = torch.from_numpy(bits.astype(np.float32)).unsqueeze(0)
    with _inference(encoder):
        out = encoder(x, m)
    return tensor_to_image(out)


def decode_message(decoder: WatermarkDecoder, image) -> SoftMessage:
    """Extract the soft message estimate from one image of any size >= 8 x 8."""
    x = image_to_tensor(image)
    with _inference(decoder):
        out = decoder(x)
    return SoftMessage(out.squeeze(0).numpy().astype(np.float64))


def discriminate(disc: Discriminator, image) -> float:
    """Realness logit for one image (inference mode, frozen norm state)."""
    x = image_to_tensor(image)
    with _inference(disc):
        out = disc(x)
    return float(out.item())


def make_message_batch(bits_2d: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.asarray(bits_2d).astype(np.float32))


def make_image_batch(images: np.ndarray) -> torch.Tensor:
    """(B, H, W, 3) float array in [0,1] -> BCHW float tensor."""
    arr = np.asarray(images, dtype=np.float32)
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()
