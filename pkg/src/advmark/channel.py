"""Learned joint source/channel codec hardened against random bit flips.

A small MLP encoder expands a D-bit message into an N-bit redundant code;
a matching decoder recovers the source bits after the code has been
corrupted. Both are trained end-to-end against simulated bit-flip noise
whose strength varies per batch, so the decoder needs no noise estimate
at inference time. Trained standalone; never jointly with the image
networks.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .metrics import rng_from_seed
from .types import BitMessage, ContractViolation, SoftMessage, as_bit_array, as_soft_array


@dataclass
class ChannelConfig:
    source_len: int = 30
    code_len: int = 120
    hidden_widths: tuple[int, ...] = (512, 512)
    train_noise_max: float = 0.3
    train_steps: int = 5000
    batch_size: int = 256
    learning_rate: float = 1e-3

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if self.source_len <= 0:
            raise ContractViolation(f"source_len must be positive, got {self.source_len}")
        if self.code_len <= self.source_len:
            raise ContractViolation(
                f"code_len ({self.code_len}) must exceed source_len ({self.source_len})"
            )
        if not 0.0 <= self.train_noise_max <= 0.5:
            raise ContractViolation(
                f"train_noise_max must lie in [0, 0.5], got {self.train_noise_max}"
            )
        if self.train_steps <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ContractViolation("train_steps, batch_size and learning_rate must be positive")


def _mlp(in_dim: int, hidden: tuple[int, ...], out_dim: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    prev = in_dim
    for width in hidden:
        layers += [nn.Linear(prev, width), nn.ReLU()]
        prev = width
    layers.append(nn.Linear(prev, out_dim))
    return nn.Sequential(*layers)


class ChannelCoder(nn.Module):
    """Encoder (D -> N logits) and decoder (N -> D logits) MLP pair."""

    def __init__(self, config: ChannelConfig):
        super().__init__()
        self.config = config
        self.encoder = _mlp(config.source_len, config.hidden_widths, config.code_len)
        self.decoder = _mlp(config.code_len, config.hidden_widths, config.source_len)

    @property
    def source_len(self) -> int:
        return self.config.source_len

    @property
    def code_len(self) -> int:
        return self.config.code_len


def bsc_corrupt(msg, p: float, rng: np.random.Generator):
    """Flip each bit independently with probability ``p``.

    Accepts a BitMessage or a 0/1 array; returns the same kind.
    """
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"flip probability must lie in [0, 1], got {p}")
    bits = as_bit_array(msg)
    flips = (rng.random(bits.shape) < p).astype(np.uint8)
    out = bits ^ flips
    if isinstance(msg, BitMessage):
        return BitMessage(out)
    return out


def encode_bits(model: ChannelCoder, bits_2d: np.ndarray) -> np.ndarray:
    """Batched hard encode: (T, D) 0/1 array -> (T, N) 0/1 array."""
    model.eval()
    with torch.no_grad():
        logits = model.encoder(torch.from_numpy(bits_2d.astype(np.float32)))
    # sigmoid(logit) >= 0.5 iff logit >= 0; ties round to 1
    return (logits.numpy() >= 0.0).astype(np.uint8)


def decode_soft(model: ChannelCoder, values_2d: np.ndarray) -> np.ndarray:
    """Batched decode of soft or hard codes: (T, N) floats -> (T, D) 0/1 array."""
    model.eval()
    with torch.no_grad():
        logits = model.decoder(torch.from_numpy(values_2d.astype(np.float32)))
    return (logits.numpy() >= 0.0).astype(np.uint8)


def channel_encode(model: ChannelCoder, msg) -> BitMessage:
    """Encode a D-bit message into its N-bit redundant code (deterministic)."""
    bits = as_bit_array(msg)
    if bits.size != model.source_len:
        raise ContractViolation(
            f"message has {bits.size} bits but the codec expects {model.source_len}"
        )
    return BitMessage(encode_bits(model, bits[None, :])[0])


def channel_decode(model: ChannelCoder, noisy) -> BitMessage:
    """Recover the D source bits from a hard or soft N-length code."""
    values = as_soft_array(noisy)
    if values.size != model.code_len:
        raise ContractViolation(
            f"code has {values.size} values but the codec expects {model.code_len}"
        )
    return BitMessage(decode_soft(model, values[None, :])[0])


def train_channel(cfg: ChannelConfig, rng=None) -> ChannelCoder:
    """Train the codec on random messages under variable-strength flip noise.

    Code bits are sampled from the encoder's Bernoulli probabilities with a
    straight-through gradient; per batch, one flip probability is drawn
    uniformly from [0, train_noise_max] and applied i.i.d. per bit. The
    objective is per-bit binary cross-entropy on the reconstruction.
    """
    rng = rng_from_seed(rng)
    torch.manual_seed(int(rng.integers(2**31 - 1)))
    model = ChannelCoder(cfg)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    bce = nn.BCEWithLogitsLoss()
    for _ in range(cfg.train_steps):
        bits = rng.integers(0, 2, size=(cfg.batch_size, cfg.source_len))
        x = torch.from_numpy(bits.astype(np.float32))
        probs = torch.sigmoid(model.encoder(x))
        sample = torch.from_numpy(
            (rng.random(probs.shape) < probs.detach().numpy()).astype(np.float32)
        )
        code = sample + probs - probs.detach()  # straight-through binarization
        p = rng.uniform(0.0, cfg.train_noise_max) if cfg.train_noise_max > 0 else 0.0
        flips = torch.from_numpy((rng.random(probs.shape) < p).astype(np.float32))
        noisy = code + flips - 2.0 * code * flips  # differentiable XOR with a constant mask
        loss = bce(model.decoder(noisy), x)
        opt.zero_grad()
        loss.backward()
        opt.step()
    model.eval()
    return model


def robustness_curve(
    model: ChannelCoder, noise_grid, trials: int, rng: np.random.Generator
) -> list[tuple[float, float]]:
    """Mean source-bit accuracy of encode -> corrupt -> decode per noise level."""
    grid = [float(p) for p in noise_grid]
    if not grid:
        raise ContractViolation("noise grid must be non-empty")
    if any(p < 0.0 or p > 0.5 for p in grid):
        raise ContractViolation("noise grid values must lie in [0, 0.5]")
    if trials <= 0:
        raise ContractViolation(f"trials must be positive, got {trials}")
    bits = rng.integers(0, 2, size=(trials, model.source_len)).astype(np.uint8)
    codes = encode_bits(model, bits)
    points = []
    for p in grid:
        flips = (rng.random(codes.shape) < p).astype(np.uint8)
        decoded = decode_soft(model, (codes ^ flips).astype(np.float32))
        points.append((p, float(np.mean(decoded == bits))))
    return points


def write_curve_csv(points, path, model: ChannelCoder, trials: int) -> None:
    """Persist a robustness curve as CSV: noise,accuracy,trials,N,D."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["noise", "accuracy", "trials", "N", "D"])
        for p, acc in points:
            writer.writerow([p, acc, trials, model.code_len, model.source_len])


def save_channel(model: ChannelCoder, path) -> None:
    from .checkpoints import save_checkpoint

    save_checkpoint(
        path,
        kind="channel_codec",
        state_dict=model.state_dict(),
        arch={"config": asdict(model.config)},
    )


def load_channel(path) -> ChannelCoder:
    from .checkpoints import load_checkpoint

    payload = load_checkpoint(path, expected_kind="channel_codec")
    cfg_dict = dict(payload["arch"]["config"])
    cfg_dict["hidden_widths"] = tuple(cfg_dict["hidden_widths"])
    model = ChannelCoder(ChannelConfig(**cfg_dict))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
