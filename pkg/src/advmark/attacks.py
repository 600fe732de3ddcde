"""Attack networks trained to break the watermark, plus a gradient-sign baseline.

The default attacker is a two-layer CNN applied to the encoded image.
Variants: ``residual`` adds a skip connection from the input, ``capped``
bounds the per-pixel change by epsilon via a tanh gate, and ``fgsm`` is a
single signed-gradient step (not a network; handled by fgsm_attack).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .types import ContractViolation, as_bit_array

ATTACK_KINDS = ("conv", "residual", "capped", "fgsm")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "conv"
    widths: tuple[int, ...] = (3, 16)
    epsilon: float | None = None
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.kind not in ATTACK_KINDS:
            raise ContractViolation(f"unknown attack kind {self.kind!r}")
        needs_eps = self.kind in ("capped", "fgsm")
        if needs_eps and (self.epsilon is None or self.epsilon <= 0):
            raise ContractViolation(f"{self.kind} attack requires a positive epsilon")
        if not needs_eps and self.epsilon is not None:
            raise ContractViolation(f"{self.kind} attack takes no epsilon")
        if self.kind != "fgsm":
            if len(self.widths) < 2:
                raise ContractViolation("attack widths need at least an output and one hidden width")
            if self.widths[0] != 3:
                raise ContractViolation(
                    f"attack output width must be 3 channels, got {self.widths[0]}"
                )

    def key(self) -> str:
        if self.kind == "fgsm":
            return f"fgsm({self.epsilon:g})"
        if self.kind == "capped":
            return f"capped({self.epsilon:g})"
        return f"{self.kind}({','.join(str(w) for w in self.widths)})"


class AttackNet(nn.Module):
    """CNN attacker; ``forward`` returns the pre-clip adversarial image.

    widths follow composition order, e.g. (3, 16) means
    Conv_3 o LeakyReLU o Conv_16: a hidden conv to 16 channels, then an
    output conv to 3.
    """

    def __init__(self, spec: AttackSpec):
        super().__init__()
        if spec.kind == "fgsm":
            raise ContractViolation("fgsm is not a network; use fgsm_attack")
        self.spec = spec
        channels = list(reversed(spec.widths[1:])) + [spec.widths[0]]
        layers: list[nn.Module] = []
        cin = 3
        for i, cout in enumerate(channels):
            if i > 0:
                layers.append(nn.LeakyReLU(spec.leaky_slope))
            layers.append(nn.Conv2d(cin, cout, 3, padding=1))
            cin = cout
        self.cnn = nn.Sequential(*layers)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        out = self.cnn(image)
        if self.spec.kind == "residual":
            return image + out
        if self.spec.kind == "capped":
            return image + self.spec.epsilon * torch.tanh(out)
        return out


def build_attack(spec: AttackSpec) -> AttackNet:
    return AttackNet(spec)


def attack_forward(net: AttackNet, image: torch.Tensor) -> torch.Tensor:
    """Adversarial image, clipped to the valid pixel range."""
    return net(image).clamp(0.0, 1.0)


def fgsm_attack(decoder: nn.Module, image: torch.Tensor, message, epsilon: float) -> torch.Tensor:
    """One signed-gradient ascent step on the message loss, then clip.

    ``image`` is BCHW; ``message`` is a bit vector or (B, L) array.
    """
    if epsilon < 0:
        raise ContractViolation(f"epsilon must be non-negative, got {epsilon}")
    bits = np.asarray(message)
    if bits.ndim == 1 or isinstance(message, (list, tuple)):
        bits = as_bit_array(message)[None, :]
    target = torch.from_numpy(bits.astype(np.float32))
    was_training = decoder.training
    decoder.eval()
    x = image.detach().clone().requires_grad_(True)
    loss = torch.mean((decoder(x) - target) ** 2)
    (grad,) = torch.autograd.grad(loss, x)
    decoder.train(was_training)
    return (image.detach() + epsilon * torch.sign(grad)).clamp(0.0, 1.0)


def adversarial_loss(
    adv_image: torch.Tensor,
    encoded_image: torch.Tensor,
    adv_decoded: torch.Tensor,
    message: torch.Tensor,
    weight_image: float,
    weight_message: float,
) -> torch.Tensor:
    """Attacker objective: stay close to the encoded image, corrupt the message.

    weight_image * mean((I_adv - I_en)^2) - weight_message * mean((X'_adv - X')^2)
    """
    image_term = torch.mean((adv_image - encoded_image) ** 2)
    message_term = torch.mean((adv_decoded - message) ** 2)
    return weight_image * image_term - weight_message * message_term
