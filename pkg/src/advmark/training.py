"""Training losses and procedures for the watermark networks.

Four modes:

* ``identity``     - no distortion between embedder and extractor.
* ``specialized``  - one fixed distortion each step (JPEG swaps to its
                     differentiable variant).
* ``combined``     - per batch, one distortion sampled uniformly from a list.
* ``adversarial``  - alternating min-max: several attack-network updates
                     per step, then one update each of the extractor and
                     embedder against the attacker's final output.

All updates use Adam at one shared learning rate. Randomness (batch
selection, messages, distortion draws) flows through one seeded numpy
generator so runs are bit-reproducible.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .attacks import AttackNet, AttackSpec, adversarial_loss, build_attack
from .checkpoints import load_checkpoint, save_checkpoint
from .distortions import DistortionSpec, apply_batch, training_variant
from .metrics import rng_from_seed
from .networks import Discriminator, WatermarkDecoder, WatermarkEncoder, make_image_batch
from .types import ContractViolation

MODES = ("identity", "specialized", "combined", "adversarial")

# weight defaults: adversarial mode vs the explicit-distortion baselines
_ADV_WEIGHTS = {"alpha_image_l2": 18.0, "alpha_image_gan": 0.01, "alpha_message": 0.3}
_BASE_WEIGHTS = {"alpha_image_l2": 6.0, "alpha_image_gan": 0.01, "alpha_message": 1.0}


@dataclass
class TrainConfig:
    mode: str = "identity"
    message_len: int = 120
    max_steps: int = 10000
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    # loss weights; None resolves to the per-mode default
    alpha_image_l2: float | None = None
    alpha_image_gan: float | None = None
    alpha_message: float | None = None
    alpha_attack_image: float = 15.0
    alpha_attack_message: float = 1.0
    alpha_adv_message: float = 0.2
    # adversarial schedule
    num_iter: int = 5
    attack: AttackSpec = field(default_factory=AttackSpec)
    attack_warmup: int | None = None  # None -> 1000 on cold start, 0 with warm_start
    # distortion selection for the baselines
    distortion: str | None = None  # specialized mode, e.g. "jpeg:50"
    distortions: tuple[str, ...] | None = None  # combined mode
    warm_start: str | None = None
    checkpoint_every: int = 2000
    log_every: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractViolation(f"unknown training mode {self.mode!r}")
        if self.message_len <= 0 or self.max_steps <= 0 or self.batch_size <= 0:
            raise ContractViolation("message_len, max_steps and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ContractViolation("learning_rate must be positive")
        if self.num_iter <= 0:
            raise ContractViolation("num_iter must be positive")
        defaults = _ADV_WEIGHTS if self.mode == "adversarial" else _BASE_WEIGHTS
        for name, value in defaults.items():
            if getattr(self, name) is None:
                setattr(self, name, value)
        for name in (
            "alpha_image_l2",
            "alpha_image_gan",
            "alpha_message",
            "alpha_attack_image",
            "alpha_attack_message",
            "alpha_adv_message",
        ):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be non-negative")
        if isinstance(self.attack, dict):
            self.attack = AttackSpec(**self.attack)
        if self.mode == "adversarial" and self.attack.kind == "fgsm":
            raise ContractViolation("adversarial training drives a CNN attack, not fgsm")
        if self.mode == "specialized":
            if not self.distortion:
                raise ContractViolation("specialized mode needs a distortion spec")
            training_variant(DistortionSpec.parse(self.distortion))
        if self.mode == "combined":
            if not self.distortions:
                raise ContractViolation("combined mode needs a list of distortion specs")
            self.distortions = tuple(self.distortions)
            for text in self.distortions:
                training_variant(DistortionSpec.parse(text))
        if self.attack_warmup is None:
            self.attack_warmup = 0 if self.warm_start else 1000

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attack"] = asdict(self.attack)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("attack"), dict):
            attack = dict(d["attack"])
            if "widths" in attack:
                attack["widths"] = tuple(attack["widths"])
            d["attack"] = AttackSpec(**attack)
        if d.get("distortions") is not None:
            d["distortions"] = tuple(d["distortions"])
        return cls(**d)


# ---------------------------------------------------------------------------
# losses


def generator_gan_loss(disc: Discriminator, encoded: torch.Tensor) -> torch.Tensor:
    """Non-saturating logistic generator term; non-negative."""
    return F.softplus(-disc(encoded)).mean()


def discriminator_gan_loss(
    disc: Discriminator, real: torch.Tensor, fake: torch.Tensor
) -> torch.Tensor:
    return F.softplus(-disc(real)).mean() + F.softplus(disc(fake)).mean()


def image_loss(
    cover: torch.Tensor,
    encoded: torch.Tensor,
    disc: Discriminator,
    weight_l2: float,
    weight_gan: float,
) -> torch.Tensor:
    return weight_l2 * torch.mean((cover - encoded) ** 2) + weight_gan * generator_gan_loss(
        disc, encoded
    )


def message_loss(decoded: torch.Tensor, message: torch.Tensor, weight: float) -> torch.Tensor:
    if decoded.shape[-1] != message.shape[-1]:
        raise ContractViolation(
            f"length mismatch: decoded {decoded.shape[-1]} vs message {message.shape[-1]}"
        )
    return weight * torch.mean((decoded - message) ** 2)


def watermark_loss(
    image_term: torch.Tensor,
    message_term: torch.Tensor,
    adv_decoded: torch.Tensor,
    message: torch.Tensor,
    weight_adv: float,
) -> torch.Tensor:
    return image_term + message_term + weight_adv * torch.mean((adv_decoded - message) ** 2)


def param_digest(module: nn.Module) -> str:
    """Order-stable hash of all parameter values; detects any update."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        h.update(name.encode())
        h.update(p.detach().numpy().tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# model bundle


@dataclass
class WatermarkModels:
    encoder: WatermarkEncoder
    decoder: WatermarkDecoder
    discriminator: Discriminator
    attack: AttackNet | None = None

    @classmethod
    def build(cls, cfg: TrainConfig) -> "WatermarkModels":
        attack = build_attack(cfg.attack) if cfg.mode == "adversarial" else None
        return cls(
            encoder=WatermarkEncoder(cfg.message_len),
            decoder=WatermarkDecoder(cfg.message_len),
            discriminator=Discriminator(),
            attack=attack,
        )

    def trainable(self) -> dict[str, nn.Module]:
        mods = {
            "encoder": self.encoder,
            "decoder": self.decoder,
            "discriminator": self.discriminator,
        }
        if self.attack is not None:
            mods["attack"] = self.attack
        return mods


def _make_optimizers(models: WatermarkModels, lr: float) -> dict[str, torch.optim.Adam]:
    return {name: torch.optim.Adam(m.parameters(), lr=lr) for name, m in models.trainable().items()}


def _set_requires_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def _batch_psnr(cover: torch.Tensor, encoded: torch.Tensor, cap: float = 100.0) -> float:
    mse = torch.mean((cover - encoded) ** 2, dim=(1, 2, 3))
    vals = torch.where(
        mse > 0, 10.0 * torch.log10(1.0 / mse.clamp_min(1e-12)), torch.full_like(mse, cap)
    )
    return float(vals.clamp(max=cap).mean())


def _bit_acc(decoded: torch.Tensor, message: torch.Tensor) -> float:
    return float(((decoded >= 0.5) == (message >= 0.5)).float().mean())


# ---------------------------------------------------------------------------
# steps


def _update_discriminator(models, opts, cover, encoded) -> float:
    opts["discriminator"].zero_grad()
    loss = discriminator_gan_loss(models.discriminator, cover, encoded.detach())
    loss.backward()
    opts["discriminator"].step()
    return float(loss.detach())


def train_step_baseline(
    models: WatermarkModels,
    opts: dict,
    cover: torch.Tensor,
    message: torch.Tensor,
    spec: DistortionSpec,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> dict:
    """One joint update of embedder + extractor through a fixed distortion."""
    for name in ("encoder", "decoder"):
        opts[name].zero_grad()
    encoded = models.encoder(cover, message)
    distorted = apply_batch(spec, encoded, cover, rng)
    decoded = models.decoder(distorted)
    l_img = image_loss(cover, encoded, models.discriminator, cfg.alpha_image_l2, cfg.alpha_image_gan)
    l_msg = message_loss(decoded, message, cfg.alpha_message)
    total = l_img + l_msg
    total.backward()
    opts["decoder"].step()
    opts["encoder"].step()
    d_loss = _update_discriminator(models, opts, cover, encoded)
    return {
        "loss": float(total.detach()),
        "loss_image": float(l_img.detach()),
        "loss_message": float(l_msg.detach()),
        "loss_disc": d_loss,
        "bit_acc": _bit_acc(decoded.detach(), message),
        "psnr": _batch_psnr(cover, encoded.detach()),
        "distortion": spec.key,
        "attack_updates": 0,
    }


def train_step_adversarial(
    models: WatermarkModels,
    opts: dict,
    cover: torch.Tensor,
    message: torch.Tensor,
    cfg: TrainConfig,
) -> dict:
    """One alternating step: ``num_iter`` attack updates, then the watermark update.

    The encoded image is computed once; the attack trains against it with
    the embedder/extractor frozen. Afterwards the adversarial image is
    recomputed once with the final attack state for the watermark loss.
    """
    attack = models.attack
    # --- inner loop: attacker only; extractor frozen, inference-mode stats
    with torch.no_grad():
        encoded_fixed = models.encoder(cover, message)
    models.decoder.eval()
    _set_requires_grad(models.decoder, False)
    attack_losses = []
    with torch.no_grad():
        adv0 = attack(encoded_fixed).clamp(0.0, 1.0)
        adv_mse_pre = float(torch.mean((models.decoder(adv0) - message) ** 2))
    for _ in range(cfg.num_iter):
        opts["attack"].zero_grad()
        adv = attack(encoded_fixed).clamp(0.0, 1.0)
        decoded_adv = models.decoder(adv)
        l_adv = adversarial_loss(
            adv, encoded_fixed, decoded_adv, message,
            cfg.alpha_attack_image, cfg.alpha_attack_message,
        )
        l_adv.backward()
        opts["attack"].step()
        attack_losses.append(float(l_adv.detach()))
    with torch.no_grad():
        adv1 = attack(encoded_fixed).clamp(0.0, 1.0)
        adv_mse_post = float(torch.mean((models.decoder(adv1) - message) ** 2))
    _set_requires_grad(models.decoder, True)
    models.decoder.train()

    # --- watermark update against the final attack state
    _set_requires_grad(attack, False)
    for name in ("encoder", "decoder"):
        opts[name].zero_grad()
    encoded = models.encoder(cover, message)
    decoded = models.decoder(encoded)
    adv_image = attack(encoded).clamp(0.0, 1.0)
    decoded_adv = models.decoder(adv_image)
    l_img = image_loss(cover, encoded, models.discriminator, cfg.alpha_image_l2, cfg.alpha_image_gan)
    l_msg = message_loss(decoded, message, cfg.alpha_message)
    total = watermark_loss(l_img, l_msg, decoded_adv, message, cfg.alpha_adv_message)
    total.backward()
    opts["decoder"].step()
    opts["encoder"].step()
    _set_requires_grad(attack, True)
    d_loss = _update_discriminator(models, opts, cover, encoded)
    return {
        "loss": float(total.detach()),
        "loss_image": float(l_img.detach()),
        "loss_message": float(l_msg.detach()),
        "loss_disc": d_loss,
        "attack_losses": attack_losses,
        "adv_msg_mse_pre": adv_mse_pre,
        "adv_msg_mse_post": adv_mse_post,
        "bit_acc": _bit_acc(decoded.detach(), message),
        "adv_bit_acc": _bit_acc(decoded_adv.detach(), message),
        "psnr": _batch_psnr(cover, encoded.detach()),
        "distortion": "adversarial",
        "attack_updates": cfg.num_iter,
    }


# ---------------------------------------------------------------------------
# full runs


@dataclass
class TrainResult:
    models: WatermarkModels
    history: list[dict]
    out_dir: Path | None


def _dataset_array(dataset) -> np.ndarray:
    if hasattr(dataset, "train"):
        arr = np.asarray(dataset.train, dtype=np.float32)
    else:
        arr = np.asarray(dataset, dtype=np.float32)
    if arr.ndim != 4 or arr.shape[-1] != 3 or arr.shape[0] == 0:
        raise ContractViolation(
            f"dataset must be a non-empty (N, H, W, 3) stack, got shape {arr.shape}"
        )
    return arr


def save_models(models: WatermarkModels, out_dir, cfg: TrainConfig, step: int) -> None:
    out_dir = Path(out_dir)
    meta = {"step": step, "mode": cfg.mode, "seed": cfg.seed}
    save_checkpoint(
        out_dir / "encoder.pt", "watermark_encoder", models.encoder.state_dict(),
        arch={"message_len": models.encoder.message_len, "width": models.encoder.width},
        meta=meta,
    )
    save_checkpoint(
        out_dir / "decoder.pt", "watermark_decoder", models.decoder.state_dict(),
        arch={"message_len": models.decoder.message_len, "width": models.decoder.width},
        meta=meta,
    )
    save_checkpoint(
        out_dir / "discriminator.pt", "discriminator", models.discriminator.state_dict(),
        arch={"width": models.discriminator.width, "blocks": models.discriminator.blocks},
        meta=meta,
    )
    if models.attack is not None:
        save_checkpoint(
            out_dir / "attack.pt", "attack", models.attack.state_dict(),
            arch={"spec": asdict(models.attack.spec)}, meta=meta,
        )


def load_encoder(path) -> tuple[WatermarkEncoder, dict]:
    payload = load_checkpoint(path, expected_kind="watermark_encoder")
    enc = WatermarkEncoder(**payload["arch"])
    enc.load_state_dict(payload["state_dict"])
    enc.eval()
    return enc, payload["meta"]


def load_decoder(path) -> tuple[WatermarkDecoder, dict]:
    payload = load_checkpoint(path, expected_kind="watermark_decoder")
    dec = WatermarkDecoder(**payload["arch"])
    dec.load_state_dict(payload["state_dict"])
    dec.eval()
    return dec, payload["meta"]


def _load_warm_start(models: WatermarkModels, cfg: TrainConfig) -> None:
    root = Path(cfg.warm_start)
    enc_path = root / "encoder.pt" if root.is_dir() else root
    if root.is_dir():
        dec_path = root / "decoder.pt"
        disc_path = root / "discriminator.pt"
    else:
        raise ContractViolation(
            f"warm_start must point at a checkpoint directory, got {cfg.warm_start}"
        )
    enc_payload = load_checkpoint(enc_path, expected_kind="watermark_encoder")
    if enc_payload["arch"]["message_len"] != cfg.message_len:
        raise ContractViolation(
            f"warm-start checkpoint carries message_len "
            f"{enc_payload['arch']['message_len']} but the config asks for {cfg.message_len}"
        )
    models.encoder.load_state_dict(enc_payload["state_dict"])
    dec_payload = load_checkpoint(dec_path, expected_kind="watermark_decoder")
    models.decoder.load_state_dict(dec_payload["state_dict"])
    if disc_path.exists():
        disc_payload = load_checkpoint(disc_path, expected_kind="discriminator")
        models.discriminator.load_state_dict(disc_payload["state_dict"])


def train(cfg: TrainConfig, dataset, out_dir=None, rng=None) -> TrainResult:
    """Run one training job; returns models plus the per-step metric log.

    With ``out_dir`` set, writes ``config.json``, rolling checkpoints and a
    line-delimited JSON log. Identical configs and seeds reproduce the
    same losses step for step.
    """
    images = _dataset_array(dataset)
    rng = rng_from_seed(cfg.seed if rng is None else rng)
    torch.manual_seed(int(rng.integers(2**31 - 1)))
    models = WatermarkModels.build(cfg)
    if cfg.warm_start:
        _load_warm_start(models, cfg)
    opts = _make_optimizers(models, cfg.learning_rate)
    for m in models.trainable().values():
        m.train()

    log_fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
        log_fh = (out_dir / "log.jsonl").open("w")

    if cfg.mode == "specialized":
        step_specs = [training_variant(DistortionSpec.parse(cfg.distortion))]
    elif cfg.mode == "combined":
        step_specs = [training_variant(DistortionSpec.parse(s)) for s in cfg.distortions]
    else:
        step_specs = [DistortionSpec("identity", 0.0)]

    history: list[dict] = []
    n = images.shape[0]
    started = time.time()
    try:
        for step in range(1, cfg.max_steps + 1):
            idx = rng.integers(0, n, size=cfg.batch_size)
            cover = make_image_batch(images[idx])
            message = torch.from_numpy(
                rng.integers(0, 2, size=(cfg.batch_size, cfg.message_len)).astype(np.float32)
            )
            if cfg.mode == "adversarial" and step > cfg.attack_warmup:
                record = train_step_adversarial(models, opts, cover, message, cfg)
            else:
                spec = step_specs[int(rng.integers(0, len(step_specs)))]
                record = train_step_baseline(models, opts, cover, message, spec, cfg, rng)
            record["step"] = step
            if step % cfg.log_every == 0 or step == cfg.max_steps:
                record["elapsed"] = round(time.time() - started, 3)
                history.append(record)
                if log_fh is not None:
                    log_fh.write(json.dumps(record) + "\n")
                    log_fh.flush()
            if out_dir is not None and (
                step % cfg.checkpoint_every == 0 or step == cfg.max_steps
            ):
                save_models(models, out_dir, cfg, step)
    finally:
        if log_fh is not None:
            log_fh.close()
    for m in models.trainable().values():
        m.eval()
    return TrainResult(models=models, history=history, out_dir=out_dir)
