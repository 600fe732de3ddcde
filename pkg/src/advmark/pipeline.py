"""End-to-end embed and extract through the channel codec and image networks."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .channel import ChannelCoder, channel_decode, channel_encode
from .networks import WatermarkDecoder, WatermarkEncoder, decode_message, encode_image
from .types import BitMessage, ContractViolation


def read_image(path) -> np.ndarray:
    path = Path(path)
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def write_png(image: np.ndarray, path) -> np.ndarray:
    """Quantize to 8 bits and write losslessly; returns the stored image."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    quantized = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quantized).save(path, format="PNG")
    return quantized.astype(np.float64) / 255.0


def check_compatible(channel: ChannelCoder, message_len: int, role: str) -> None:
    if channel.code_len != message_len:
        raise ContractViolation(
            f"channel codec emits {channel.code_len}-bit codes but the {role} "
            f"expects {message_len}-bit messages"
        )


def embed(
    channel: ChannelCoder,
    encoder: WatermarkEncoder,
    image_path,
    message: BitMessage,
    out_path,
) -> np.ndarray:
    """Encode message -> redundant code -> image; write a lossless PNG.

    Returns the image as stored (8-bit quantized), which is exactly what a
    later extract call will see.
    """
    check_compatible(channel, encoder.message_len, "encoder")
    if len(message) != channel.source_len:
        raise ContractViolation(
            f"message has {len(message)} bits but the codec takes {channel.source_len}"
        )
    cover = read_image(image_path)
    code = channel_encode(channel, message)
    encoded = encode_image(encoder, cover, code)
    return write_png(encoded, out_path)


def extract(channel: ChannelCoder, decoder: WatermarkDecoder, image_path) -> BitMessage:
    """Recover the source message from an image (soft code -> channel decode)."""
    check_compatible(channel, decoder.message_len, "decoder")
    img = read_image(image_path)
    soft = decode_message(decoder, img)
    return channel_decode(channel, soft)
