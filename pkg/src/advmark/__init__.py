"""Robust image watermarking trained against a learned adversary.

The pipeline: a source message is expanded by a learned channel codec
into a redundant code, embedded into the cover image by a CNN, and
recovered by a CNN extractor followed by the channel decoder. Robustness
comes from two distortion-agnostic sources: an attack network trained in
alternation with the watermark networks, and the redundancy of the code.
"""

from .attacks import AttackSpec, adversarial_loss, attack_forward, build_attack, fgsm_attack
from .channel import (
    ChannelCoder,
    ChannelConfig,
    bsc_corrupt,
    channel_decode,
    channel_encode,
    load_channel,
    robustness_curve,
    save_channel,
    train_channel,
)
from .data import CoverDataset, DatasetSpec, IngestError, ingest
from .distortions import (
    DistortionSpec,
    ablation_suite,
    apply,
    jpeg_diff_gradcheck,
    known_suite,
    unknown_suite,
)
from .evaluation import EvalReport, PipelineModels, evaluate, render_report, truncated_average
from .metrics import bit_accuracy, psnr, rgb_to_yuv, rng_from_seed, yuv_to_rgb
from .networks import (
    Discriminator,
    WatermarkDecoder,
    WatermarkEncoder,
    decode_message,
    discriminate,
    encode_image,
)
from .pipeline import embed, extract
from .training import (
    TrainConfig,
    WatermarkModels,
    image_loss,
    message_loss,
    train,
    watermark_loss,
)
from .types import BitMessage, ContractViolation, SoftMessage

__version__ = "0.1.0"
