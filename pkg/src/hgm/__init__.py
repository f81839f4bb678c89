"""High-dimensional assisted score-based restoration of color images."""

from hgm.core import NoiseSchedule, make_noise_schedule, perturb, step_size
from hgm.degradation import (
    DegradationOp,
    apply,
    bayer_mask,
    block_mask,
    data_fidelity_update,
    load_mask,
    random_mask,
)
from hgm.metrics import MetricReport, psnr, ssim
from hgm.transforms import Transform, h_forward, h_inverse

__version__ = "0.1.0"

__all__ = [
    "DegradationOp",
    "MetricReport",
    "NoiseSchedule",
    "Transform",
    "apply",
    "bayer_mask",
    "block_mask",
    "data_fidelity_update",
    "h_forward",
    "h_inverse",
    "load_mask",
    "make_noise_schedule",
    "perturb",
    "psnr",
    "random_mask",
    "ssim",
    "step_size",
]
