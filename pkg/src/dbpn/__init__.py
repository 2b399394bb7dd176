"""Deep back-projection super-resolution on a small numpy autodiff engine."""

from .imaging import ImagePlane, load_image, save_image
from .ibp import IbpConfig, ibp_run
from .metrics import EvalProtocol, psnr, ssim
from .network import NetworkConfig, build, count_params, describe, preset
from .tensor import Tensor, no_grad
from .training import TrainConfig, train

__all__ = [
    "EvalProtocol",
    "IbpConfig",
    "ImagePlane",
    "NetworkConfig",
    "Tensor",
    "TrainConfig",
    "build",
    "count_params",
    "describe",
    "ibp_run",
    "load_image",
    "no_grad",
    "preset",
    "psnr",
    "save_image",
    "ssim",
    "train",
]

__version__ = "0.1.0"
