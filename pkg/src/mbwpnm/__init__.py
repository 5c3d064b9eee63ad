"""Multi-band weighted l_p norm minimization for color and multispectral denoising."""

from importlib import resources

from .imaging import add_awgn, load, save
from .lowrank import WhiteningMatrix, objective, solve, svd_thin
from .pipeline import DenoiseConfig, NoiseProfile, denoise, estimate_noise, rms_sigma
from .quality import QualityReport, ergas, evaluate, psnr, sam, ssim
from .shrinkage import ShrinkageSpec, gst, gst_threshold, make_weights

__version__ = "0.1.0"


def sample_images():
    """Paths of the bundled 128x128 RGB test crops, sorted by name."""
    root = resources.files(__name__) / "data"
    return sorted(str(p) for p in root.iterdir() if p.name.endswith(".png"))
