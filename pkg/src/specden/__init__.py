"""Spectral control for self-supervised paired-noisy-image denoising.

Frequency-band similarity (IPFS) tracking, frequency-selection routing of
neighbour sub-sampled pairs, spectral-norm clamping of convolution kernels,
and a spectral-separation low-rank reconstruction block, on a small
NumPy reverse-mode autodiff core.
"""
from .autodiff import NumericalError, ShapeError, Tape, Tensor, backward
from .config import ConfigError, ExperimentConfig, load_config
from .kernels import BACKEND
from .lipschitz import SpectralNormState, clamp_weights, per_frequency_gain, power_iterate, spectral_norm
from .metrics import psnr, ssim
from .model import FsdConfig, LipschitzConfig, ModelConfig, UNet, build_model
from .noise import NoiseModel, add_gaussian, add_poisson, apply_noise, sample_level
from .pairs import NoisePair, fsd_route, neighbor_pairs
from .spectrum import BandSet, IpfsRecord, band_filter, band_masks, band_similarity, dft2, hf_ratio, idft2, ipfs_curve
from .ssr import SSRBlock, SsrConfig, freq_split, project_reconstruct
from .train import Dataset, TrainConfig, denoise, train, train_step

__version__ = "0.1.0"
