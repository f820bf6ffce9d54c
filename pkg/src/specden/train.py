"""Self-supervised training on neighbour sub-sampled pairs.

One epoch regenerates a sub-image pair per training image (seeded by
``(seed, epoch, image)``), optionally routes it with the frequency-selection
decision, cuts both sub-images into non-overlapping patches and runs Adam
steps on ``mse(model(input), target)``. With Lipschitz control enabled,
every convolution kernel is re-estimated by one warm-started power iteration
and clamped after each optimizer step, and re-projected with a converged
estimate at the end of each epoch.

A fixed probe (the epoch-0 pairs of the first ``probe_count`` images) is
evaluated after every epoch; IPFS curves compare its output with the noisy
target sub-image and with the 2x2 cell mean of the clean image (sampling the
clean image at the random target positions would add jitter at every
frequency).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Module
from .lipschitz import SpectralNormState, clamp_weights, power_iterate, reshape_kernel
from .metrics import psnr, ssim
from .model import ModelConfig, UNet, build_model
from .noise import NoiseModel, apply_noise, derive_seed, rng
from .pairs import NoisePair, fsd_route, gather_cells, neighbor_indices, plain_pair
from .spectrum import IpfsRecord, band_masks, band_similarities

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Non-finite loss or parameters; the message carries diagnostics."""


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    patch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    ipfs_every: int = 1
    bands: int = 5
    probe_count: int = 2

    def __post_init__(self):
        for name in ("epochs", "batch_size", "patch_size", "ipfs_every", "bands", "probe_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"train.{name} must be >= 1")
        if self.lr <= 0:
            raise ValueError("train.lr must be > 0")


@dataclass
class Dataset:
    """Clean images (kept only for probe evaluation) and their fixed noisy copies.

    Images are stored as ``(C, H, W)`` arrays.
    """

    clean: list[np.ndarray]
    noisy: list[np.ndarray]

    @classmethod
    def synthesize(cls, images: Sequence[np.ndarray], noise: NoiseModel) -> "Dataset":
        clean = [_chw(im) for im in images]
        noisy = [apply_noise(noise, im, derive_seed(noise.seed, i)) for i, im in enumerate(clean)]
        return cls(clean, noisy)

    def __len__(self) -> int:
        return len(self.noisy)


def _chw(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[None]
    if img.ndim != 3:
        raise DataError(f"images must be (H, W) or (C, H, W), got {img.shape}")
    return img


def _batch(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[None, None]
    if img.ndim == 3:
        return img[None]
    return img


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


class LipschitzControl:
    """Per-layer power-iteration state plus the clamp policy."""

    def __init__(self, model: Module, beta: float = 1.0, iters: int = 1, verify_iters: int = 50,
                 seed: int = 0):
        self.layers = model.conv_layers()
        self.iters = iters
        self.verify_iters = verify_iters
        self.states = {
            layer.name: SpectralNormState.init(layer.name, layer.weight.shape, beta, derive_seed(seed, 7, j))
            for j, layer in enumerate(self.layers)
        }

    def _apply(self, iters: int) -> int:
        hits = 0
        for layer in self.layers:
            st = self.states[layer.name]
            power_iterate(st, reshape_kernel(layer.weight.data), iters)
            w, hit = clamp_weights(layer.weight.data, st)
            if hit:
                layer.weight.data = w
                st.last_estimate = st.beta
                hits += 1
        return hits

    def step(self) -> int:
        return self._apply(self.iters)

    def project(self) -> int:
        return self._apply(self.verify_iters)

    def estimates(self) -> dict[str, float]:
        return {name: st.last_estimate for name, st in self.states.items()}


@dataclass
class TrainState:
    model: Module
    opt: Adam
    lipschitz: Optional[LipschitzControl] = None
    epoch: int = 0


def _diagnostics(state: TrainState) -> str:
    norms = ", ".join(f"{layer.name}={np.linalg.norm(layer.weight.data):.3g}"
                      for layer in state.model.conv_layers())
    return f"lr={state.opt.lr:g}; weight norms: {norms}"


def train_step(state: TrainState, pair: NoisePair) -> tuple[float, int]:
    """One Adam step on ``mse(model(input), target)``; returns (loss, clamp hits)."""
    model = state.model
    x = Tensor(_batch(pair.input_img))
    y = _batch(pair.target_img)
    if x.shape != y.shape:
        raise ad.ShapeError(f"pair shapes differ: {x.shape} vs {y.shape}")
    model.zero_grad()
    with ad.Tape() as tape:
        loss = ad.mse(model(x), y)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value}; {_diagnostics(state)}")
        tape.backward(loss)
    state.opt.step()
    hits = state.lipschitz.step() if state.lipschitz is not None else 0
    return value, hits


def make_pair(noisy: np.ndarray, seed: int, cfg: ModelConfig) -> tuple[NoisePair, np.ndarray]:
    """Pair for one image plus the cell positions of its target sub-image."""
    p1, p2 = neighbor_indices(*noisy.shape[-2:], seed)
    sub1, sub2 = gather_cells(noisy, p1), gather_cells(noisy, p2)
    if cfg.fsd.enabled:
        pair = fsd_route(sub1, sub2, cfg.fsd.cutoff)
    else:
        pair = plain_pair(sub1, sub2, cfg.fsd.cutoff)
    return pair, (p1 if pair.swapped else p2)


def cell_mean(img: np.ndarray) -> np.ndarray:
    """2x2 cell average: the jitter-free clean counterpart of a sub-image."""
    c, h, w = img.shape
    return img.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def _patches(img: np.ndarray, size: int) -> list[np.ndarray]:
    h, w = img.shape[-2:]
    return [img[:, i:i + size, j:j + size]
            for i in range(0, h - size + 1, size) for j in range(0, w - size + 1, size)]


@dataclass
class Probe:
    inputs: np.ndarray  # (P, C, h, w)
    noisy_targets: np.ndarray
    clean_targets: np.ndarray

    def outputs(self, model: Module) -> np.ndarray:
        return model(Tensor(self.inputs)).data


def make_probe(data: Dataset, cfg: ModelConfig, tcfg: TrainConfig) -> Probe:
    ins, nos, gts = [], [], []
    for i in range(min(tcfg.probe_count, len(data))):
        pair, _ = make_pair(data.noisy[i], derive_seed(tcfg.seed, 0, 0, i), cfg)
        ins.append(pair.input_img)
        nos.append(pair.target_img)
        gts.append(cell_mean(data.clean[i]))
    return Probe(np.stack(ins), np.stack(nos), np.stack(gts))


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    psnr_probe: float
    ssim_probe: float
    clamp_hits: int


@dataclass
class RoutingRecord:
    image_id: int
    epoch: int
    swapped: bool
    hf_input: float
    hf_target: float


@dataclass
class TrainResult:
    state: TrainState
    probe: Probe
    ipfs: list[IpfsRecord] = field(default_factory=list)
    metrics: list[EpochMetrics] = field(default_factory=list)
    routing: list[RoutingRecord] = field(default_factory=list)
    sigmas: list[tuple[int, str, float]] = field(default_factory=list)
    probe_outputs: list[tuple[int, np.ndarray]] = field(default_factory=list)

    @property
    def model(self) -> Module:
        return self.state.model


def probe_scores(outputs: np.ndarray, clean: np.ndarray) -> tuple[float, float]:
    out = np.clip(outputs, 0.0, 1.0)
    clean = np.clip(clean, 0.0, 1.0)
    p = float(np.mean([psnr(o, c) for o, c in zip(out, clean)]))
    s = float(np.mean([ssim(o, c) for o, c in zip(out, clean)]))
    return p, s


def init_state(cfg: ModelConfig, tcfg: TrainConfig) -> TrainState:
    model = build_model(cfg)
    opt = Adam(model.parameters(), tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
    lip = None
    if cfg.lipschitz.enabled:
        lip = LipschitzControl(model, cfg.lipschitz.beta, cfg.lipschitz.iters,
                               cfg.lipschitz.verify_iters, tcfg.seed)
    return TrainState(model, opt, lip, 0)


def train(data: Dataset, cfg: ModelConfig, tcfg: TrainConfig, state: Optional[TrainState] = None,
          epochs: Optional[int] = None, on_epoch: Optional[Callable[[TrainResult], None]] = None
          ) -> TrainResult:
    """Train from scratch, or continue ``state`` (e.g. a loaded checkpoint).

    ``epochs`` overrides ``tcfg.epochs`` as the final epoch number.
    """
    if len(data) == 0:
        raise DataError("empty dataset")
    mult = cfg.multiple
    for i, im in enumerate(data.noisy):
        h, w = im.shape[-2:]
        if h % 2 or w % 2 or h // 2 < tcfg.patch_size or w // 2 < tcfg.patch_size:
            raise DataError(f"image {i} is {h}x{w}; sub-images must be even-sized and at least "
                            f"{tcfg.patch_size}x{tcfg.patch_size}")
        if im.shape[0] != cfg.in_channels:
            raise DataError(f"image {i} has {im.shape[0]} channels, model expects {cfg.in_channels}")
    if tcfg.patch_size % mult:
        raise DataError(f"patch_size {tcfg.patch_size} must be divisible by {mult}")
    if state is None:
        state = init_state(cfg, tcfg)
    last = tcfg.epochs if epochs is None else epochs
    probe = make_probe(data, cfg, tcfg)
    bands = band_masks(*probe.inputs.shape[-2:], tcfg.bands)
    result = TrainResult(state, probe)

    def record(epoch: int) -> np.ndarray:
        out = probe.outputs(state.model)
        if epoch % tcfg.ipfs_every == 0:
            result.probe_outputs.append((epoch, out))
            for kind, targets in (("noisy", probe.noisy_targets), ("ground_truth", probe.clean_targets)):
                sims = np.mean([band_similarities(o, t, bands) for o, t in zip(out, targets)], axis=0)
                result.ipfs.append(IpfsRecord(epoch, kind, tuple(float(s) for s in sims)))
        return out

    if state.epoch == 0:
        record(0)
    model = state.model
    for epoch in range(state.epoch + 1, last + 1):
        inputs, targets = [], []
        for i, noisy in enumerate(data.noisy):
            pair, _ = make_pair(noisy, derive_seed(tcfg.seed, 0, epoch, i), cfg)
            result.routing.append(RoutingRecord(i, epoch, pair.swapped, pair.hf_input, pair.hf_target))
            inputs.extend(_patches(pair.input_img, tcfg.patch_size))
            targets.extend(_patches(pair.target_img, tcfg.patch_size))
        order = rng(derive_seed(tcfg.seed, 1, epoch)).permutation(len(inputs))
        losses, hits = [], 0
        for start in range(0, len(order), tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            batch = NoisePair(np.stack([inputs[j] for j in idx]), np.stack([targets[j] for j in idx]),
                              False, math.nan, math.nan)
            loss, h = train_step(state, batch)
            losses.append(loss)
            hits += h
        if state.lipschitz is not None:
            hits += state.lipschitz.project()
            for name, sigma in state.lipschitz.estimates().items():
                result.sigmas.append((epoch, name, sigma))
        state.epoch = epoch
        out = record(epoch)
        p, s = probe_scores(out, probe.clean_targets)
        result.metrics.append(EpochMetrics(epoch, float(np.mean(losses)), p, s, hits))
        log.info("epoch %d loss %.6f psnr %.3f ssim %.4f clamps %d", epoch, result.metrics[-1].loss, p, s, hits)
        if on_epoch is not None:
            on_epoch(result)
    return result


def denoise(model, noisy, tile: Optional[int] = None, margin: int = 32) -> np.ndarray:
    """Run the model over a whole image; returns the unclipped output.

    The image is reflect-padded so every spatial size is a multiple of the
    model's pooling factor (and of ``tile`` when tiling). With ``tile`` set,
    tiles of that size are processed with ``margin`` pixels of context on each
    side and only their centres are kept.
    """
    img = np.asarray(noisy, dtype=np.float64)
    squeeze = img.ndim == 2
    x = _chw(img)
    c, h, w = x.shape
    cfg = getattr(model, "cfg", None)
    mult = cfg.multiple if cfg is not None else 1
    in_ch = cfg.in_channels if cfg is not None else c
    if in_ch != c:
        if in_ch == 1:
            out = np.stack([denoise(model, x[i], tile, margin) for i in range(c)])
            return out
        raise DataError(f"model expects {in_ch} channels, image has {c}")
    step = mult if tile is None else math.lcm(mult, tile)
    ph, pw = -h % step, -w % step
    padded = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="reflect" if min(h, w) > 1 else "edge")
    if tile is None:
        out = model(Tensor(padded[None])).data[0]
    else:
        if margin % mult:
            raise ValueError(f"margin must be a multiple of {mult}")
        ctx = np.pad(padded, ((0, 0), (margin, margin), (margin, margin)), mode="reflect")
        out = np.empty_like(padded)
        for i in range(0, padded.shape[1], tile):
            for j in range(0, padded.shape[2], tile):
                win = ctx[:, i:i + tile + 2 * margin, j:j + tile + 2 * margin]
                res = model(Tensor(win[None])).data[0]
                out[:, i:i + tile, j:j + tile] = res[:, margin:margin + tile, margin:margin + tile]
    out = out[:, :h, :w]
    return out[0] if squeeze else out
