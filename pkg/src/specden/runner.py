"""Experiment orchestration behind the CLI: datasets, runs and their CSV outputs.

Every CSV starts with ``# config_hash=<sha256> seed=<seed>``. Floats are
written with ``.10g`` (``inf`` for an infinite PSNR), so equal configs give
byte-identical files.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .checkpoint import save_checkpoint
from .config import TOGGLES, ConfigError, ExperimentConfig
from .corpus import toy_corpus
from .imageio import list_images, load_image
from .metrics import psnr, ssim
from .spectrum import IpfsRecord, band_masks, band_similarities, format_ipfs_csv
from .train import DataError, Dataset, TrainResult, TrainState, denoise, train

CHECKPOINT = "checkpoint.bin"
PROBE_DIR = "probe"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".10g")


def comment(cfg_hash: str, seed: int) -> str:
    return f"config_hash={cfg_hash} seed={seed}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], note: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {note}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path) -> tuple[str, list[dict]]:
    """Return the comment line (without ``#``) and the data rows."""
    lines = Path(path).read_text().splitlines()
    note = lines[0][1:].strip() if lines and lines[0].startswith("#") else ""
    body = lines[1:] if note else lines
    return note, list(csv.DictReader(body))


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.dir is not None:
        root = Path(d.dir)
        if not root.is_dir():
            raise DataError(f"data dir {root} does not exist")
        files = list_images(root)
        if not files:
            raise DataError(f"no .pgm/.ppm images in {root}")
        images = [load_image(p) for p in files]
    else:
        images = toy_corpus(d.count, d.size, d.seed)
    return Dataset.synthesize(images, cfg.noise)


def metrics_rows(result: TrainResult):
    return [(m.epoch, m.loss, m.psnr_probe, m.ssim_probe, m.clamp_hits) for m in result.metrics]


def write_run(result: TrainResult, cfg: ExperimentConfig, out: Path) -> None:
    note = comment(cfg.hash, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    write_csv(out / "metrics.csv", ["epoch", "loss", "psnr_probe", "ssim_probe", "clamp_hits"],
              metrics_rows(result), note)
    (out / "ipfs.csv").write_text(format_ipfs_csv(result.ipfs, cfg.bands, note))
    write_csv(out / "routing.csv", ["image_id", "epoch", "swapped", "hf_input", "hf_target"],
              [(r.image_id, r.epoch, r.swapped, r.hf_input, r.hf_target) for r in result.routing], note)
    write_csv(out / "sigma.csv", ["epoch", "layer", "sigma"], result.sigmas, note)
    probe = out / PROBE_DIR
    probe.mkdir(exist_ok=True)
    np.save(probe / "noisy_targets.npy", result.probe.noisy_targets)
    np.save(probe / "clean_targets.npy", result.probe.clean_targets)
    for epoch, arr in result.probe_outputs:
        np.save(probe / f"output_{epoch:04d}.npy", arr)
    save_checkpoint(out / CHECKPOINT, result.state, cfg)


def run_training(cfg: ExperimentConfig, out: Optional[Path] = None,
                 data: Optional[Dataset] = None, state: Optional[TrainState] = None) -> TrainResult:
    data = load_dataset(cfg) if data is None else data
    result = train(data, cfg.model, cfg.train, state=state)
    if out is not None:
        write_run(result, cfg, Path(out))
    return result


def ipfs_from_probe(run_dir, target: str, bands: int) -> list[IpfsRecord]:
    """IPFS records recomputed from the probe outputs a training run saved."""
    root = Path(run_dir)
    probe = root / PROBE_DIR if (root / PROBE_DIR).is_dir() else root
    name = {"nos": "noisy_targets.npy", "gt": "clean_targets.npy"}.get(target)
    if name is None:
        raise ConfigError(f"target must be 'nos' or 'gt', got {target!r}")
    if not (probe / name).is_file():
        raise DataError(f"no saved probe targets in {probe}")
    targets = np.load(probe / name)
    outputs = sorted(probe.glob("output_*.npy"))
    if not outputs:
        raise DataError(f"no saved probe outputs in {probe}")
    mask = band_masks(*targets.shape[-2:], bands)
    kind = "noisy" if target == "nos" else "ground_truth"
    records = []
    for path in outputs:
        out = np.load(path)
        if out.shape != targets.shape:
            raise DataError(f"{path.name} has shape {out.shape}, targets {targets.shape}")
        sims = np.mean([band_similarities(o, t, mask) for o, t in zip(out, targets)], axis=0)
        records.append(IpfsRecord(int(path.stem.split("_")[1]), kind, tuple(float(s) for s in sims)))
    return records


@dataclass
class EvalRow:
    name: str
    psnr: float
    ssim: float


def evaluate(in_dir, gt_dir, model=None, tile: Optional[int] = None) -> list[EvalRow]:
    """Score every image in ``in_dir`` against the same-named file in ``gt_dir``.

    With a model the input is denoised first; without one it is scored as is.
    """
    in_files = list_images(in_dir)
    if not in_files:
        raise DataError(f"no .pgm/.ppm images in {in_dir}")
    rows = []
    for path in in_files:
        gt_path = Path(gt_dir) / path.name
        if not gt_path.is_file():
            raise DataError(f"no ground truth for {path.name} in {gt_dir}")
        x, gt = load_image(path), load_image(gt_path)
        if x.shape != gt.shape:
            raise DataError(f"{path.name}: shape {x.shape} vs ground truth {gt.shape}")
        y = x if model is None else np.clip(denoise(model, x, tile), 0.0, 1.0)
        rows.append(EvalRow(path.name, psnr(y, gt), ssim(y, gt)))
    return rows


def grid_configs(cfg: ExperimentConfig, grid: Sequence[str]) -> list[tuple[dict[str, bool], ExperimentConfig]]:
    """All 2^len(grid) toggle combinations; toggles outside ``grid`` keep their value."""
    for name in grid:
        if name not in TOGGLES:
            raise ConfigError(f"unknown grid toggle {name!r}; expected a subset of {','.join(TOGGLES)}")
    if len(set(grid)) != len(grid):
        raise ConfigError("grid toggles repeat")
    out = []
    for bits in itertools.product((False, True), repeat=len(grid)):
        flags = dict(zip(grid, bits))
        c = cfg.with_toggles(**flags)
        out.append((c.toggles, c))
    return out


def ablate(cfg: ExperimentConfig, grid: Sequence[str], out: Path) -> list[tuple]:
    out = Path(out)
    data = load_dataset(cfg)
    rows = []
    for flags, c in grid_configs(cfg, grid):
        tag = "-".join(t for t in TOGGLES if flags[t]) or "none"
        result = run_training(c, out / tag, data=data)
        last = result.metrics[-1]
        rows.append((tag, flags["fsd"], flags["lipschitz"], flags["ssr"], last.loss,
                     last.psnr_probe, last.ssim_probe, c.hash))
    write_csv(out / "ablation.csv",
              ["run", "fsd", "lipschitz", "ssr", "loss", "psnr_probe", "ssim_probe", "config_hash"],
              rows, comment(cfg.hash, cfg.seed))
    return rows
