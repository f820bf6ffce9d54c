"""Command-line entry point: ``specden <command> ...``.

Failures print one line to stderr, ``error=<kind> code=<n> reason=<text>``,
and exit with 2 (config), 3 (data) or 4 (numeric).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .autodiff import NumericalError, ShapeError
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .corpus import toy_corpus
from .imageio import ImageFormatError, load_image, save_image
from .noise import NoiseModel, apply_noise
from .runner import ablate, comment, evaluate, ipfs_from_probe, run_training, write_csv
from .spectrum import SpectrumError, format_ipfs_csv
from .train import DataError, TrainingError

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _noise_from_file(path) -> NoiseModel:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read noise config {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError("noise config must be a JSON object")
    if "kind" not in raw:  # a full experiment config
        return ExperimentConfig.from_dict(raw).noise
    try:
        return NoiseModel.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"noise: {e}") from e


def cmd_synth(args) -> None:
    model = _noise_from_file(args.noise)
    img = load_image(args.inp)
    seed = model.seed if args.seed is None else args.seed
    save_image(args.out, apply_noise(model, img, seed))


def cmd_corpus(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(toy_corpus(args.count, args.size, args.seed)):
        save_image(out / f"texture_{i:02d}.pgm", img)


def cmd_train(args) -> None:
    cfg = load_config(args.config)
    out = cfg.resolved_output_dir(args.out)
    result = run_training(cfg, out)
    m = result.metrics[-1] if result.metrics else None
    if m is not None:
        print(f"epoch={m.epoch} loss={m.loss:.6g} psnr_probe={m.psnr_probe:.4f} out={out}")


def cmd_eval(args) -> None:
    model, note = None, "config_hash=none seed=none"
    if args.ckpt is not None:
        state, cfg = load_checkpoint(args.ckpt)
        model, note = state.model, comment(cfg.hash, cfg.seed)
    rows = evaluate(args.inp, args.gt, model, args.tile)
    write_csv(args.out, ["image", "psnr", "ssim"], [(r.name, r.psnr, r.ssim) for r in rows], note)


def cmd_ipfs(args) -> None:
    records = ipfs_from_probe(args.ckpt_seq, args.target, args.bands)
    cfg_file = Path(args.ckpt_seq) / "config.json"
    note = "config_hash=none seed=none"
    if cfg_file.is_file():
        cfg = load_config(cfg_file)
        note = comment(cfg.hash, cfg.seed)
    Path(args.out).write_text(format_ipfs_csv(records, args.bands, note))


def cmd_ablate(args) -> None:
    cfg = load_config(args.config)
    grid = [g.strip() for g in args.grid.split(",") if g.strip()]
    rows = ablate(cfg, grid, cfg.resolved_output_dir(args.out))
    for row in rows:
        print(f"{row[0]}: psnr_probe={row[5]:.4f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specden", description="Spectral-control self-supervised denoising.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="apply a noise model to an image")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--noise", required=True, help="JSON noise config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (overrides env and config)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="denoise a directory and score it against ground truth")
    s.add_argument("--ckpt", help="checkpoint; without it inputs are scored as they are")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tile", type=int)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ipfs", help="recompute IPFS curves from a run's saved probe outputs")
    s.add_argument("--ckpt-seq", required=True, help="training output directory")
    s.add_argument("--target", choices=("nos", "gt"), required=True)
    s.add_argument("--bands", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ipfs)

    s = sub.add_parser("ablate", help="train every combination of the given toggles")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", default="fsd,lipschitz,ssr")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("corpus", help="write the procedural toy corpus as PGM files")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=16)
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_corpus)
    return p


def _classify(exc: BaseException) -> tuple[str, int]:
    if isinstance(exc, ConfigError):
        return "config", EXIT_CONFIG
    if isinstance(exc, (TrainingError, NumericalError, SpectrumError, FloatingPointError)):
        return "numeric", EXIT_NUMERIC
    if isinstance(exc, (DataError, ImageFormatError, CheckpointError, ShapeError, OSError)):
        return "data", EXIT_DATA
    if isinstance(exc, ValueError):
        return "config", EXIT_CONFIG
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "ipfs" and args.bands < 1:
        print("error=config code=2 reason=--bands must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        kind, code = _classify(exc)
        reason = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error={kind} code={code} reason={reason}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
