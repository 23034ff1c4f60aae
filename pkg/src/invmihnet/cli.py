"""Command-line entry point: ``invmih train|conceal|reveal|evaluate|plot``.

Global flags (``--config``, ``--seed``, ``--checkpoint``, ``--out``) fall back
to ``INVMIH_CONFIG``, ``INVMIH_SEED``, ``INVMIH_CHECKPOINT`` and ``INVMIH_OUT``.

Exit codes: 0 ok; 1 usage/config/geometry error; 2 data or image decode
error; 3 numeric failure during training; 21-24 checkpoint errors
(version, checksum, shape, layout).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Sequence

import torch

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ENV_PREFIX, ConfigError, dump_config, load_config
from .data import DataError
from .imageio import ImageError, list_images, load_image, save_png
from .metrics import EvalReport, compatible_size, evaluate, psnr, ssim
from .model import InvMIHNet
from .training import TrainingDiverged, model_from_checkpoint, train

logger = logging.getLogger("invmihnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _env(name: str) -> Optional[str]:
    return os.environ.get(ENV_PREFIX + name)


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=None, help="run config file (key = value lines)")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--checkpoint", default=None, help="checkpoint file")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="invmih", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train from an image directory")
    p.add_argument("dataset", help="directory of training images")
    p.add_argument("--resume", default=None, help="resume from this checkpoint")

    p = sub.add_parser("conceal", parents=[common], help="hide N secret images in a cover")
    p.add_argument("--cover", required=True)
    p.add_argument("secrets", nargs="+", help="secret images, row-major tile order")

    p = sub.add_parser("reveal", parents=[common], help="recover the secrets from a stego PNG")
    p.add_argument("stego")
    p.add_argument("--secrets", nargs="*", default=None, help="originals, to report recovery PSNR/SSIM")

    p = sub.add_parser("evaluate", parents=[common], help="PSNR/SSIM over a test directory")
    p.add_argument("dataset")
    p.add_argument("--name", default=None, help="dataset name for the report")
    p.add_argument("--max-sets", type=int, default=None)
    p.add_argument("--timing", action="store_true", help="record seconds per image set in the report")

    p = sub.add_parser("plot", parents=[common], help="capacity-sweep figure from evaluation reports")
    p.add_argument("reports", nargs="+")
    return parser


def _resolve(args: argparse.Namespace) -> None:
    for name in ("config", "checkpoint", "out"):
        if getattr(args, name) is None:
            setattr(args, name, _env(name.upper()))
    if args.seed is None and _env("SEED") is not None:
        try:
            args.seed = int(_env("SEED"))
        except ValueError as exc:
            raise CliError(f"{ENV_PREFIX}SEED: {exc}") from exc


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise CliError(f"--{name} is required (or set {ENV_PREFIX}{name.upper()})")


@contextmanager
def _dir_lock(directory: Path) -> Iterator[None]:
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".invmih.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(f"{directory} is in use by another invmih process (remove {lock} if stale)")
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_model(path: str) -> InvMIHNet:
    model, _ = model_from_checkpoint(load_checkpoint(path))
    model.eval()
    return model


def _read(path: str) -> torch.Tensor:
    try:
        return load_image(path)
    except ImageError as exc:
        code = EXIT_USAGE if "alpha" in str(exc) else EXIT_DATA
        raise CliError(str(exc), code) from exc
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc


def _check_geometry(shape, model: InvMIHNet, what: str) -> None:
    h, w = shape[-2:]
    if compatible_size(h, w, model.layout) != (h, w):
        lay = model.layout
        raise CliError(
            f"{what} is {h}x{w}; a {lay.m}x{lay.n} layout needs height divisible by "
            f"{math.lcm(2, lay.m)} and width divisible by {math.lcm(2, lay.n)}"
        )


def cmd_train(args: argparse.Namespace) -> int:
    _require(args, "out")
    try:
        cfg = load_config(args.config, overrides={"seed": args.seed})
    except ConfigError as exc:
        raise CliError(f"config error: {exc}") from exc
    out = Path(args.out)
    print("effective config:\n" + dump_config(cfg), end="")
    resume = load_checkpoint(args.resume) if args.resume else None
    if resume is not None and resume.config != cfg.to_dict():
        raise CliError("resume checkpoint was made with a different config")
    with _dir_lock(out):
        (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
        model = InvMIHNet(cfg.model_config(), seed=cfg.seed)
        if resume is not None:
            model, _ = model_from_checkpoint(resume)

        def report(rec: dict) -> None:
            if rec["iteration"] % 100 == 0:
                logger.info("iter %d %s total %.5f", rec["iteration"], rec["stage"], rec["total"])

        try:
            result = train(model, cfg, args.dataset, out_dir=out, resume=resume, on_record=report)
        except DataError as exc:
            raise CliError(f"data error: {exc}", EXIT_DATA) from exc
        except TrainingDiverged as exc:
            if exc.last_good is not None:
                save_checkpoint(exc.last_good, out / "last_good.ckpt")
            raise CliError(f"training diverged: {exc}; last good checkpoint kept", EXIT_NUMERIC) from exc
    print(f"trained {result.checkpoint.iteration} iterations; checkpoint at {out / 'final.ckpt'}")
    return EXIT_OK


def cmd_conceal(args: argparse.Namespace) -> int:
    _require(args, "checkpoint", "out")
    model = _load_model(args.checkpoint)
    count = model.layout.count
    if len(args.secrets) != count:
        raise CliError(
            f"checkpoint expects N={count} secret images ({model.layout.m}x{model.layout.n}), "
            f"got {len(args.secrets)}"
        )
    cover = _read(args.cover)
    secrets = [_read(p) for p in args.secrets]
    for path, s in zip(args.secrets, secrets):
        if s.shape != cover.shape:
            raise CliError(f"{path} is {tuple(s.shape[-2:])}, cover is {tuple(cover.shape[-2:])}; sizes must match")
    _check_geometry(cover.shape, model, "cover")
    with torch.no_grad():
        stego = model.hide(cover, secrets).stego
    save_png(stego, args.out)
    print(f"wrote {args.out}")
    print(f"cover/stego PSNR {psnr(cover, stego):.2f} dB  SSIM {ssim(cover, stego):.4f}")
    return EXIT_OK


def cmd_reveal(args: argparse.Namespace) -> int:
    _require(args, "checkpoint", "out")
    model = _load_model(args.checkpoint)
    stego = _read(args.stego)
    _check_geometry(stego.shape, model, "stego image")
    out = Path(args.out)
    seed = 0 if args.seed is None else args.seed
    with torch.no_grad():
        recovered, _ = model.recover(stego, seed=seed)
    with _dir_lock(out):
        for k, img in enumerate(recovered):
            save_png(img, out / f"recovered_{k:02d}.png")
    print(f"wrote {len(recovered)} images to {out}")
    if args.secrets:
        if len(args.secrets) != len(recovered):
            raise CliError(f"--secrets needs {len(recovered)} files, got {len(args.secrets)}")
        for k, (path, img) in enumerate(zip(args.secrets, recovered)):
            ref = _read(path)
            rec = load_image(out / f"recovered_{k:02d}.png")
            print(f"secret {k:02d}: PSNR {psnr(ref, rec):.2f} dB  SSIM {ssim(ref, rec):.4f}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    _require(args, "checkpoint", "out")
    model = _load_model(args.checkpoint)
    try:
        files = list_images(args.dataset)
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    if len(files) < model.layout.count + 1:
        raise CliError(f"{args.dataset}: need at least {model.layout.count + 1} images", EXIT_DATA)
    try:
        report = evaluate(
            model,
            args.dataset,
            seed=0 if args.seed is None else args.seed,
            max_sets=args.max_sets,
            dataset_name=args.name,
            timing=args.timing,
        )
    except ImageError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    report.save(args.out)
    print(report.table())
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    _require(args, "out")
    from .plotting import plot_capacity

    by_count: dict[int, EvalReport] = {}
    for path in args.reports:
        try:
            rep = EvalReport.load(path)
        except (OSError, ValueError, TypeError) as exc:
            raise CliError(f"cannot read report {path}: {exc}") from exc
        if rep.num_secrets in by_count:
            logger.warning("duplicate N=%d: %s replaces the earlier report", rep.num_secrets, path)
        by_count[rep.num_secrets] = rep
    table_path = plot_capacity([by_count[k] for k in sorted(by_count)], args.out)
    print(f"wrote {args.out} and {table_path}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "conceal": cmd_conceal,
    "reveal": cmd_reveal,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _resolve(args)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
