"""Staged training: IIR warm-up, IIH warm-up, then joint fine-tuning."""
from __future__ import annotations

import json
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Union

import numpy as np
import torch

from .checkpoint import Checkpoint, load_module_params, module_params, save_checkpoint
from .config import STAGES, TrainConfig
from .data import PatchDataset
from .losses import LossBreakdown, bicubic_downscale, total_loss
from .metrics import psnr
from .model import InvMIHNet
from .transforms import splice_mosaic

logger = logging.getLogger(__name__)

__all__ = [
    "lr_at",
    "load_patch_batch",
    "stage_loss",
    "train",
    "TrainResult",
    "TrainingDiverged",
    "model_from_checkpoint",
    "make_checkpoint",
    "latent_generator",
]


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, step: int, last_good: Optional[Checkpoint]):
        super().__init__(message)
        self.step = step
        self.last_good = last_good


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    return cfg.base_lr * 0.5 ** (iteration // cfg.lr_halving_period)


def load_patch_batch(dataset_dir: Union[str, Path], cfg: TrainConfig, step: int):
    """One training batch: ``(cover, [secret] * N)``, fixed by ``(cfg.seed, step)``."""
    ds = PatchDataset(dataset_dir, cfg.patch_size, cfg.count, cfg.seed)
    return ds.batch(step, cfg.batch_size)


def latent_generator(seed: int, step: int) -> torch.Generator:
    state = np.random.SeedSequence([int(seed), int(step), 1]).generate_state(1)[0]
    return torch.Generator().manual_seed(int(state))


def stage_parameters(model: InvMIHNet, stage: str) -> list[torch.nn.Parameter]:
    if stage == "iir_warmup":
        return list(model.iir.parameters())
    if stage == "iih_warmup":
        return list(model.iih.parameters())
    return list(model.parameters())


def stage_loss(
    model: InvMIHNet,
    stage: str,
    cover: torch.Tensor,
    secrets: list[torch.Tensor],
    cfg: TrainConfig,
    generator: torch.Generator,
) -> tuple[LossBreakdown, Optional[float]]:
    """Forward pass and loss for one batch; returns the breakdown and the
    cover/stego PSNR of the quantized stego (``None`` when no stego exists).

    Each warm-up keeps only the terms its own module can move.
    """
    layout = model.layout
    x_ref = splice_mosaic([bicubic_downscale(s, layout) for s in secrets], layout)
    x_s = torch.cat(secrets, dim=0)
    mode, weights, bins = cfg.latent_mode, cfg.loss_weights(), cfg.histogram_bins
    if stage == "iir_warmup":
        msi, _ = model.iir.downscale_all(secrets)
        x_rs = torch.cat(model.iir.upscale_all(msi, mode=mode, generator=generator), dim=0)
        return total_loss(x_s=x_s, x_rs=x_rs, x_ds=msi, x_ref=x_ref, weights=weights, bins=bins), None
    if stage == "iih_warmup":
        out = model.iih.conceal(cover, x_ref)
        msi_hat, _ = model.iih.reveal(out.stego, mode=mode, generator=generator)
        loss = total_loss(x_ds=x_ref, x_ds_hat=msi_hat, x_c=cover, x_stego=out.stego_pre_quant,
                          weights=weights, bins=bins)
        return loss, psnr(cover, out.stego)
    if stage != "joint":
        raise ValueError(f"unknown stage {stage!r}")
    hidden = model.hide(cover, secrets)
    msi_hat, _ = model.iih.reveal(hidden.stego, mode=mode, generator=generator)
    x_rs = torch.cat(model.iir.upscale_all(msi_hat, mode=mode, generator=generator), dim=0)
    loss = total_loss(x_s, x_rs, hidden.msi, msi_hat, x_ref, cover, hidden.stego_pre_quant, weights, bins)
    return loss, psnr(cover, hidden.stego)


@dataclass
class TrainResult:
    model: InvMIHNet
    checkpoint: Checkpoint
    records: list[dict] = field(default_factory=list)
    completed: bool = True


def make_checkpoint(
    model: InvMIHNet,
    cfg: TrainConfig,
    iteration: int = 0,
    stage_index: int = 0,
    stage_iteration: int = 0,
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> Checkpoint:
    params = module_params(model)
    extra: dict = {"stage_index": stage_index, "stage_iteration": stage_iteration, "optimizer_steps": {}}
    if optimizer is not None:
        for i, state in optimizer.state_dict()["state"].items():
            extra["optimizer_steps"][str(i)] = float(state["step"])
            params[f"optim/{i}/exp_avg"] = state["exp_avg"].detach().numpy().copy()
            params[f"optim/{i}/exp_avg_sq"] = state["exp_avg_sq"].detach().numpy().copy()
    return Checkpoint(
        config=cfg.to_dict(),
        params=params,
        iteration=iteration,
        # batches and latents are counter-based: (seed, global step) is the full stream state
        rng_state={"kind": "counter", "seed": cfg.seed, "step": iteration},
        extra=extra,
    )


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[InvMIHNet, TrainConfig]:
    cfg = TrainConfig.from_dict(ckpt.config)
    model = InvMIHNet(cfg.model_config())
    load_module_params(model, {k: v for k, v in ckpt.params.items() if not k.startswith("optim/")})
    return model, cfg


def _restore_optimizer(optimizer: torch.optim.Optimizer, ckpt: Checkpoint) -> None:
    state = {}
    for key, step in ckpt.extra.get("optimizer_steps", {}).items():
        state[int(key)] = {
            "step": torch.tensor(step),
            "exp_avg": torch.from_numpy(np.array(ckpt.params[f"optim/{key}/exp_avg"])),
            "exp_avg_sq": torch.from_numpy(np.array(ckpt.params[f"optim/{key}/exp_avg_sq"])),
        }
    sd = optimizer.state_dict()
    sd["state"] = state
    optimizer.load_state_dict(sd)


@contextmanager
def deterministic_mode(enabled: bool) -> Iterator[None]:
    if not enabled:
        yield
        return
    prev_alg = torch.are_deterministic_algorithms_enabled()
    prev_threads = torch.get_num_threads()
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(prev_alg)
        torch.set_num_threads(prev_threads)


def train(
    model: InvMIHNet,
    cfg: TrainConfig,
    dataset_dir: Union[str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    resume: Optional[Checkpoint] = None,
    max_steps: Optional[int] = None,
    on_record: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Run the stage plan of ``cfg`` on ``model`` (in place).

    ``resume`` continues from a checkpoint made by this function, including
    optimizer moments. ``max_steps`` stops early after that many steps in
    this call (the returned checkpoint can be resumed). With ``out_dir``,
    metrics go to ``metrics.jsonl`` and checkpoints to ``checkpoint.ckpt``
    (plus ``final.ckpt`` at the end).
    """
    if model.config != cfg.model_config():
        raise ValueError("model architecture does not match the training config")
    out = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_file = open(out / "metrics.jsonl", "a" if resume is not None else "w", encoding="utf-8")

    plan = cfg.stage_plan()
    stage_index = stage_iter = global_step = 0
    if resume is not None:
        stage_index = int(resume.extra["stage_index"])
        stage_iter = int(resume.extra["stage_iteration"])
        global_step = int(resume.iteration)
    last_good = resume if resume is not None else make_checkpoint(model, cfg)
    records: list[dict] = []
    steps_done = 0
    dataset: Optional[PatchDataset] = None

    def checkpoint_now(optimizer, si, it) -> Checkpoint:
        nonlocal last_good
        last_good = make_checkpoint(model, cfg, global_step, si, it, optimizer)
        if out is not None:
            save_checkpoint(last_good, out / "checkpoint.ckpt")
        return last_good

    model.train()
    try:
        with deterministic_mode(cfg.deterministic):
            while stage_index < len(plan):
                stage, iterations = plan[stage_index]
                if stage_iter >= iterations:
                    stage_index, stage_iter = stage_index + 1, 0
                    continue
                if dataset is None:
                    dataset = PatchDataset(dataset_dir, cfg.patch_size, cfg.count, cfg.seed)
                params = stage_parameters(model, stage)
                optimizer = torch.optim.Adam(
                    params, lr=cfg.base_lr, betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps
                )
                if resume is not None and stage_iter > 0 and int(resume.extra["stage_index"]) == stage_index:
                    _restore_optimizer(optimizer, resume)
                logger.info("stage %s: iterations %d..%d", stage, stage_iter, iterations)
                while stage_iter < iterations:
                    if max_steps is not None and steps_done >= max_steps:
                        return TrainResult(model, checkpoint_now(optimizer, stage_index, stage_iter), records, False)
                    lr = lr_at(stage_iter, cfg)
                    for group in optimizer.param_groups:
                        group["lr"] = lr
                    cover, secrets = dataset.batch(global_step, cfg.batch_size)
                    try:
                        loss, stego_psnr = stage_loss(
                            model, stage, cover, secrets, cfg, latent_generator(cfg.seed, global_step)
                        )
                    except FloatingPointError as exc:
                        raise TrainingDiverged(f"step {global_step}: {exc}", global_step, last_good) from exc
                    total = loss.total
                    optimizer.zero_grad(set_to_none=True)
                    total.backward()
                    torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
                    optimizer.step()

                    record = {"stage": stage, "iteration": global_step, "stage_iteration": stage_iter, "lr": lr}
                    record.update(loss.as_dict())
                    record["psnr_cover_stego"] = stego_psnr
                    records.append(record)
                    if log_file is not None:
                        log_file.write(json.dumps(record, allow_nan=True) + "\n")
                        log_file.flush()
                    if on_record is not None:
                        on_record(record)
                    stage_iter += 1
                    global_step += 1
                    steps_done += 1
                    if stage_iter % cfg.checkpoint_interval == 0 and stage_iter < iterations:
                        checkpoint_now(optimizer, stage_index, stage_iter)
                stage_index, stage_iter = stage_index + 1, 0
                checkpoint_now(None, stage_index, 0)
    finally:
        if log_file is not None:
            log_file.close()
    if out is not None:
        save_checkpoint(last_good, out / "final.ckpt")
    return TrainResult(model, last_good, records, True)
