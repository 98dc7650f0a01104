"""Two-phase optimization of the neural field under color, normal-prior and Eikonal losses.

Phase one trusts every prior (indicator == 1). From `phase_one_iters` on, each batch's rendered
normal/depth is checked against neighbor views and failing priors are rejected for good.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

# Ensure project root is on sys.path so that `utils.*` works when run as a script.
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import pandas as pd
import torch
from torch.optim.lr_scheduler import LambdaLR
from tqdm import tqdm

from utils.errors import NonFiniteLossError, ValidationError
from utils.fields import NeuralField, field_from_payload, field_payload
from utils.geocheck import GeoChecker, PriorMask
from utils.renderer import RenderOutput, render_rays
from utils.scene_data import Scene, SimilarityTransform, load_scene, normalize_scene, pixel_dirs, sphere_near_far
from utils.seeding import stream_seed, torch_generator
from utils.train_config import TrainConfig, load_config, num_workers, parse_overrides

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
SCALAR_COLUMNS = ["step", "loss", "loss_color", "loss_prior", "loss_eikonal", "rejected", "s", "lr"]


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def loss_color(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """L1 summed over RGB, averaged over pixels."""
    return (pred - target).abs().sum(dim=-1).mean()


def loss_prior(pred_cam: torch.Tensor, prior: torch.Tensor, omega: torch.Tensor) -> torch.Tensor:
    """Gated L1 against the prior; gated pixels still count in the mean."""
    return ((pred_cam - prior).abs().sum(dim=-1) * omega.to(pred_cam.dtype)).mean()


def loss_eikonal(gradients: torch.Tensor) -> torch.Tensor:
    return ((torch.linalg.norm(gradients, dim=-1) - 1.0) ** 2).mean()


def total_loss(out: RenderOutput, normal_cam: torch.Tensor, target: torch.Tensor, prior: torch.Tensor,
               omega: torch.Tensor, config: TrainConfig) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Weighted objective and its color, prior and eikonal terms. `normal_cam` is the raw composited normal."""
    l_color = loss_color(out.color, target)
    l_eik = loss_eikonal(out.gradients)
    if config.prior_mode == "no_prior":
        l_prior = torch.zeros((), dtype=l_color.dtype, device=l_color.device)
    else:
        l_prior = loss_prior(normal_cam, prior, omega)
    loss = config.lambda_color * l_color + config.lambda_prior * l_prior + config.lambda_eikonal * l_eik
    return loss, l_color, l_prior, l_eik


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass
class TrainData:
    """Scene arrays on the training device plus the flat list of trainable pixels."""

    images: torch.Tensor    # [V, H, W, 3]
    priors: torch.Tensor    # [V, H, W, 3]
    K_inv: torch.Tensor     # [V, 3, 3]
    R: torch.Tensor         # [V, 3, 3]
    centers: torch.Tensor   # [V, 3]
    pixels: torch.Tensor    # [N, 3] (view, row, col)
    train_views: List[int]
    holdout_views: List[int]

    @classmethod
    def from_scene(cls, scene: Scene, holdout_every: int, device: str | torch.device) -> "TrainData":
        n = len(scene.views)
        holdout = [i for i in range(n) if holdout_every and (i + 1) % holdout_every == 0]
        train_views = [i for i in range(n) if i not in holdout]
        if len(train_views) < 2:
            raise ValidationError("need at least 2 training views")
        as_t = lambda arrs: torch.as_tensor(np.stack(arrs), dtype=torch.float32, device=device)
        valid = np.stack([v.valid_mask for v in scene.views])
        keep = np.zeros(n, dtype=bool)
        keep[train_views] = True
        pix = np.argwhere(valid & keep[:, None, None])
        if len(pix) == 0:
            raise ValidationError("no valid pixels in the training views")
        return cls(
            images=as_t([v.image for v in scene.views]),
            priors=as_t([v.prior_normals for v in scene.views]),
            K_inv=as_t([v.K_inv for v in scene.views]),
            R=as_t([v.R for v in scene.views]),
            centers=as_t([v.center for v in scene.views]),
            pixels=torch.as_tensor(pix, dtype=torch.long, device=device),
            train_views=train_views,
            holdout_views=holdout,
        )


@dataclass
class TrainState:
    field: NeuralField
    optimizer: torch.optim.Optimizer
    scheduler: LambdaLR
    mask: PriorMask
    iteration: int
    sampling: torch.Generator
    perturb: torch.Generator


@dataclass
class StepStats:
    step: int
    loss: float
    loss_color: float
    loss_prior: float
    loss_eikonal: float
    rejected: int
    s: float
    lr: float
    newly_rejected: int = 0
    weight_sum: float = 0.0

    def row(self) -> Dict[str, float]:
        return {k: getattr(self, k) for k in SCALAR_COLUMNS}


def lr_lambda(config: TrainConfig):
    warm, total, floor = config.warmup_iters, config.total_iters, config.lr_floor

    def factor(it: int) -> float:
        if warm and it < warm:
            return (it + 1) / warm
        progress = (it - warm) / max(total - warm, 1)
        return (math.cos(math.pi * min(progress, 1.0)) + 1.0) * 0.5 * (1.0 - floor) + floor

    return factor


def wants_inside_out(scene: Scene, config: TrainConfig) -> bool:
    if config.sphere_init != "auto":
        return config.sphere_init == "inside_out"
    radii = [np.linalg.norm(v.center) for v in scene.views]
    return max(radii) < config.init_radius


def init_state(scene: Scene, config: TrainConfig, device: str | torch.device) -> TrainState:
    spec = config.field_spec()
    spec.inside_out = wants_inside_out(scene, config)
    field_ = NeuralField(spec, seed=stream_seed(config.seed, "init")).to(device)
    optimizer = torch.optim.Adam(field_.parameters(), lr=config.lr)
    scheduler = LambdaLR(optimizer, lr_lambda(config))
    logger.info("sphere init radius %.2f (%s)", spec.init_radius, "inside-out" if spec.inside_out else "outward")
    return TrainState(
        field=field_,
        optimizer=optimizer,
        scheduler=scheduler,
        mask=PriorMask.for_scene(scene),
        iteration=0,
        sampling=torch_generator(config.seed, "sampling", device),
        perturb=torch_generator(config.seed, "perturb", device),
    )


# ---------------------------------------------------------------------------
# one step
# ---------------------------------------------------------------------------

def _dump_batch(debug_dir: Optional[Path], step: int, payload: Dict) -> Optional[str]:
    if debug_dir is None:
        return None
    debug_dir.mkdir(parents=True, exist_ok=True)
    path = debug_dir / f"nonfinite_step{step:06d}.pt"
    torch.save(payload, path)
    return str(path)


def train_step(state: TrainState, data: TrainData, config: TrainConfig, checker: Optional[GeoChecker] = None,
               debug_dir: Optional[Path] = None) -> StepStats:
    device = data.images.device
    m = config.rays_per_batch
    idx = torch.randint(data.pixels.shape[0], (m,), generator=state.sampling, device=device)
    view_idx, rows, cols = data.pixels[idx].unbind(-1)
    uv = torch.stack([cols, rows], dim=-1).to(torch.float32)

    dirs = pixel_dirs(data.K_inv[view_idx], data.R[view_idx], uv)
    origins = data.centers[view_idx]
    near, far = sphere_near_far(origins, dirs, 1.0)
    out = render_rays(state.field, origins, dirs, near, far, config.render_settings(), generator=state.perturb)

    target = data.images[view_idx, rows, cols]
    prior = data.priors[view_idx, rows, cols]
    R = data.R[view_idx]
    normal_cam = (R @ out.normal_raw[..., None])[..., 0]

    phase_two = state.iteration >= config.phase_one_iters
    newly_rejected = 0
    if config.prior_mode == "full" and phase_two:
        if checker is None:
            raise ValidationError("phase two of the full method needs a GeoChecker")
        with torch.no_grad():
            indicator, _, _ = checker.indicator(view_idx, uv, normal_cam.detach(), out.depth.detach())
        newly_rejected = state.mask.apply(
            view_idx.cpu().numpy(), cols.cpu().numpy(), rows.cpu().numpy(), indicator.cpu().numpy()
        )
        omega = state.mask.omega(view_idx, cols, rows).to(device)
    else:
        omega = torch.ones(m, dtype=torch.bool, device=device)

    loss, l_color, l_prior, l_eik = total_loss(out, normal_cam, target, prior, omega, config)

    if not torch.isfinite(loss):
        path = _dump_batch(
            debug_dir,
            state.iteration,
            {
                "iteration": state.iteration,
                "pixels": data.pixels[idx].cpu(),
                "losses": [float(l_color), float(l_prior), float(l_eik)],
                "z_vals": out.z_vals.detach().cpu(),
                "sdf": out.sdf.detach().cpu(),
            },
        )
        raise NonFiniteLossError(f"non-finite loss at iteration {state.iteration}", dump_path=path)

    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    state.optimizer.step()
    lr = state.optimizer.param_groups[0]["lr"]
    state.scheduler.step()
    state.iteration += 1

    return StepStats(
        step=state.iteration,
        loss=float(loss),
        loss_color=float(l_color),
        loss_prior=float(l_prior),
        loss_eikonal=float(l_eik),
        rejected=state.mask.rejected_count,
        s=float(state.field.sharpness()),
        lr=lr,
        newly_rejected=newly_rejected,
        weight_sum=float(out.weight_sum.mean()),
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def checkpoint_payload(state: TrainState, config: TrainConfig, scene: Scene, data: TrainData,
                       transform: Optional[SimilarityTransform] = None) -> Dict:
    """`scene_transform` maps the scene directory's units to the normalized frame."""
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config.model_dump(),
        "field": field_payload(state.field),
        "optimizer": state.optimizer.state_dict(),
        "scheduler": state.scheduler.state_dict(),
        "mask": state.mask.states.copy(),
        "iteration": state.iteration,
        "rng": {"sampling": state.sampling.get_state(), "perturb": state.perturb.get_state()},
        "to_normalized": scene.to_normalized.to_dict(),
        "scene_transform": (transform or SimilarityTransform()).to_dict(),
        "view_names": [v.name for v in scene.views],
        "train_views": data.train_views,
        "holdout_views": data.holdout_views,
        "scene_name": scene.name,
    }


def save_checkpoint(path: Path, payload: Dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path: Path, device: str | torch.device = "cpu") -> Dict:
    if not Path(path).exists():
        raise ValidationError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location=device, weights_only=False)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValidationError(f"unsupported checkpoint version: {payload.get('format_version')}")
    return payload


def latest_checkpoint(out_dir: Path) -> Optional[Path]:
    ckpts = sorted((out_dir / "checkpoints").glob("ckpt_*.pt"))
    return ckpts[-1] if ckpts else None


def restore_state(payload: Dict, config: TrainConfig, device: str | torch.device) -> TrainState:
    field_ = field_from_payload(payload["field"], device)
    optimizer = torch.optim.Adam(field_.parameters(), lr=config.lr)
    # the scheduler's initial step rewrites lr, so the saved optimizer state goes in after it
    scheduler = LambdaLR(optimizer, lr_lambda(config))
    optimizer.load_state_dict(payload["optimizer"])
    scheduler.load_state_dict(payload["scheduler"])
    states = np.asarray(payload["mask"])
    sampling = torch.Generator(device=device)
    sampling.set_state(payload["rng"]["sampling"].cpu())
    perturb = torch.Generator(device=device)
    perturb.set_state(payload["rng"]["perturb"].cpu())
    return TrainState(
        field=field_,
        optimizer=optimizer,
        scheduler=scheduler,
        mask=PriorMask(*states.shape, states=states),
        iteration=int(payload["iteration"]),
        sampling=sampling,
        perturb=perturb,
    )


def checkpoint_transform(payload: Dict) -> SimilarityTransform:
    if "scene_transform" not in payload:
        raise ValidationError("checkpoint has no scene_transform")
    return SimilarityTransform.from_dict(payload["scene_transform"])


# ---------------------------------------------------------------------------
# loop
# ---------------------------------------------------------------------------

def _write_scalars(path: Path, rows: List[Dict], keep_until: Optional[int] = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if keep_until is not None and path.exists():
        old = pd.read_csv(path)
        old[old["step"] <= keep_until].to_csv(path, index=False)
    if not rows:
        return
    frame = pd.DataFrame(rows, columns=SCALAR_COLUMNS)
    frame.to_csv(path, mode="a", header=not path.exists(), index=False)


@dataclass
class TrainResult:
    state: TrainState
    scalars: pd.DataFrame
    checkpoints: List[Path] = field(default_factory=list)
    final: Optional[StepStats] = None


def train(scene: Scene, config: TrainConfig, out_dir: Optional[Path] = None, resume: bool = False,
          stop_at: Optional[int] = None, progress: bool = True) -> TrainResult:
    """Run (or resume) training; checkpoints and the scalar CSV go under `out_dir` when given.

    `stop_at` ends the run early at that iteration, leaving a checkpoint to resume from.
    """
    device = config.resolve_device()
    workers = num_workers()
    if workers > 0:
        torch.set_num_threads(workers)
    scene, transform = normalize_scene(scene)
    data = TrainData.from_scene(scene, config.holdout_every, device)

    state = None
    if resume and out_dir is not None:
        ckpt = latest_checkpoint(out_dir)
        if ckpt is not None:
            state = restore_state(load_checkpoint(ckpt, device), config, device)
            logger.info("resumed from %s at iteration %d", ckpt.name, state.iteration)
    if state is None:
        state = init_state(scene, config, device)

    checker = None
    if config.prior_mode == "full":
        checker = GeoChecker(
            scene,
            num_neighbors=config.num_neighbors,
            patch_size=config.patch_size,
            threshold=config.ncc_threshold,
            device=device,
            view_ids=data.train_views,
        )

    scalars_path = out_dir / "logs" / "scalars.csv" if out_dir is not None else None
    debug_dir = out_dir / "debug" if out_dir is not None else None
    if scalars_path is not None:
        _write_scalars(scalars_path, [], keep_until=state.iteration if resume else -1)

    end = config.total_iters if stop_at is None else min(stop_at, config.total_iters)
    rows: List[Dict] = []
    all_rows: List[Dict] = []
    checkpoints: List[Path] = []
    stats = None
    bar = tqdm(range(state.iteration, end), disable=not progress, desc="train", dynamic_ncols=True)
    for _ in bar:
        stats = train_step(state, data, config, checker, debug_dir)
        if state.iteration == config.phase_one_iters:
            logger.info("phase one finished at iteration %d; prior check enabled", state.iteration)
        if stats.step % config.log_every == 0:
            rows.append(stats.row())
            all_rows.append(stats.row())
            bar.set_postfix(loss=f"{stats.loss:.4f}", rejected=stats.rejected, s=f"{stats.s:.1f}")
        at_checkpoint = stats.step % config.checkpoint_every == 0 or stats.step == end
        if out_dir is not None and at_checkpoint:
            _write_scalars(scalars_path, rows)
            rows = []
            path = out_dir / "checkpoints" / f"ckpt_{stats.step:06d}.pt"
            checkpoints.append(save_checkpoint(path, checkpoint_payload(state, config, scene, data, transform)))
            logger.info("checkpoint %s", path.name)
    if out_dir is not None and rows:
        _write_scalars(scalars_path, rows)
    return TrainResult(state=state, scalars=pd.DataFrame(all_rows, columns=SCALAR_COLUMNS), checkpoints=checkpoints, final=stats)


def main() -> None:
    parser = argparse.ArgumentParser(description="Train a neural field on a scene directory")
    parser.add_argument("scene_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--set", dest="overrides", action="append", default=[], help="key=value")
    parser.add_argument("--resume", action="store_true")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO)
    config = load_config(args.config, parse_overrides(args.overrides))
    result = train(load_scene(args.scene_dir), config, args.out_dir, resume=args.resume)
    final = result.final.row() if result.final else {}
    print(json.dumps({"status": "ok", "final": final}, ensure_ascii=False))


if __name__ == "__main__":
    main()
