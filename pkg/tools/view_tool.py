"""View Tools: per-view renders of a checkpoint (normal evaluation, images + PSNR, prior-mask dumps)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from pydantic import Field

from tools.base import ReconTool, prepare_out_dir
from utils.errors import ValidationError
from utils.fields import NeuralField, field_from_payload
from utils.geocheck import STATE_NAMES, GeoChecker, PriorMask, ncc_dump
from utils.metrics import eval_normals, psnr, write_reports
from utils.renderer import render_image, render_rays, weight_profiles
from utils.scene_data import (
    CameraView,
    Scene,
    SimilarityTransform,
    load_scene,
    pixel_dirs,
    pose_to_extrinsics,
    sphere_near_far,
    transform_scene,
    transform_view,
    write_float_map,
    write_image,
)
from utils.seeding import numpy_rng
from utils.train_config import TrainConfig, build_config
from utils.trainer import checkpoint_transform, load_checkpoint

logger = logging.getLogger(__name__)


@dataclass
class TrainedModel:
    payload: Dict[str, Any]
    config: TrainConfig
    field: NeuralField
    transform: SimilarityTransform
    device: str


def load_trained(checkpoint: Path, device: Optional[str] = None) -> TrainedModel:
    payload = load_checkpoint(Path(checkpoint))
    config = build_config(payload["config"])
    device = device or config.resolve_device()
    field_ = field_from_payload(payload["field"], device)
    field_.eval()
    return TrainedModel(payload=payload, config=config, field=field_, transform=checkpoint_transform(payload), device=device)


def load_normalized_scene(model: TrainedModel, scene_dir: Path) -> Scene:
    """The scene directory mapped into the checkpoint's normalized frame."""
    scene = transform_scene(load_scene(scene_dir), model.transform)
    names = model.payload.get("view_names")
    if names and names != [v.name for v in scene.views]:
        logger.warning("scene views differ from the views the checkpoint was trained on")
    return scene


def _split_views(model: TrainedModel, scene: Scene, split: str, fallback_all: bool = False) -> List[int]:
    n = len(scene.views)
    if split == "all":
        return list(range(n))
    key = {"train": "train_views", "holdout": "holdout_views"}.get(split)
    if key is None:
        raise ValidationError(f"unknown split {split!r} (all, train, holdout)")
    ids = [i for i in model.payload.get(key, []) if i < n]
    if not ids and fallback_all:
        logger.warning("checkpoint has no %s views; using all views", split)
        return list(range(n))
    if not ids:
        raise ValidationError(f"checkpoint has no {split} views")
    return ids


def normal_to_rgb(normal: np.ndarray) -> np.ndarray:
    return np.clip((normal + 1.0) * 0.5, 0.0, 1.0)


class EvalNormalsTool(ReconTool):
    """Rendered camera-frame normals vs. GT normals, with the input priors' error alongside."""

    name: str = "eval_normals"
    description: str = "Render normals for each view and report angular error vs. GT (rendered and prior rows)."

    split: str = Field(default="all", description="Views to evaluate: all, train or holdout")
    stride: int = Field(default=1, description="Evaluate every stride-th pixel")
    chunk: int = Field(default=1024, description="Rays per render chunk")
    min_weight: float = Field(default=0.5, description="Pixels whose accumulated weight is below this are skipped")
    save_maps: bool = Field(default=False, description="Write rendered normal PNGs")
    overwrite: bool = Field(default=False, description="Clear a non-empty output directory")

    def run(self, checkpoint: Path, scene_dir: Path, out_dir: Path) -> Dict[str, Any]:
        model = load_trained(checkpoint)
        scene = load_normalized_scene(model, scene_dir)
        out_dir = prepare_out_dir(Path(out_dir), self.overwrite)
        manifest, started = self.start_manifest(
            seed=model.config.seed, scene=scene.name, config=self.model_dump(exclude={"name", "description"}),
            inputs={"checkpoint": str(checkpoint), "scene_dir": str(scene_dir)},
        )

        settings = model.config.render_settings()
        s = self.stride
        preds, gts, priors, masks, per_view = [], [], [], [], []
        for i in _split_views(model, scene, self.split):
            view = scene.views[i]
            if view.gt_normals is None:
                raise ValidationError(f"view {view.name} has no GT normals")
            img = render_image(model.field, view, settings, chunk=self.chunk, stride=s)
            pred = img["normal_cam"]
            gt = view.gt_normals[::s, ::s]
            prior = view.prior_normals[::s, ::s]
            valid = (
                view.valid_mask[::s, ::s]
                & (np.linalg.norm(gt, axis=-1) > 0.5)
                & (img["weight_sum"] >= self.min_weight)
            )
            preds.append(pred)
            gts.append(gt)
            priors.append(prior)
            masks.append(valid)
            if valid.any():
                per_view.append({"view": view.name, **eval_normals(pred, gt, valid).row()})
            if self.save_maps:
                write_image(out_dir / "normals" / f"{view.name}.png", normal_to_rgb(pred))

        reports = {"rendered": eval_normals(preds, gts, masks), "prior": eval_normals(priors, gts, masks)}
        files = write_reports(reports, out_dir, "normals")
        pd.DataFrame(per_view).to_csv(out_dir / "normals_per_view.csv", index=False)
        out = {"reports": {k: r.row() for k, r in reports.items()}, **files}
        manifest.finish(started, **files).write(out_dir)
        return out


def load_pose_views(poses: Path, intrinsics: Path, width: int, height: int) -> List[CameraView]:
    """Camera-to-world 4x4 poses stacked in one text file, one shared intrinsics matrix."""
    try:
        mats = np.loadtxt(poses).reshape(-1, 4, 4)
        K = np.loadtxt(intrinsics)[:3, :3]
    except (OSError, ValueError) as e:
        raise ValidationError(f"cannot read poses/intrinsics: {e}") from e
    views = []
    for i, c2w in enumerate(mats):
        R, t = pose_to_extrinsics(c2w)
        views.append(
            CameraView(
                K=K, R=R, t=t,
                image=np.zeros((height, width, 3), dtype=np.float32),
                prior_normals=np.zeros((height, width, 3), dtype=np.float32),
                valid_mask=np.zeros((height, width), dtype=bool),
                name=f"{i:06d}",
            )
        )
    return views


def middle_row_pixels(view: CameraView, count: int) -> np.ndarray:
    us = np.linspace(0, view.width - 1, count)
    return np.stack([us, np.full(count, (view.height - 1) / 2.0)], axis=-1)


class RenderTool(ReconTool):
    """Color, normal and depth images for scene views or explicit poses; PSNR where references exist."""

    name: str = "render"
    description: str = "Render images from a checkpoint; reports PSNR against scene images when available."

    split: str = Field(default="holdout", description="Scene views to render: all, train or holdout")
    chunk: int = Field(default=1024, description="Rays per render chunk")
    profile: int = Field(default=0, description="Weight-profile rays along the middle row of the first view")
    overwrite: bool = Field(default=False, description="Clear a non-empty output directory")

    def run(self, checkpoint: Path, out_dir: Path, scene_dir: Optional[Path] = None, poses: Optional[Path] = None,
            intrinsics: Optional[Path] = None, width: Optional[int] = None, height: Optional[int] = None) -> Dict[str, Any]:
        model = load_trained(checkpoint)
        if scene_dir is not None:
            scene = load_normalized_scene(model, scene_dir)
            views = [scene.views[i] for i in _split_views(model, scene, self.split, fallback_all=True)]
            with_reference = True
        elif poses is not None:
            if intrinsics is None or width is None or height is None:
                raise ValidationError("rendering from poses needs intrinsics, width and height")
            views = [transform_view(v, model.transform) for v in load_pose_views(Path(poses), Path(intrinsics), width, height)]
            with_reference = False
        else:
            raise ValidationError("give a scene directory or a poses file")
        out_dir = prepare_out_dir(Path(out_dir), self.overwrite)
        manifest, started = self.start_manifest(
            seed=model.config.seed, config=self.model_dump(exclude={"name", "description"}),
            inputs={"checkpoint": str(checkpoint), "scene_dir": str(scene_dir or ""), "poses": str(poses or "")},
        )

        settings = model.config.render_settings()
        rows = []
        for view in views:
            img = render_image(model.field, view, settings, chunk=self.chunk)
            color = np.clip(img["color"], 0.0, 1.0)
            write_image(out_dir / "color" / f"{view.name}.png", color)
            write_image(out_dir / "normal" / f"{view.name}.png", normal_to_rgb(img["normal"]))
            write_float_map(out_dir / "depth" / f"{view.name}.rfl",
                            (img["z_depth"] / model.transform.scale).astype(np.float32))
            row = {"view": view.name}
            if with_reference:
                row["psnr"] = psnr(color, np.clip(view.image, 0.0, 1.0))
            rows.append(row)

        out: Dict[str, Any] = {"out_dir": str(out_dir), "views": len(views)}
        if with_reference and rows:
            frame = pd.DataFrame(rows)
            frame.to_csv(out_dir / "psnr.csv", index=False)
            finite = frame["psnr"][np.isfinite(frame["psnr"])]
            out["psnr_mean"] = float(finite.mean()) if len(finite) else float("inf")
            out["psnr_csv"] = str(out_dir / "psnr.csv")
        if self.profile > 0 and views:
            out["profiles"] = str(self._profiles(model, views[0], settings, out_dir))
        manifest.finish(started, **out).write(out_dir)
        return out

    def _profiles(self, model: TrainedModel, view: CameraView, settings, out_dir: Path) -> Path:
        dtype = torch.float32
        uv = torch.as_tensor(middle_row_pixels(view, self.profile), dtype=dtype, device=model.device)
        K_inv = torch.as_tensor(view.K_inv, dtype=dtype, device=model.device).expand(len(uv), 3, 3)
        R = torch.as_tensor(view.R, dtype=dtype, device=model.device).expand(len(uv), 3, 3)
        dirs = pixel_dirs(K_inv, R, uv)
        origins = torch.as_tensor(view.center, dtype=dtype, device=model.device).expand(dirs.shape).contiguous()
        near, far = sphere_near_far(origins, dirs, settings.radius)
        hit = far > near + 1e-6
        if not hit.any():
            raise ValidationError(f"no profile ray of view {view.name} meets the bounding sphere")
        res = render_rays(model.field, origins[hit], dirs[hit], near[hit], far[hit], replace(settings, perturb=False),
                          create_graph=False)
        frame = weight_profiles(res, torch.nonzero(hit).squeeze(-1).cpu().numpy())
        path = out_dir / "profiles.csv"
        frame.to_csv(path, index=False)
        return path


def region_state_stats(mask: PriorMask, scene: Scene, view_ids: Sequence[int]) -> Dict[str, Dict[str, int]]:
    """State counts over valid prior pixels, grouped by synthetic label and by the corrupted-prior mask."""
    stats: Dict[str, Dict[str, int]] = {}

    def add(key: str, states: np.ndarray) -> None:
        bucket = stats.setdefault(key, {name: 0 for name in STATE_NAMES.values()})
        for s, name in STATE_NAMES.items():
            bucket[name] += int((states == s).sum())

    for i in view_ids:
        view = scene.views[i]
        states = mask.states[i][view.valid_mask]
        if view.labels is not None:
            labels = view.labels[view.valid_mask]
            for label in np.unique(labels):
                add(f"label_{int(label)}", states[labels == label])
        if view.corrupt_mask is not None:
            corrupt = view.corrupt_mask[view.valid_mask]
            add("corrupt", states[corrupt])
            add("clean", states[~corrupt])
    return stats


class DumpMasksTool(ReconTool):
    """Indicator mask images (white accepted, gray untested, black rejected) and per-pixel NCC dumps."""

    name: str = "dump_masks"
    description: str = "Write the checkpoint's prior-state masks as PNGs; optionally an NCC dump for sampled pixels."

    pixels: int = Field(default=0, description="Pixels to re-check and dump NCC scores for (needs the scene)")
    seed: int = Field(default=0, description="Pixel sampling seed")
    overwrite: bool = Field(default=False, description="Clear a non-empty output directory")

    def run(self, checkpoint: Path, out_dir: Path, scene_dir: Optional[Path] = None) -> Dict[str, Any]:
        model = load_trained(checkpoint)
        states = np.asarray(model.payload["mask"])
        mask = PriorMask(*states.shape, states=states)
        if self.pixels > 0 and scene_dir is None:
            raise ValidationError("--pixels needs the scene directory")
        out_dir = prepare_out_dir(Path(out_dir), self.overwrite)
        manifest, started = self.start_manifest(
            seed=self.seed, scene=model.payload.get("scene_name"), config=self.model_dump(exclude={"name", "description"}),
            inputs={"checkpoint": str(checkpoint), "scene_dir": str(scene_dir or "")},
        )

        paths = mask.save_images(out_dir / "masks", names=model.payload.get("view_names"))
        out: Dict[str, Any] = {"masks": len(paths), "counts": mask.counts(), "iteration": int(model.payload["iteration"])}
        if scene_dir is not None:
            scene = load_normalized_scene(model, scene_dir)
            train_views = model.payload.get("train_views") or list(range(len(scene.views)))
            out["regions"] = region_state_stats(mask, scene, train_views)
            if self.pixels > 0:
                frame = self._ncc_dump(model, scene, train_views)
                path = out_dir / "ncc_dump.csv"
                frame.to_csv(path, index=False)
                out["ncc_dump"] = str(path)
        manifest.finish(started, **out).write(out_dir)
        return out

    def _ncc_dump(self, model: TrainedModel, scene: Scene, train_views: Sequence[int]) -> pd.DataFrame:
        config = model.config
        rng = numpy_rng(self.seed, "metrics")
        candidates = [
            np.concatenate([np.full((int(scene.views[i].valid_mask.sum()), 1), i), np.argwhere(scene.views[i].valid_mask)], axis=1)
            for i in train_views
        ]
        candidates = np.concatenate(candidates) if candidates else np.zeros((0, 3), dtype=np.int64)
        if len(candidates) == 0:
            raise ValidationError("no valid prior pixels to dump")
        picked = candidates[rng.choice(len(candidates), size=min(self.pixels, len(candidates)), replace=False)]
        dev, dtype = model.device, torch.float32
        view_idx = torch.as_tensor(picked[:, 0], device=dev)
        uv = torch.as_tensor(picked[:, [2, 1]], dtype=dtype, device=dev)
        K_inv = torch.as_tensor(np.stack([scene.views[i].K_inv for i in picked[:, 0]]), dtype=dtype, device=dev)
        R = torch.as_tensor(np.stack([scene.views[i].R for i in picked[:, 0]]), dtype=dtype, device=dev)
        centers = torch.as_tensor(np.stack([scene.views[i].center for i in picked[:, 0]]), dtype=dtype, device=dev)
        dirs = pixel_dirs(K_inv, R, uv)
        near, far = sphere_near_far(centers, dirs, 1.0)
        settings = replace(config.render_settings(), perturb=False)
        res = render_rays(model.field, centers, dirs, near, far, settings, create_graph=False)
        normal_cam = (R @ res.normal_raw.detach()[..., None])[..., 0]
        checker = GeoChecker(scene, num_neighbors=config.num_neighbors, patch_size=config.patch_size,
                             threshold=config.ncc_threshold, device=dev, view_ids=list(train_views))
        frame = ncc_dump(checker, view_idx, uv, normal_cam, res.depth.detach())
        # ncc_dump emits num_neighbors rows per pixel, pixel-major
        states = np.asarray(model.payload["mask"])[picked[:, 0], picked[:, 1], picked[:, 2]]
        frame["state"] = [STATE_NAMES[int(s)] for s in np.repeat(states, checker.neighbors.shape[1])]
        return frame


def create_eval_normals_tool(split: str = "all", stride: int = 1, save_maps: bool = False,
                             overwrite: bool = False) -> EvalNormalsTool:
    return EvalNormalsTool(split=split, stride=stride, save_maps=save_maps, overwrite=overwrite)


def create_render_tool(split: str = "holdout", profile: int = 0, overwrite: bool = False) -> RenderTool:
    return RenderTool(split=split, profile=profile, overwrite=overwrite)


def create_dump_masks_tool(pixels: int = 0, seed: int = 0, overwrite: bool = False) -> DumpMasksTool:
    return DumpMasksTool(pixels=pixels, seed=seed, overwrite=overwrite)
