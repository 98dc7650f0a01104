"""Multi-view photometric check of normal priors.

For a pixel q of reference view i with rendered depth d (along the ray) and normal n (reference
camera frame), the local plane {p | p.n = d v.n} induces a homography into each neighbor j.
An 11x11 luminance patch around q is warped through it and compared with zero-mean NCC.
The prior at q is kept when the NCC sum over valid neighbors reaches `threshold * J_valid`;
otherwise it is rejected for good.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from PIL import Image

from utils.errors import DegeneratePlaneError, MaskContractError, ValidationError
from utils.scene_data import CameraView, Scene, select_neighbor_views

logger = logging.getLogger(__name__)

UNTESTED, ACCEPTED, REJECTED = 0, 1, 2
STATE_NAMES = {UNTESTED: "untested", ACCEPTED: "accepted", REJECTED: "rejected"}
PLANE_EPS = 1e-4
STD_FLOOR = 1e-3
_LUMA = (0.299, 0.587, 0.114)


# ---------------------------------------------------------------------------
# plane-induced homography
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneHypothesis:
    """Plane through d*v with normal n, all in the reference camera frame."""

    normal: np.ndarray
    depth: float
    view_dir: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        v = np.asarray(self.view_dir, dtype=np.float64)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))
        object.__setattr__(self, "view_dir", v / np.linalg.norm(v))
        if self.depth <= 0.0:
            raise ValidationError("plane depth must be positive")

    @property
    def offset(self) -> float:
        return float(self.depth * (self.view_dir @ self.normal))


def relative_pose(R_i, t_i, R_j, t_j):
    """Pose of camera j relative to camera i: x_j = R_rel x_i + t_rel."""
    R_rel = R_j @ R_i.transpose(-1, -2)
    t_rel = t_j - (R_rel @ t_i[..., None])[..., 0]
    return R_rel, t_rel


def homography(view_i: CameraView, view_j: CameraView, hypothesis: PlaneHypothesis) -> np.ndarray:
    """3x3 map from homogeneous pixels of view i to view j induced by the hypothesis plane."""
    n, v = hypothesis.normal, hypothesis.view_dir
    if abs(v @ n) < PLANE_EPS:
        raise DegeneratePlaneError("plane is parallel to the viewing ray")
    R_rel, t_rel = relative_pose(view_i.R, view_i.t, view_j.R, view_j.t)
    H = view_j.K @ (R_rel + np.outer(t_rel, n) / hypothesis.offset) @ view_i.K_inv
    return H / H[2, 2] if abs(H[2, 2]) > 1e-12 else H


def homographies(K_i: torch.Tensor, K_i_inv: torch.Tensor, R_i: torch.Tensor, t_i: torch.Tensor,
                 K_j: torch.Tensor, R_j: torch.Tensor, t_j: torch.Tensor,
                 normals: torch.Tensor, depths: torch.Tensor, view_dirs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Batched homographies [B, 3, 3] and a degenerate-plane mask [B]."""
    vn = (view_dirs * normals).sum(-1)
    degenerate = vn.abs() < PLANE_EPS
    offset = depths * torch.where(degenerate, torch.ones_like(vn), vn)
    R_rel, t_rel = relative_pose(R_i, t_i, R_j, t_j)
    M = R_rel + t_rel[:, :, None] * normals[:, None, :] / offset[:, None, None]
    return K_j @ M @ K_i_inv, degenerate


# ---------------------------------------------------------------------------
# NCC
# ---------------------------------------------------------------------------

def luminance(image: np.ndarray | torch.Tensor):
    weights = _LUMA
    return image[..., 0] * weights[0] + image[..., 1] * weights[1] + image[..., 2] * weights[2]


def patch_offsets(patch_size: int, dtype=torch.float32, device="cpu") -> torch.Tensor:
    if patch_size < 3 or patch_size % 2 == 0:
        raise ValidationError("patch size must be odd and >= 3")
    r = patch_size // 2
    ys, xs = torch.meshgrid(
        torch.arange(-r, r + 1, dtype=dtype, device=device),
        torch.arange(-r, r + 1, dtype=dtype, device=device),
        indexing="ij",
    )
    return torch.stack([xs, ys], dim=-1).reshape(-1, 2)


def bilinear(image: torch.Tensor, coords: torch.Tensor) -> torch.Tensor:
    """Sample a [H, W] image at pixel coordinates [..., 2] (x = column, y = row, centres at integers)."""
    h, w = image.shape
    gx = 2.0 * coords[..., 0] / (w - 1) - 1.0
    gy = 2.0 * coords[..., 1] / (h - 1) - 1.0
    grid = torch.stack([gx, gy], dim=-1).reshape(1, -1, 1, 2).to(image.dtype)
    out = F.grid_sample(image[None, None], grid, mode="bilinear", padding_mode="border", align_corners=True)
    return out.reshape(coords.shape[:-1])


def in_bounds(coords: torch.Tensor, height: int, width: int) -> torch.Tensor:
    x, y = coords[..., 0], coords[..., 1]
    return (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)


def zncc(ref: torch.Tensor, src: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Zero-mean NCC over the last axis. Returns (scores in [-1, 1], patches with enough variance)."""
    a = ref - ref.mean(dim=-1, keepdim=True)
    b = src - src.mean(dim=-1, keepdim=True)
    var_a = (a * a).mean(dim=-1)
    var_b = (b * b).mean(dim=-1)
    textured = (var_a.sqrt() >= STD_FLOOR) & (var_b.sqrt() >= STD_FLOOR)
    denom = torch.sqrt((a * a).sum(-1) * (b * b).sum(-1)).clamp(min=1e-12)
    return ((a * b).sum(-1) / denom).clamp(-1.0, 1.0), textured


def warp_patch_scores(ref_lum: torch.Tensor, src_lum: torch.Tensor, centers: torch.Tensor, H: torch.Tensor,
                      patch_size: int) -> Tuple[torch.Tensor, torch.Tensor]:
    """NCC of reference patches around `centers` [B, 2] against their warps through `H` [B, 3, 3]."""
    offsets = patch_offsets(patch_size, ref_lum.dtype, ref_lum.device)
    ref_xy = centers[:, None, :] + offsets[None, :, :]
    homog = torch.cat([ref_xy, torch.ones_like(ref_xy[..., :1])], dim=-1)
    warped = (H[:, None, :, :] @ homog[..., None])[..., 0]
    in_front = warped[..., 2] > 1e-8
    src_xy = warped[..., :2] / torch.where(in_front, warped[..., 2], torch.ones_like(warped[..., 2]))[..., None]

    valid = in_front.all(-1)
    valid &= in_bounds(ref_xy, *ref_lum.shape).all(-1)
    valid &= in_bounds(src_xy, *src_lum.shape).all(-1)
    ref_patch = bilinear(ref_lum, ref_xy)
    src_patch = bilinear(src_lum, src_xy)
    scores, textured = zncc(ref_patch, src_patch)
    return scores, valid & textured


def ncc(view_i: CameraView, view_j: CameraView, q: Sequence[float], patch_size: int, H: np.ndarray) -> Optional[float]:
    """Score in [-1, 1], or None when the neighbor is invalid for this pixel."""
    ref = torch.from_numpy(luminance(view_i.image).astype(np.float64))
    src = torch.from_numpy(luminance(view_j.image).astype(np.float64))
    centers = torch.tensor([list(q)], dtype=torch.float64)
    scores, valid = warp_patch_scores(ref, src, centers, torch.from_numpy(np.asarray(H, dtype=np.float64))[None], patch_size)
    return float(scores[0]) if bool(valid[0]) else None


def decide(scores: Sequence[Optional[float]], threshold: float) -> Optional[int]:
    """1 if the sum of valid scores reaches threshold * (number of valid scores), 0 if not, None if none valid."""
    valid = [s for s in scores if s is not None]
    if not valid:
        return None
    return int(sum(valid) >= threshold * len(valid))


def evaluate_indicator(scene: Scene, view_index: int, q: Sequence[float], normal_cam: np.ndarray, depth: float,
                       neighbors: Sequence[int], threshold: float = 0.6, patch_size: int = 11) -> Optional[int]:
    """Indicator for one pixel; `normal_cam` is the rendered normal in the reference camera frame.

    Returns None (pixel stays untested) when no neighbor yields a valid score.
    """
    view_i = scene.views[view_index]
    v = view_i.K_inv @ np.array([q[0], q[1], 1.0])
    scores: List[Optional[float]] = []
    for j in neighbors:
        try:
            hyp = PlaneHypothesis(normal=normal_cam, depth=depth, view_dir=v)
            H = homography(view_i, scene.views[j], hyp)
        except (DegeneratePlaneError, ValidationError):
            scores.append(None)
            continue
        scores.append(ncc(view_i, scene.views[j], q, patch_size, H))
    return decide(scores, threshold)


class GeoChecker:
    """Batched check over a whole scene; tensors live on one device."""

    def __init__(self, scene: Scene, num_neighbors: int = 2, patch_size: int = 11, threshold: float = 0.6,
                 device: str | torch.device = "cpu", dtype: torch.dtype = torch.float32,
                 view_ids: Optional[Sequence[int]] = None):
        self.patch_size = patch_size
        self.threshold = threshold
        self.device = torch.device(device)
        views = scene.views
        ids = list(range(len(views))) if view_ids is None else list(view_ids)
        as_t = lambda a: torch.as_tensor(np.stack(a), dtype=dtype, device=self.device)
        self.lum = as_t([luminance(v.image) for v in views])
        self.K = as_t([v.K for v in views])
        self.K_inv = as_t([v.K_inv for v in views])
        self.R = as_t([v.R for v in views])
        self.t = as_t([v.t for v in views])
        neighbors = np.zeros((len(views), num_neighbors), dtype=np.int64)
        sub = Scene(views=[views[i] for i in ids])
        for k, i in enumerate(ids):
            neighbors[i] = [ids[j] for j in select_neighbor_views(sub, k, num_neighbors)]
        self.neighbors = torch.as_tensor(neighbors, device=self.device)

    def scores(self, view_idx: torch.Tensor, uv: torch.Tensor, normal_cam: torch.Tensor,
               depth: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """NCC scores and validity, each [B, J]."""
        view_idx = view_idx.to(self.device)
        uv = uv.to(self.device, self.lum.dtype)
        normal_cam = F.normalize(normal_cam.to(self.device, self.lum.dtype), dim=-1)
        depth = depth.to(self.device, self.lum.dtype)
        homog = torch.cat([uv, torch.ones_like(uv[:, :1])], dim=-1)
        v = F.normalize((self.K_inv[view_idx] @ homog[..., None])[..., 0], dim=-1)

        nbrs = self.neighbors[view_idx]
        B, J = nbrs.shape
        scores = torch.zeros(B, J, dtype=self.lum.dtype, device=self.device)
        valid = torch.zeros(B, J, dtype=torch.bool, device=self.device)
        for k in range(J):
            j = nbrs[:, k]
            H, degenerate = homographies(
                self.K[view_idx], self.K_inv[view_idx], self.R[view_idx], self.t[view_idx],
                self.K[j], self.R[j], self.t[j], normal_cam, depth, v,
            )
            ok = ~degenerate & (depth > 0)
            # group by (reference, source) image pair
            pairs = torch.stack([view_idx, j], dim=-1)
            for pair in torch.unique(pairs, dim=0):
                sel = torch.nonzero((pairs == pair).all(-1) & ok).squeeze(-1)
                if sel.numel() == 0:
                    continue
                s, good = warp_patch_scores(self.lum[pair[0]], self.lum[pair[1]], uv[sel], H[sel], self.patch_size)
                scores[sel, k] = s
                valid[sel, k] = good
        return scores, valid

    def indicator(self, view_idx: torch.Tensor, uv: torch.Tensor, normal_cam: torch.Tensor,
                  depth: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Per-pixel indicator [B] (1 keep, 0 reject, -1 no valid neighbor) plus scores and validity."""
        scores, valid = self.scores(view_idx, uv, normal_cam, depth)
        n_valid = valid.sum(-1)
        total = (scores * valid).sum(-1)
        keep = (total >= self.threshold * n_valid).to(torch.int8)
        out = torch.where(n_valid > 0, keep, torch.full_like(keep, -1))
        return out, scores, valid


# ---------------------------------------------------------------------------
# persistent mask
# ---------------------------------------------------------------------------

class PriorMask:
    """Per-view, per-pixel prior state. REJECTED is absorbing; updates are applied by one writer."""

    def __init__(self, num_views: int, height: int, width: int, states: Optional[np.ndarray] = None):
        if states is None:
            states = np.full((num_views, height, width), UNTESTED, dtype=np.int8)
        if states.shape != (num_views, height, width):
            raise ValidationError(f"mask states shape {states.shape} != {(num_views, height, width)}")
        self.states = states.astype(np.int8, copy=True)

    @classmethod
    def for_scene(cls, scene: Scene) -> "PriorMask":
        return cls(len(scene.views), scene.views[0].height, scene.views[0].width)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.states.shape

    def state(self, view: int, q: Sequence[int]) -> int:
        return int(self.states[view, int(q[1]), int(q[0])])

    def set_state(self, view: int, q: Sequence[int], new_state: int) -> None:
        if new_state not in STATE_NAMES:
            raise ValidationError(f"unknown mask state {new_state}")
        current = self.state(view, q)
        if current == REJECTED and new_state != REJECTED:
            raise MaskContractError(f"view {view} pixel {tuple(q)} is rejected and cannot become {STATE_NAMES[new_state]}")
        self.states[view, int(q[1]), int(q[0])] = new_state

    def apply(self, view_idx: np.ndarray, u: np.ndarray, v: np.ndarray, indicator: np.ndarray) -> int:
        """Apply a batch of indicators (1 keep, 0 reject, -1 untested). Returns newly rejected count."""
        view_idx, u, v, indicator = (np.asarray(a).astype(np.int64) for a in (view_idx, u, v, indicator))
        current = self.states[view_idx, v, u]
        tested = indicator >= 0
        new = np.where(indicator == 0, REJECTED, ACCEPTED)
        new = np.where(current == REJECTED, REJECTED, new)
        before = int((self.states == REJECTED).sum())
        # duplicates within a batch: a rejection wins
        order = np.argsort(new[tested] == REJECTED, kind="stable")
        self.states[view_idx[tested][order], v[tested][order], u[tested][order]] = new[tested][order]
        return int((self.states == REJECTED).sum()) - before

    def omega(self, view_idx: torch.Tensor, u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        states = torch.from_numpy(self.states[view_idx.cpu().numpy(), v.cpu().numpy(), u.cpu().numpy()])
        return (states != REJECTED).to(view_idx.device)

    def counts(self) -> Dict[str, int]:
        return {name: int((self.states == s).sum()) for s, name in STATE_NAMES.items()}

    @property
    def rejected_count(self) -> int:
        return int((self.states == REJECTED).sum())

    def to_image(self, view: int) -> np.ndarray:
        img = np.full(self.states.shape[1:], 128, dtype=np.uint8)
        img[self.states[view] == ACCEPTED] = 255
        img[self.states[view] == REJECTED] = 0
        return img

    def save_images(self, out_dir: Path, names: Optional[Sequence[str]] = None) -> List[Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in range(self.states.shape[0]):
            name = names[k] if names is not None else f"{k:06d}"
            path = out_dir / f"{name}.png"
            Image.fromarray(self.to_image(k)).save(path)
            paths.append(path)
        return paths


def update_prior_mask(mask: PriorMask, view: int, q: Sequence[int], indicator: Optional[int]) -> PriorMask:
    if indicator is None:
        return mask
    current = mask.state(view, q)
    if current != REJECTED:
        mask.set_state(view, q, REJECTED if indicator == 0 else ACCEPTED)
    return mask


def ncc_dump(checker: GeoChecker, view_idx: torch.Tensor, uv: torch.Tensor, normal_cam: torch.Tensor,
             depth: torch.Tensor) -> pd.DataFrame:
    """One row per (pixel, neighbor): scores, validity and the resulting indicator."""
    indicator, scores, valid = checker.indicator(view_idx, uv, normal_cam, depth)
    nbrs = checker.neighbors[view_idx.to(checker.device)]
    rows = []
    for b in range(uv.shape[0]):
        for k in range(nbrs.shape[1]):
            rows.append(
                {
                    "view": int(view_idx[b]),
                    "u": float(uv[b, 0]),
                    "v": float(uv[b, 1]),
                    "neighbor": int(nbrs[b, k]),
                    "ncc": float(scores[b, k]),
                    "valid": bool(valid[b, k]),
                    "indicator": int(indicator[b]),
                }
            )
    return pd.DataFrame(rows)
