"""Differentiable SDF volume rendering of color, normal and depth along rays.

A ray with samples z_0 < ... < z_{n-1} has n-1 sections. Section i gets the discrete opacity

    alpha_i = clamp((Phi_s(f_i) - Phi_s(f_{i+1})) / Phi_s(f_i), 0, 1)

with Phi_s the logistic CDF of sharpness s; its color and normal are the averages of the
section endpoints and its depth is the section midpoint. Weights are T_i * alpha_i with
T_i = prod_{j<i} (1 - alpha_j).
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from utils.errors import ValidationError
from utils.fields import FieldBase
from utils.scene_data import CameraView, Ray, pixel_dirs, sphere_near_far

logger = logging.getLogger(__name__)

DEGENERATE_WEIGHT = 1e-4


@dataclass(frozen=True)
class RenderSettings:
    n_coarse: int = 64
    n_upsample_rounds: int = 4
    n_per_round: int = 16
    perturb: bool = True
    radius: float = 1.0

    @classmethod
    def preset(cls, name: str, **overrides) -> "RenderSettings":
        presets = {"full": {}, "tiny": {"n_coarse": 32, "n_upsample_rounds": 2, "n_per_round": 8}}
        if name not in presets:
            raise ValidationError(f"unknown render preset: {name!r}")
        return cls(**{**presets[name], **overrides})

    @property
    def n_samples(self) -> int:
        return self.n_coarse + self.n_upsample_rounds * self.n_per_round


@dataclass
class RenderOutput:
    color: torch.Tensor          # [B, 3]
    normal: torch.Tensor         # [B, 3] unit, world frame
    normal_raw: torch.Tensor     # [B, 3] accumulated before normalization
    depth: torch.Tensor          # [B] distance along the ray
    weight_sum: torch.Tensor     # [B]
    weights: torch.Tensor        # [B, n-1]
    alphas: torch.Tensor         # [B, n-1]
    transmittance: torch.Tensor  # [B, n-1]
    z_vals: torch.Tensor         # [B, n]
    sdf: torch.Tensor            # [B, n]
    gradients: torch.Tensor      # [B, n, 3]

    @property
    def degenerate(self) -> torch.Tensor:
        return self.weight_sum < DEGENERATE_WEIGHT


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_pdf(bins: torch.Tensor, weights: torch.Tensor, n_samples: int, det: bool = True,
               generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Inverse-CDF sampling of `n_samples` depths from piecewise-constant `weights` over `bins`."""
    weights = weights + 1e-5
    pdf = weights / torch.sum(weights, -1, keepdim=True)
    cdf = torch.cumsum(pdf, -1)
    cdf = torch.cat([torch.zeros_like(cdf[..., :1]), cdf], -1)
    if det:
        u = torch.linspace(0.5 / n_samples, 1.0 - 0.5 / n_samples, n_samples, dtype=bins.dtype, device=bins.device)
        u = u.expand(list(cdf.shape[:-1]) + [n_samples])
    else:
        u = torch.rand(list(cdf.shape[:-1]) + [n_samples], generator=generator, device=bins.device).to(bins.dtype)
    u = u.contiguous()
    inds = torch.searchsorted(cdf, u, right=True)
    below = torch.clamp(inds - 1, min=0)
    above = torch.clamp(inds, max=cdf.shape[-1] - 1)
    inds_g = torch.stack([below, above], -1)

    matched = [inds_g.shape[0], inds_g.shape[1], cdf.shape[-1]]
    cdf_g = torch.gather(cdf.unsqueeze(1).expand(matched), 2, inds_g)
    bins_g = torch.gather(bins.unsqueeze(1).expand(matched), 2, inds_g)
    denom = cdf_g[..., 1] - cdf_g[..., 0]
    denom = torch.where(denom < 1e-5, torch.ones_like(denom), denom)
    t = (u - cdf_g[..., 0]) / denom
    return bins_g[..., 0] + t * (bins_g[..., 1] - bins_g[..., 0])


def _up_sample(origins, dirs, z_vals, sdf, n_importance, inv_s, radius):
    pts = origins[:, None, :] + dirs[:, None, :] * z_vals[..., None]
    inside = (torch.linalg.norm(pts, dim=-1) < radius)
    inside = inside[:, :-1] | inside[:, 1:]
    prev_sdf, next_sdf = sdf[:, :-1], sdf[:, 1:]
    prev_z, next_z = z_vals[:, :-1], z_vals[:, 1:]
    mid_sdf = 0.5 * (prev_sdf + next_sdf)
    cos_val = (next_sdf - prev_sdf) / (next_z - prev_z + 1e-5)
    prev_cos = torch.cat([torch.zeros_like(cos_val[:, :1]), cos_val[:, :-1]], dim=-1)
    cos_val = torch.minimum(prev_cos, cos_val).clamp(-10.0, 0.0) * inside
    dist = next_z - prev_z
    prev_esti = mid_sdf - cos_val * dist * 0.5
    next_esti = mid_sdf + cos_val * dist * 0.5
    prev_cdf = torch.sigmoid(prev_esti * inv_s)
    next_cdf = torch.sigmoid(next_esti * inv_s)
    alpha = (prev_cdf - next_cdf + 1e-5) / (prev_cdf + 1e-5)
    weights = alpha * torch.cumprod(torch.cat([torch.ones_like(alpha[:, :1]), 1.0 - alpha + 1e-7], -1), -1)[:, :-1]
    return sample_pdf(z_vals, weights, n_importance, det=True).detach()


def stratified_depths(near: torch.Tensor, far: torch.Tensor, n: int, perturb: bool,
                      generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """One depth per equal bin of (near, far); bin centres unless `perturb`."""
    edges = torch.linspace(0.0, 1.0, n + 1, dtype=near.dtype, device=near.device)
    lower, width = edges[:-1], edges[1:] - edges[:-1]
    if perturb:
        u = torch.rand((near.shape[0], n), generator=generator, device=near.device).to(near.dtype)
        # keep samples strictly inside their bin
        u = u.clamp(1e-4, 1.0 - 1e-4)
    else:
        u = torch.full((near.shape[0], n), 0.5, dtype=near.dtype, device=near.device)
    frac = lower[None, :] + width[None, :] * u
    return near[:, None] + (far - near)[:, None] * frac


def sample_rays(field: FieldBase, origins: torch.Tensor, dirs: torch.Tensor, near: torch.Tensor, far: torch.Tensor,
                settings: RenderSettings, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Stratified coarse depths refined by rounds of SDF-guided up-sampling. Returns sorted [B, n] depths."""
    z_vals = stratified_depths(near, far, settings.n_coarse, settings.perturb, generator)
    if settings.n_upsample_rounds == 0:
        return z_vals
    with torch.no_grad():
        pts = origins[:, None, :] + dirs[:, None, :] * z_vals[..., None]
        sdf = field.geometry(pts)[0]
        for i in range(settings.n_upsample_rounds):
            new_z = _up_sample(origins, dirs, z_vals, sdf, settings.n_per_round, 64 * 2 ** i, settings.radius)
            new_pts = origins[:, None, :] + dirs[:, None, :] * new_z[..., None]
            new_sdf = field.geometry(new_pts)[0]
            z_vals, order = torch.sort(torch.cat([z_vals, new_z], dim=-1), dim=-1)
            sdf = torch.gather(torch.cat([sdf, new_sdf], dim=-1), 1, order)
    return z_vals


# ---------------------------------------------------------------------------
# opacity and compositing
# ---------------------------------------------------------------------------

def alphas_from_sdf(sdf: torch.Tensor, s: torch.Tensor | float) -> torch.Tensor:
    """Section opacities [..., n-1] from sdf values [..., n]."""
    if sdf.shape[-1] < 2:
        raise ValidationError("need at least 2 sdf values per ray")
    cdf = torch.sigmoid(sdf * s)
    prev_cdf, next_cdf = cdf[..., :-1], cdf[..., 1:]
    alpha = F.relu(prev_cdf - next_cdf) / prev_cdf.clamp(min=1e-6)
    return alpha.clamp(0.0, 1.0)


def transmittance(alphas: torch.Tensor) -> torch.Tensor:
    ones = torch.ones_like(alphas[..., :1])
    return torch.cumprod(torch.cat([ones, 1.0 - alphas], dim=-1), dim=-1)[..., :-1]


def composite(weights: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
    """Weighted sum over the sample axis. `values` is [..., k] or [..., k, C]."""
    if values.shape[: weights.dim()] != weights.shape:
        raise ValidationError(f"weights {tuple(weights.shape)} and values {tuple(values.shape)} do not align")
    if values.dim() == weights.dim():
        return (weights * values).sum(dim=-1)
    return (weights[..., None] * values).sum(dim=-2)


def _sections(values: torch.Tensor) -> torch.Tensor:
    return 0.5 * (values[:, :-1] + values[:, 1:])


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def render_rays(field: FieldBase, origins: torch.Tensor, dirs: torch.Tensor, near: torch.Tensor, far: torch.Tensor,
                settings: RenderSettings, generator: Optional[torch.Generator] = None,
                create_graph: bool = True) -> RenderOutput:
    if torch.any(far <= near):
        raise ValidationError("every ray needs near < far")
    z_vals = sample_rays(field, origins, dirs, near, far, settings, generator).detach()
    pts = origins[:, None, :] + dirs[:, None, :] * z_vals[..., None]
    view_dirs = dirs[:, None, :].expand(pts.shape)

    sdf, features, grads = field.sdf_and_gradient(pts, create_graph=create_graph)
    colors = field.radiance(pts, view_dirs, grads, features)

    alphas = alphas_from_sdf(sdf, field.sharpness())
    trans = transmittance(alphas)
    weights = trans * alphas

    color = composite(weights, _sections(colors))
    normal_raw = composite(weights, _sections(grads))
    depth = composite(weights, _sections(z_vals))
    normal = normal_raw / torch.linalg.norm(normal_raw, dim=-1, keepdim=True).clamp(min=1e-8)
    return RenderOutput(
        color=color,
        normal=normal,
        normal_raw=normal_raw,
        depth=depth,
        weight_sum=weights.sum(dim=-1),
        weights=weights,
        alphas=alphas,
        transmittance=trans,
        z_vals=z_vals,
        sdf=sdf,
        gradients=grads,
    )


def field_dtype_device(field: FieldBase) -> Tuple[torch.dtype, torch.device]:
    for t in itertools.chain(field.parameters(), field.buffers()):
        if t.is_floating_point():
            return t.dtype, t.device
    return torch.float32, torch.device("cpu")


def render_pixel(field: FieldBase, ray: Ray, settings: RenderSettings,
                 generator: Optional[torch.Generator] = None) -> RenderOutput:
    dtype, _ = field_dtype_device(field)
    o = torch.as_tensor(ray.origin, dtype=dtype)[None]
    d = torch.as_tensor(ray.direction, dtype=dtype)[None]
    near = torch.tensor([ray.near], dtype=dtype)
    far = torch.tensor([ray.far], dtype=dtype)
    return render_rays(field, o, d, near, far, settings, generator)


def view_rays(view: CameraView, device: str | torch.device = "cpu", dtype: torch.dtype = torch.float32,
              stride: int = 1) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Origins, unit directions and camera-frame z of directions for every `stride`-th pixel."""
    vs = torch.arange(0, view.height, stride, dtype=dtype, device=device)
    us = torch.arange(0, view.width, stride, dtype=dtype, device=device)
    vv, uu = torch.meshgrid(vs, us, indexing="ij")
    uv = torch.stack([uu, vv], dim=-1).reshape(-1, 2)
    K_inv = torch.as_tensor(view.K_inv, dtype=dtype, device=device)
    R = torch.as_tensor(view.R, dtype=dtype, device=device)
    dirs = pixel_dirs(K_inv, R, uv)
    origins = torch.as_tensor(view.center, dtype=dtype, device=device).expand(dirs.shape).contiguous()
    cam_z = (dirs @ R.T)[:, 2]
    return origins, dirs, cam_z


def render_image(field: FieldBase, view: CameraView, settings: RenderSettings, chunk: int = 1024,
                 stride: int = 1) -> Dict[str, np.ndarray]:
    """Render a whole view (deterministic sampling). Rays missing the bounding sphere stay zero."""
    settings = replace(settings, perturb=False)
    dtype, device = field_dtype_device(field)
    origins, dirs, cam_z = view_rays(view, device, dtype, stride)
    near, far = sphere_near_far(origins, dirs, settings.radius)
    valid = far > near + 1e-6

    n = origins.shape[0]
    out = {
        "color": torch.zeros(n, 3, dtype=dtype, device=device),
        "normal": torch.zeros(n, 3, dtype=dtype, device=device),
        "depth": torch.zeros(n, dtype=dtype, device=device),
        "weight_sum": torch.zeros(n, dtype=dtype, device=device),
    }
    idx = torch.nonzero(valid).squeeze(-1)
    for start in range(0, idx.numel(), chunk):
        sel = idx[start:start + chunk]
        res = render_rays(field, origins[sel], dirs[sel], near[sel], far[sel], settings, create_graph=False)
        out["color"][sel] = res.color.detach()
        out["normal"][sel] = res.normal.detach()
        out["depth"][sel] = res.depth.detach()
        out["weight_sum"][sel] = res.weight_sum.detach()

    h = (view.height + stride - 1) // stride
    w = (view.width + stride - 1) // stride
    R = torch.as_tensor(view.R, dtype=dtype, device=device)
    images = {
        "color": out["color"].reshape(h, w, 3),
        "normal": out["normal"].reshape(h, w, 3),
        "normal_cam": (out["normal"] @ R.T).reshape(h, w, 3),
        "depth": out["depth"].reshape(h, w),
        "z_depth": (out["depth"] * cam_z).reshape(h, w),
        "weight_sum": out["weight_sum"].reshape(h, w),
    }
    return {k: v.cpu().numpy() for k, v in images.items()}


def weight_profiles(output: RenderOutput, ray_ids: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Per-ray, per-section rows: depth, sdf at the section start, alpha, transmittance, weight."""
    z = output.z_vals.detach().cpu().numpy()
    mids = 0.5 * (z[:, :-1] + z[:, 1:])
    sdf = output.sdf.detach().cpu().numpy()[:, :-1]
    alphas = output.alphas.detach().cpu().numpy()
    trans = output.transmittance.detach().cpu().numpy()
    weights = output.weights.detach().cpu().numpy()
    rays = np.arange(z.shape[0]) if ray_ids is None else np.asarray(ray_ids)
    n_sec = mids.shape[1]
    return pd.DataFrame(
        {
            "ray": np.repeat(rays, n_sec),
            "section": np.tile(np.arange(n_sec), z.shape[0]),
            "depth": mids.reshape(-1),
            "sdf": sdf.reshape(-1),
            "alpha": alphas.reshape(-1),
            "transmittance": trans.reshape(-1),
            "weight": weights.reshape(-1),
        }
    )
