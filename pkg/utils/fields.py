"""Scene representation: SDF geometry network + view-dependent color network.

Both the trainable `NeuralField` and the closed-form `AnalyticField` expose:
    sdf(x)                      -> [...]
    sdf_gradient(x)             -> [..., 3]   (autograd, exact)
    color(x, v)                 -> [..., 3]   in [0, 1]
    sdf_and_gradient(x)         -> (sdf, features, gradient), used by the renderer
    radiance(x, v, n, features) -> rgb, used by the renderer
    sharpness()                 -> s > 0 of the logistic density
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils.parametrizations import weight_norm

from utils.errors import NonFiniteFieldError, ValidationError
from utils.primitives import Primitive

logger = logging.getLogger(__name__)

FIELD_FORMAT_VERSION = 1


class Embedder(nn.Module):
    """[x, sin(2^k x), cos(2^k x)] for k < num_freqs; the raw coordinate comes first."""

    def __init__(self, num_freqs: int, input_dims: int = 3):
        super().__init__()
        self.num_freqs = num_freqs
        self.input_dims = input_dims
        self.register_buffer("freq_bands", 2.0 ** torch.arange(num_freqs, dtype=torch.float32), persistent=False)

    @property
    def out_dim(self) -> int:
        return self.input_dims * (1 + 2 * self.num_freqs)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.num_freqs == 0:
            return x
        scaled = x[..., None, :] * self.freq_bands.to(x.dtype)[:, None]
        scaled = scaled.reshape(*x.shape[:-1], -1)
        return torch.cat([x, torch.sin(scaled), torch.cos(scaled)], dim=-1)


@dataclass
class FieldSpec:
    geo_width: int = 256
    geo_layers: int = 8
    color_width: int = 256
    color_layers: int = 6
    feature_dim: int = 256
    pos_freqs: int = 6
    dir_freqs: int = 4
    skip_in: Tuple[int, ...] = (4,)
    init_radius: float = 0.5
    inside_out: bool = False
    init_variance: float = 0.3
    weight_norm: bool = True

    @classmethod
    def preset(cls, name: str, **overrides) -> "FieldSpec":
        presets = {
            "full": {},
            "tiny": {
                "geo_width": 64,
                "geo_layers": 4,
                "color_width": 64,
                "color_layers": 3,
                "feature_dim": 64,
                "skip_in": (),
            },
        }
        if name not in presets:
            raise ValidationError(f"unknown field preset: {name!r}")
        values = {**presets[name], **overrides}
        return cls(**values)


class FieldBase(nn.Module):
    """Shared query API; subclasses implement `geometry`, `radiance` and `sharpness`."""

    def geometry(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        raise NotImplementedError

    def radiance(self, x: torch.Tensor, dirs: torch.Tensor, normals: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def sharpness(self) -> torch.Tensor:
        raise NotImplementedError

    def sdf_and_gradient(self, x: torch.Tensor, create_graph: bool = True) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        with torch.enable_grad():
            if not x.requires_grad:
                x = x.detach().requires_grad_(True)
            sdf, features = self.geometry(x)
            (grad,) = torch.autograd.grad(
                sdf,
                x,
                grad_outputs=torch.ones_like(sdf),
                create_graph=create_graph,
                retain_graph=create_graph,
            )
        return sdf, features, grad

    @staticmethod
    def _checked(name: str, out: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(out).all():
            raise NonFiniteFieldError(f"{name} produced non-finite values")
        return out

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        return self._checked("sdf", self.geometry(x)[0])

    def sdf_gradient(self, x: torch.Tensor) -> torch.Tensor:
        return self._checked("sdf gradient", self.sdf_and_gradient(x, create_graph=False)[2])

    def color(self, x: torch.Tensor, dirs: torch.Tensor) -> torch.Tensor:
        norms = torch.linalg.norm(dirs, dim=-1)
        if (norms - 1.0).abs().max() > 1e-5:
            raise ValidationError("view directions must be unit length")
        _, features, grad = self.sdf_and_gradient(x, create_graph=False)
        return self._checked("color", self.radiance(x, dirs, grad, features))


class NeuralField(FieldBase):
    def __init__(self, spec: Optional[FieldSpec] = None, seed: Optional[int] = None):
        super().__init__()
        self.spec = spec or FieldSpec()
        self.pos_embed = Embedder(self.spec.pos_freqs)
        self.dir_embed = Embedder(self.spec.dir_freqs)
        self.variance = nn.Parameter(torch.tensor(self.spec.init_variance))
        self.activation = nn.Softplus(beta=100)
        self._seed = seed
        self._build(self.spec.init_radius, self.spec.inside_out)

    def _build(self, radius: float, inside_out: bool) -> None:
        if self._seed is None:
            self._make_layers(radius, inside_out)
            return
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self._seed)
            self._make_layers(radius, inside_out)

    def _make_layers(self, radius: float, inside_out: bool) -> None:
        spec = self.spec
        d_in = self.pos_embed.out_dim
        dims = [d_in] + [spec.geo_width] * spec.geo_layers + [1 + spec.feature_dim]
        geo = nn.ModuleList()
        for l in range(len(dims) - 1):
            out_dim = dims[l + 1] - d_in if (l + 1) in spec.skip_in else dims[l + 1]
            lin = nn.Linear(dims[l], out_dim)
            # geometric init: sdf starts close to a sphere of `radius`
            if l == len(dims) - 2:
                sign = -1.0 if inside_out else 1.0
                nn.init.normal_(lin.weight, mean=sign * np.sqrt(np.pi) / np.sqrt(dims[l]), std=1e-4)
                nn.init.constant_(lin.bias, -sign * radius)
            elif l == 0:
                nn.init.constant_(lin.bias, 0.0)
                nn.init.constant_(lin.weight[:, 3:], 0.0)
                nn.init.normal_(lin.weight[:, :3], 0.0, np.sqrt(2) / np.sqrt(out_dim))
            elif l in spec.skip_in:
                nn.init.constant_(lin.bias, 0.0)
                nn.init.normal_(lin.weight, 0.0, np.sqrt(2) / np.sqrt(out_dim))
                nn.init.constant_(lin.weight[:, -(d_in - 3):], 0.0)
            else:
                nn.init.constant_(lin.bias, 0.0)
                nn.init.normal_(lin.weight, 0.0, np.sqrt(2) / np.sqrt(out_dim))
            geo.append(weight_norm(lin) if spec.weight_norm else lin)
        self.geo_layers = geo

        c_in = 3 + self.dir_embed.out_dim + 3 + spec.feature_dim
        cdims = [c_in] + [spec.color_width] * spec.color_layers + [3]
        color = nn.ModuleList()
        for l in range(len(cdims) - 1):
            lin = nn.Linear(cdims[l], cdims[l + 1])
            color.append(weight_norm(lin) if spec.weight_norm else lin)
        self.color_layers = color

    def initialize_sphere(self, radius: float = 0.5, inside_out: bool = False) -> "NeuralField":
        """Re-initialize the geometry (and color) layers so sdf(x) ~ |x| - radius (or radius - |x|)."""
        if not 0.0 < radius < 1.0:
            raise ValidationError(f"sphere radius must be in (0, 1), got {radius}")
        self.spec = FieldSpec(**{**asdict(self.spec), "init_radius": radius, "inside_out": inside_out})
        device = self.variance.device
        dtype = self.variance.dtype
        self._build(radius, inside_out)
        self.to(device=device, dtype=dtype)
        return self

    def geometry(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        inputs = self.pos_embed(x)
        h = inputs
        last = len(self.geo_layers) - 1
        for l, lin in enumerate(self.geo_layers):
            if l in self.spec.skip_in:
                h = torch.cat([h, inputs], dim=-1) / np.sqrt(2)
            h = lin(h)
            if l < last:
                h = self.activation(h)
        return h[..., 0], h[..., 1:]

    def radiance(self, x: torch.Tensor, dirs: torch.Tensor, normals: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        h = torch.cat([x, self.dir_embed(dirs), normals, features], dim=-1)
        last = len(self.color_layers) - 1
        for l, lin in enumerate(self.color_layers):
            h = lin(h)
            if l < last:
                h = torch.relu(h)
        return torch.sigmoid(h)

    def sharpness(self) -> torch.Tensor:
        return torch.exp(self.variance * 10.0)


class AnalyticField(FieldBase):
    """Closed-form field for oracles: `scale * shape.sdf(x)` with constant or procedural color."""

    def __init__(
        self,
        shape: Primitive,
        color: Sequence[float] | Callable[[torch.Tensor, torch.Tensor], torch.Tensor] = (0.5, 0.5, 0.5),
        s: float = 64.0,
        scale: float = 1.0,
    ):
        super().__init__()
        self.shape = shape
        self._color = color
        self.scale = scale
        self.register_buffer("_s", torch.tensor(float(s), dtype=torch.float64))

    def geometry(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.scale * self.shape.sdf(x), x.new_zeros(x.shape[:-1] + (0,))

    def radiance(self, x: torch.Tensor, dirs: torch.Tensor, normals: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        if callable(self._color):
            return self._color(x, dirs).clamp(0.0, 1.0)
        return torch.as_tensor(self._color, dtype=x.dtype, device=x.device).expand(x.shape[:-1] + (3,))

    def sharpness(self) -> torch.Tensor:
        return self._s


# ---------------------------------------------------------------------------
# checkpoint IO
# ---------------------------------------------------------------------------

def field_payload(field_: NeuralField) -> Dict:
    return {
        "format_version": FIELD_FORMAT_VERSION,
        "spec": asdict(field_.spec),
        "state_dict": field_.state_dict(),
    }


def field_from_payload(payload: Dict, device: str | torch.device = "cpu") -> NeuralField:
    version = payload.get("format_version")
    if version != FIELD_FORMAT_VERSION:
        raise ValidationError(f"unsupported field format version: {version}")
    spec_dict = dict(payload["spec"])
    spec_dict["skip_in"] = tuple(spec_dict.get("skip_in", ()))
    field_ = NeuralField(FieldSpec(**spec_dict))
    field_.load_state_dict(payload["state_dict"])
    return field_.to(device)


def save_field(field_: NeuralField, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(field_payload(field_), path)


def load_field(path: Path, device: str | torch.device = "cpu") -> NeuralField:
    payload = torch.load(path, map_location=device, weights_only=False)
    if "field" in payload:
        payload = payload["field"]
    return field_from_payload(payload, device)
