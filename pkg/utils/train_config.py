"""Training configuration: pydantic model, presets and flat `key = value` config files."""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Dict, Literal, Mapping, Optional

import pydantic
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.errors import ValidationError
from utils.fields import FieldSpec
from utils.renderer import RenderSettings

logger = logging.getLogger(__name__)

PRESETS: Dict[str, Dict[str, object]] = {
    "full": {},
    "tiny": {
        "rays_per_batch": 512,
        "phase_one_iters": 5000,
        "total_iters": 10000,
        "warmup_iters": 500,
        "checkpoint_every": 2500,
        "log_every": 50,
        "mesh_resolution": 64,
        "eval_samples": 10000,
    },
}


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: Literal["full", "tiny"] = "full"
    seed: int = 0

    rays_per_batch: int = Field(default=512, ge=1, description="m, pixels per batch")
    phase_one_iters: int = Field(default=60000, ge=0, description="iterations with every prior trusted")
    total_iters: int = Field(default=160000, ge=1)

    lambda_color: float = Field(default=1.0, ge=0.0)
    lambda_prior: float = Field(default=1.0, ge=0.0)
    lambda_eikonal: float = Field(default=0.1, ge=0.0)
    prior_mode: Literal["full", "prior_no_check", "no_prior"] = "full"

    lr: float = Field(default=5e-4, gt=0.0)
    warmup_iters: int = Field(default=5000, ge=0)
    lr_floor: float = Field(default=0.05, ge=0.0, le=1.0, description="final lr as a fraction of lr")

    # sampling; None means the preset's value
    n_coarse: Optional[int] = Field(default=None, ge=2)
    n_upsample_rounds: Optional[int] = Field(default=None, ge=0)
    n_per_round: Optional[int] = Field(default=None, ge=1)
    perturb: bool = True

    # network; None means the preset's value
    geo_width: Optional[int] = Field(default=None, ge=1)
    geo_layers: Optional[int] = Field(default=None, ge=1)
    color_width: Optional[int] = Field(default=None, ge=1)
    color_layers: Optional[int] = Field(default=None, ge=1)
    pos_freqs: Optional[int] = Field(default=None, ge=0)
    dir_freqs: Optional[int] = Field(default=None, ge=0)
    init_radius: float = Field(default=0.5, gt=0.0, lt=1.0)
    sphere_init: Literal["auto", "outside", "inside_out"] = "auto"

    patch_size: int = Field(default=11, ge=3)
    num_neighbors: int = Field(default=2, ge=1)
    ncc_threshold: float = Field(default=0.6, description="per-neighbor NCC share of the threshold")

    holdout_every: int = Field(default=0, ge=0, description="every k-th view held out; 0 keeps all")
    checkpoint_every: int = Field(default=5000, ge=1)
    log_every: int = Field(default=100, ge=1)
    mesh_resolution: int = Field(default=256, ge=16)
    eval_samples: int = Field(default=200000, ge=1)
    eval_threshold: float = Field(default=0.05, gt=0.0)

    device: str = "auto"

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        if self.phase_one_iters >= self.total_iters:
            raise ValueError("phase_one_iters must be < total_iters")
        if self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd")
        return self

    @property
    def ncc_sum_threshold(self) -> float:
        """The NCC-sum bar when all neighbors are valid."""
        return self.ncc_threshold * self.num_neighbors

    def field_spec(self) -> FieldSpec:
        overrides = {
            k: getattr(self, k)
            for k in ("geo_width", "geo_layers", "color_width", "color_layers", "pos_freqs", "dir_freqs")
            if getattr(self, k) is not None
        }
        spec = FieldSpec.preset(self.preset, init_radius=self.init_radius, **overrides)
        if spec.skip_in and max(spec.skip_in) >= spec.geo_layers:
            spec.skip_in = ()
        return spec

    def render_settings(self) -> RenderSettings:
        overrides = {
            k: getattr(self, k) for k in ("n_coarse", "n_upsample_rounds", "n_per_round") if getattr(self, k) is not None
        }
        return RenderSettings.preset(self.preset, perturb=self.perturb, **overrides)

    def resolve_device(self) -> str:
        import torch

        device = os.getenv("RECON_DEVICE", self.device) if self.device == "auto" else self.device
        if device == "auto":
            device = "cuda" if torch.cuda.is_available() else "cpu"
        return device

    def to_text(self) -> str:
        lines = [f"{k} = {v}" for k, v in self.model_dump().items() if v is not None]
        return "\n".join(lines) + "\n"


def parse_flat(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def parse_overrides(items: Optional[list]) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for item in items or []:
        if "=" not in item:
            raise ValidationError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(values: Mapping[str, object]) -> TrainConfig:
    preset = str(values.get("preset", "full"))
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset: {preset!r}")
    merged = {**PRESETS[preset], **values, "preset": preset}
    merged = {k: (None if v in ("None", "none", "") else v) for k, v in merged.items()}
    try:
        return TrainConfig(**merged)
    except pydantic.ValidationError as e:
        raise ValidationError(f"invalid config: {e}") from e


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, str]] = None) -> TrainConfig:
    """Preset defaults < config file < overrides."""
    load_dotenv()
    values: Dict[str, object] = {}
    if path is not None:
        try:
            values.update(parse_flat(Path(path).read_text(encoding="utf-8")))
        except OSError as e:
            raise ValidationError(f"cannot read config {path}: {e}") from e
    values.update(overrides or {})
    config = build_config(values)
    logger.debug("config: %s", config.model_dump())
    return config


def num_workers() -> int:
    load_dotenv()
    value = os.getenv("RECON_NUM_WORKERS")
    return int(value) if value else 0
