"""Training config: flat file parsing, presets, overrides and validation."""
import sys
from pathlib import Path

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import pytest

from utils.errors import ValidationError
from utils.train_config import build_config, load_config, parse_flat, parse_overrides


def test_parse_flat_skips_comments():
    text = "# header\nrays_per_batch = 256   # per step\n\nprior_mode=no_prior\n"
    assert parse_flat(text) == {"rays_per_batch": "256", "prior_mode": "no_prior"}
    with pytest.raises(ValidationError):
        parse_flat("just words")


def test_parse_overrides():
    assert parse_overrides(["lr=1e-3", " seed = 4"]) == {"lr": "1e-3", "seed": "4"}
    with pytest.raises(ValidationError):
        parse_overrides(["lr"])


def test_tiny_preset_defaults():
    config = build_config({"preset": "tiny"})
    assert config.total_iters == 10000
    assert config.mesh_resolution == 64
    assert config.field_spec().geo_width == 64
    assert config.render_settings().n_samples == 48
    full = build_config({})
    assert full.total_iters == 160000
    assert full.render_settings().n_samples == 128
    assert full.ncc_sum_threshold == pytest.approx(1.2)


def test_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("preset = tiny\ntotal_iters = 800\nphase_one_iters = 200\nlr = 0.001\n", encoding="utf-8")
    config = load_config(path, {"lr": "0.002"})
    assert config.total_iters == 800
    assert config.lr == pytest.approx(0.002)
    assert config.rays_per_batch == 512


def test_invalid_values():
    with pytest.raises(ValidationError):
        build_config({"preset": "huge"})
    with pytest.raises(ValidationError):
        build_config({"no_such_key": "1"})
    with pytest.raises(ValidationError):
        build_config({"phase_one_iters": "10", "total_iters": "10"})
    with pytest.raises(ValidationError):
        build_config({"patch_size": "10"})
    with pytest.raises(ValidationError):
        build_config({"prior_mode": "sometimes"})
    with pytest.raises(ValidationError):
        load_config(Path("/nonexistent/run.cfg"))


def test_text_roundtrip():
    config = build_config({"preset": "tiny", "prior_mode": "prior_no_check", "n_coarse": "16", "perturb": "false"})
    again = build_config(parse_flat(config.to_text()))
    assert again == config
    assert again.render_settings().n_coarse == 16
    assert not again.render_settings().perturb


def test_field_spec_drops_out_of_range_skip():
    config = build_config({"geo_layers": "3"})
    assert config.field_spec().skip_in == ()
