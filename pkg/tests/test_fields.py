"""Neural and analytic fields: encoding, sphere init, gradients, checkpoint payloads."""
import math
import sys
from pathlib import Path

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import pytest
import torch

from utils.errors import NonFiniteFieldError, ValidationError
from utils.fields import AnalyticField, Embedder, FieldSpec, NeuralField, field_payload, field_from_payload, load_field, save_field
from utils.primitives import Sphere


def _points(n=64, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return (torch.rand(n, 3, generator=g, dtype=torch.float64) * 1.6 - 0.8).to(dtype)


def test_embedder_keeps_identity():
    emb = Embedder(6)
    x = _points(5)
    out = emb(x)
    assert emb.out_dim == 39
    assert out.shape == (5, 39)
    assert torch.equal(out[:, :3], x)
    assert torch.equal(Embedder(0)(x), x)


def test_field_preset_unknown():
    with pytest.raises(ValidationError):
        FieldSpec.preset("huge")
    assert FieldSpec.preset("tiny").geo_width == 64


def test_sphere_init_sign():
    field = NeuralField(FieldSpec(), seed=0)
    x = torch.tensor([[0.0, 0.0, 0.0], [0.1, 0.1, 0.0], [0.9, 0.0, 0.0], [0.0, -0.95, 0.1]])
    with torch.no_grad():
        sdf = field.sdf(x)
    expected = torch.linalg.norm(x, dim=-1) - 0.5
    assert torch.all(torch.sign(sdf) == torch.sign(expected))
    assert torch.allclose(sdf, expected, atol=0.15)


def test_sphere_init_gradient_norm_near_surface():
    field = NeuralField(FieldSpec(), seed=0)
    g = torch.Generator().manual_seed(0)
    dirs = torch.nn.functional.normalize(torch.randn(1000, 3, generator=g), dim=-1)
    radii = 0.5 + 0.2 * torch.rand(1000, 1, generator=g) - 0.1
    norms = torch.linalg.norm(field.sdf_gradient(dirs * radii), dim=-1)
    assert abs(norms.mean().item() - 1.0) < 0.1


def test_inside_out_init_flips_sign():
    field = NeuralField(FieldSpec(inside_out=True), seed=0)
    x = torch.tensor([[0.0, 0.0, 0.0], [0.9, 0.0, 0.0]])
    with torch.no_grad():
        sdf = field.sdf(x)
    assert sdf[0] > 0.0 and sdf[1] < 0.0


def test_initialize_sphere_validation():
    field = NeuralField(FieldSpec.preset("tiny"), seed=0)
    with pytest.raises(ValidationError):
        field.initialize_sphere(radius=1.5)
    field.initialize_sphere(radius=0.3, inside_out=True)
    assert field.spec.inside_out and field.spec.init_radius == 0.3


def test_seeded_init_is_reproducible():
    a = NeuralField(FieldSpec.preset("tiny"), seed=3)
    b = NeuralField(FieldSpec.preset("tiny"), seed=3)
    x = _points(16)
    with torch.no_grad():
        assert torch.equal(a.sdf(x), b.sdf(x))


def test_sharpness_from_variance():
    field = NeuralField(FieldSpec.preset("tiny", init_variance=0.3), seed=0)
    assert field.sharpness().item() == pytest.approx(math.exp(3.0), rel=1e-5)


def test_gradient_matches_finite_differences():
    field = NeuralField(FieldSpec.preset("tiny"), seed=1).double()
    x = _points(8, dtype=torch.float64)
    grad = field.sdf_gradient(x)
    eps = 1e-6
    with torch.no_grad():
        for k in range(3):
            step = torch.zeros(3, dtype=torch.float64)
            step[k] = eps
            fd = (field.sdf(x + step) - field.sdf(x - step)) / (2 * eps)
            assert torch.allclose(grad[:, k], fd, atol=1e-5)


def test_analytic_sphere_gradient_is_unit_radial():
    field = AnalyticField(Sphere(radius=0.5))
    x = _points(32, dtype=torch.float64)
    grad = field.sdf_gradient(x)
    assert torch.allclose(grad, x / torch.linalg.norm(x, dim=-1, keepdim=True), atol=1e-10)


def test_color_needs_unit_directions():
    field = NeuralField(FieldSpec.preset("tiny"), seed=0)
    x = _points(4)
    with pytest.raises(ValidationError):
        field.color(x, torch.full((4, 3), 1.0))
    dirs = torch.nn.functional.normalize(torch.randn(4, 3, generator=torch.Generator().manual_seed(0)), dim=-1)
    rgb = field.color(x, dirs)
    assert rgb.shape == (4, 3)
    assert torch.all((rgb >= 0.0) & (rgb <= 1.0))


def test_non_finite_query_raises():
    field = AnalyticField(Sphere(radius=0.5))
    with pytest.raises(NonFiniteFieldError):
        field.sdf(torch.tensor([[float("nan"), 0.0, 0.0]], dtype=torch.float64))


def test_payload_roundtrip(tmp_path):
    field = NeuralField(FieldSpec.preset("tiny", inside_out=True), seed=2)
    save_field(field, tmp_path / "field.pt")
    again = load_field(tmp_path / "field.pt")
    x = _points(16)
    with torch.no_grad():
        assert torch.allclose(field.sdf(x), again.sdf(x))
    assert again.spec.inside_out


def test_payload_version_check():
    payload = field_payload(NeuralField(FieldSpec.preset("tiny"), seed=0))
    payload["format_version"] = 99
    with pytest.raises(ValidationError):
        field_from_payload(payload)
