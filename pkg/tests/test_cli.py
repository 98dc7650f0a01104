"""Command-line surface: JSON results, exit codes and a short end-to-end pipeline."""
import json
import sys
from pathlib import Path

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import pandas as pd
import pytest
import trimesh

from cli.main import run
from tools import EvalMeshTool, SyntheticSceneTool
from utils.run_manifest import MANIFEST_NAME, read_manifest

SMOKE_OVERRIDES = [
    "preset=tiny",
    "device=cpu",
    "rays_per_batch=32",
    "phase_one_iters=2",
    "total_iters=4",
    "warmup_iters=1",
    "n_coarse=8",
    "n_upsample_rounds=1",
    "n_per_round=4",
    "patch_size=5",
    "log_every=1",
    "checkpoint_every=2",
    "holdout_every=3",
]


def _last_json(capsys):
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    return json.loads(lines[-1])


def _write_spec(path: Path, **fields) -> Path:
    spec = {"scene": "box_room", "num_views": 6, "width": 24, "height": 16, **fields}
    path.write_text(json.dumps(spec), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """make-synthetic -> train -> extract on a tiny room; returns the working directory."""
    root = tmp_path_factory.mktemp("pipeline")
    spec = _write_spec(root / "spec.json", scene="box_room_pillar", corrupt_priors=True)
    codes = [run(["make-synthetic", str(spec), str(root / "scene"), "--seed", "3"])]
    argv = ["train", str(root / "scene"), str(root / "train"), "--no-progress"]
    for item in SMOKE_OVERRIDES:
        argv += ["--set", item]
    codes.append(run(argv))
    codes.append(run(["extract", str(root / "train" / "checkpoints" / "ckpt_000004.pt"),
                      str(root / "train" / "mesh.ply"), "--resolution", "32"]))
    return root, codes


def test_eval_mesh_of_identical_meshes(tmp_path, capsys):
    mesh_path = tmp_path / "sphere.ply"
    trimesh.creation.icosphere(subdivisions=2, radius=0.5).export(mesh_path)
    code = run(["eval-mesh", str(mesh_path), str(mesh_path), "--samples", "2000", "--out-dir", str(tmp_path / "eval")])
    assert code == 0
    result = _last_json(capsys)
    assert result["status"] == "ok"
    frame = pd.read_csv(tmp_path / "eval" / "geometry.csv")
    assert frame.loc[frame["name"] == "all", "F-score"].item() == 1.0
    assert (tmp_path / "eval" / MANIFEST_NAME).exists()


def test_missing_scene_exits_2(tmp_path, capsys):
    code = run(["train", str(tmp_path / "nope"), str(tmp_path / "out"), "--no-progress"])
    assert code == 2
    result = _last_json(capsys)
    assert result["status"] == "error"
    assert result["code"] == "scene_load"


def test_bad_spec_exits_2(tmp_path, capsys):
    spec = _write_spec(tmp_path / "bad.json", scene="torus")
    assert run(["make-synthetic", str(spec), str(tmp_path / "scene")]) == 2
    assert _last_json(capsys)["code"] == "validation"


def test_bad_override_exits_2(tmp_path, capsys):
    spec = _write_spec(tmp_path / "spec.json")
    assert run(["make-synthetic", str(spec), str(tmp_path / "scene")]) == 0
    capsys.readouterr()
    code = run(["train", str(tmp_path / "scene"), str(tmp_path / "out"), "--set", "prior_mode=sometimes"])
    assert code == 2
    assert _last_json(capsys)["code"] == "validation"


def test_non_empty_output_needs_overwrite(tmp_path, capsys):
    spec = _write_spec(tmp_path / "spec.json")
    assert run(["make-synthetic", str(spec), str(tmp_path / "scene")]) == 0
    assert run(["make-synthetic", str(spec), str(tmp_path / "scene")]) == 2
    assert run(["make-synthetic", str(spec), str(tmp_path / "scene"), "--overwrite"]) == 0


def test_invoke_reports_errors_as_json(tmp_path):
    result = json.loads(EvalMeshTool().invoke(pred_mesh=tmp_path / "a.ply", gt_mesh=tmp_path / "b.ply"))
    assert result == {"status": "error", "code": "validation", "message": f"mesh not found: {tmp_path / 'a.ply'}"}
    ok = json.loads(SyntheticSceneTool().invoke(spec={"scene": "plane", "num_views": 2, "width": 16, "height": 12},
                                                out_dir=tmp_path / "s"))
    assert ok["status"] == "ok" and ok["views"] == 2
    bad = json.loads(SyntheticSceneTool().invoke(spec={"num_views": 1}, out_dir=tmp_path / "t"))
    assert bad["code"] == "validation"


def test_pipeline_steps_succeed(pipeline):
    root, codes = pipeline
    assert codes == [0, 0, 0]
    assert (root / "scene" / "synthetic.json").exists()
    assert read_manifest(root / "scene").seed == 3
    checkpoints = sorted(p.name for p in (root / "train" / "checkpoints").glob("*.pt"))
    assert checkpoints == ["ckpt_000002.pt", "ckpt_000004.pt"]
    scalars = pd.read_csv(root / "train" / "logs" / "scalars.csv")
    assert scalars["step"].tolist() == [1, 2, 3, 4]
    assert (root / "train" / "config.cfg").exists()
    manifest = read_manifest(root / "train")
    assert manifest.status == "ok"
    # extract wrote into the training directory; the training record is kept in the history
    assert manifest.command == "extract"
    assert any(h.get("command") == "train" for h in manifest.history)
    assert (root / "train" / "mesh.ply").exists()


def test_pipeline_evaluations(pipeline, capsys):
    root, _ = pipeline
    ckpt = root / "train" / "checkpoints" / "ckpt_000004.pt"
    assert run(["eval-mesh", str(root / "train" / "mesh.ply"), str(root / "scene" / "gt_mesh.ply"),
                "--samples", "2000", "--tau", "0.1", "--regions-from", str(root / "scene"),
                "--out-dir", str(root / "eval")]) == 0
    frame = pd.read_csv(root / "eval" / "geometry.csv")
    assert set(frame["name"]) == {"all", "room", "pillar"}

    assert run(["eval-normals", str(ckpt), str(root / "scene"), str(root / "normals"), "--stride", "2"]) == 0
    normals = pd.read_csv(root / "normals" / "normals.csv")
    assert set(normals["name"]) == {"rendered", "prior"}

    assert run(["render", str(ckpt), str(root / "render"), "--scene-dir", str(root / "scene"), "--profile", "2"]) == 0
    result = _last_json(capsys)
    assert "psnr_mean" in result
    # holdout_every=3 on six views holds out two of them
    assert len(pd.read_csv(root / "render" / "psnr.csv")) == 2
    assert len(list((root / "render" / "color").glob("*.png"))) == 2

    assert run(["dump-masks", str(ckpt), str(root / "masks"), "--scene-dir", str(root / "scene"), "--pixels", "5"]) == 0
    assert len(list((root / "masks" / "masks").glob("*.png"))) == 6
