"""Command-line entry point.

    python cli/main.py make-synthetic configs/box_room.json runs/box_room
    python cli/main.py train runs/box_room runs/box_room_train --config configs/tiny.cfg
    python cli/main.py extract runs/box_room_train/checkpoints/ckpt_010000.pt runs/box_room_train/mesh.ply
    python cli/main.py eval-mesh runs/box_room_train/mesh.ply runs/box_room/gt_mesh.ply --tau 0.08

Every command prints one JSON line. Exit codes: 0 ok, 2 invalid input, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Ensure project root is on sys.path so that `utils.*` / `tools.*` work when run as a script.
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from dotenv import load_dotenv

from tools.mesh_tool import EvalMeshTool, ExtractMeshTool, scene_regions
from tools.scene_tool import SyntheticSceneTool
from tools.train_tool import TrainTool
from tools.view_tool import DumpMasksTool, EvalNormalsTool, RenderTool
from utils.errors import ReconError
from utils.train_config import parse_overrides

logger = logging.getLogger("recon")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def cmd_make_synthetic(args: argparse.Namespace) -> Dict[str, Any]:
    tool = SyntheticSceneTool(overwrite=args.overwrite)
    return tool.run(spec_file=args.spec, out_dir=args.out_dir, seed=args.seed)


def cmd_train(args: argparse.Namespace) -> Dict[str, Any]:
    tool = TrainTool(overwrite=args.overwrite, resume=args.resume, stop_at=args.stop_at, progress=not args.no_progress)
    return tool.run(args.scene_dir, args.out_dir, config_file=args.config,
                    overrides=parse_overrides(args.overrides), seed=args.seed)


def cmd_extract(args: argparse.Namespace) -> Dict[str, Any]:
    tool = ExtractMeshTool(resolution=args.resolution, chunk=args.chunk, overwrite=args.overwrite)
    return tool.run(args.checkpoint, args.out_mesh)


def cmd_eval_mesh(args: argparse.Namespace) -> Dict[str, Any]:
    tool = EvalMeshTool(threshold=args.tau, n_samples=args.samples, seed=args.seed or 0)
    regions: Optional[Dict[str, List[List[float]]]] = None
    if args.regions_from is not None:
        regions = scene_regions(args.regions_from)
    return tool.run(args.pred_mesh, args.gt_mesh, out_dir=args.out_dir, regions=regions)


def cmd_eval_normals(args: argparse.Namespace) -> Dict[str, Any]:
    tool = EvalNormalsTool(split=args.split, stride=args.stride, save_maps=args.save_maps, overwrite=args.overwrite)
    return tool.run(args.checkpoint, args.scene_dir, args.out_dir)


def cmd_render(args: argparse.Namespace) -> Dict[str, Any]:
    tool = RenderTool(split=args.split, profile=args.profile, overwrite=args.overwrite)
    return tool.run(args.checkpoint, args.out_dir, scene_dir=args.scene_dir, poses=args.poses,
                    intrinsics=args.intrinsics, width=args.width, height=args.height)


def cmd_dump_masks(args: argparse.Namespace) -> Dict[str, Any]:
    tool = DumpMasksTool(pixels=args.pixels, seed=args.seed or 0, overwrite=args.overwrite)
    return tool.run(args.checkpoint, args.out_dir, scene_dir=args.scene_dir)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Seed for every random stream of the command")
    common.add_argument("--overwrite", action="store_true", help="Replace existing outputs")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(description="Normal-prior-guided neural surface reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", parents=[common], help="Generate a synthetic scene directory")
    p.add_argument("spec", type=Path, help="JSON scene spec")
    p.add_argument("out_dir", type=Path)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("train", parents=[common], help="Train on a scene directory")
    p.add_argument("scene_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--config", type=Path, default=None, help="Flat key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="Config override (repeatable)")
    p.add_argument("--resume", action="store_true", help="Continue from the latest checkpoint in out_dir")
    p.add_argument("--stop-at", type=int, default=None, help="Stop at this iteration")
    p.add_argument("--no-progress", action="store_true", help="Hide the progress bar")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", parents=[common], help="Extract a mesh from a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("out_mesh", type=Path)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--chunk", type=int, default=64)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval-mesh", parents=[common], help="Geometry metrics of a mesh vs. ground truth")
    p.add_argument("pred_mesh", type=Path)
    p.add_argument("gt_mesh", type=Path)
    p.add_argument("--tau", type=float, default=0.05, help="Distance threshold in scene units")
    p.add_argument("--samples", type=int, default=200000)
    p.add_argument("--out-dir", type=Path, default=None, help="Report directory (default: next to pred_mesh)")
    p.add_argument("--regions-from", type=Path, default=None,
                   help="Synthetic scene directory whose recorded regions are evaluated separately")
    p.set_defaults(func=cmd_eval_mesh)

    p = sub.add_parser("eval-normals", parents=[common], help="Rendered-normal angular error vs. GT normals")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("scene_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--split", default="all", choices=["all", "train", "holdout"])
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--save-maps", action="store_true")
    p.set_defaults(func=cmd_eval_normals)

    p = sub.add_parser("render", parents=[common], help="Render views from a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--scene-dir", type=Path, default=None, help="Render this scene's views; PSNR vs. its images")
    p.add_argument("--poses", type=Path, default=None, help="Stacked 4x4 camera-to-world poses")
    p.add_argument("--intrinsics", type=Path, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--split", default="holdout", choices=["all", "train", "holdout"])
    p.add_argument("--profile", type=int, default=0, metavar="N", help="Dump weight profiles of N rays")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("dump-masks", parents=[common], help="Write prior-state mask images")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--scene-dir", type=Path, default=None)
    p.add_argument("--pixels", type=int, default=0, metavar="N", help="Dump NCC scores of N sampled pixels")
    p.set_defaults(func=cmd_dump_masks)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, force=True)
    try:
        result = args.func(args)
    except ReconError as e:
        logger.error("%s failed: %s", args.command, e)
        print(json.dumps({"status": "error", "code": e.code, "message": str(e)}, ensure_ascii=False))
        return e.exit_code
    except Exception as e:
        logger.exception("%s failed", args.command)
        print(json.dumps({"status": "error", "code": "runtime", "message": str(e)}, ensure_ascii=False))
        return 3
    print(json.dumps({"status": "ok", **result}, ensure_ascii=False, default=str))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
