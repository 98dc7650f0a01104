"""Pipeline commands: synthetic scenes, training, mesh extraction/evaluation and per-view renders."""

from tools.base import ReconTool
from tools.mesh_tool import EvalMeshTool, ExtractMeshTool, create_eval_mesh_tool, create_extract_tool
from tools.scene_tool import SyntheticSceneTool, create_scene_tool
from tools.train_tool import TrainTool, create_train_tool
from tools.view_tool import (
    DumpMasksTool,
    EvalNormalsTool,
    RenderTool,
    create_dump_masks_tool,
    create_eval_normals_tool,
    create_render_tool,
)

__all__ = [
    "ReconTool",
    "SyntheticSceneTool",
    "TrainTool",
    "ExtractMeshTool",
    "EvalMeshTool",
    "EvalNormalsTool",
    "RenderTool",
    "DumpMasksTool",
    "create_scene_tool",
    "create_train_tool",
    "create_extract_tool",
    "create_eval_mesh_tool",
    "create_eval_normals_tool",
    "create_render_tool",
    "create_dump_masks_tool",
]
