"""Exception hierarchy shared by the library and the command layer."""
from __future__ import annotations


class ReconError(Exception):
    """Base error. `code` is the machine-readable tag printed by the CLI."""

    exit_code: int = 3
    code: str = "runtime"


class ValidationError(ReconError):
    exit_code = 2
    code = "validation"


class SceneLoadError(ValidationError):
    code = "scene_load"


class DegenerateSceneError(ValidationError):
    code = "degenerate_scene"


class DegeneratePlaneError(ReconError):
    """Plane hypothesis (nearly) parallel to the viewing ray."""

    code = "degenerate_plane"


class MaskContractError(ReconError):
    """Attempt to move a REJECTED prior pixel back to another state."""

    code = "mask_contract"


class NonFiniteLossError(ReconError):
    code = "non_finite"

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path


class MeshExtractionError(ReconError):
    code = "mesh_extraction"


class NonFiniteFieldError(ReconError):
    code = "non_finite_field"
