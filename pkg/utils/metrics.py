"""Evaluation metrics: mesh accuracy / completeness / F-score, normal angular error, PSNR.

Reports are pydantic models; `write_reports` emits them as CSV plus a plain-text table
whose column names follow the usual reconstruction tables (Accu, Comp, Prec, Recall, F-score;
Mean, Median, RMSE, 11.25°, 22.5°, 30°).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

# Ensure project root is on sys.path so that `utils.*` works when run as a script.
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import pandas as pd
import trimesh
from pydantic import BaseModel, Field

from utils.errors import ValidationError
from utils.seeding import stream_seed

logger = logging.getLogger(__name__)

DISTANCE_SENTINEL = float("inf")
PSNR_SENTINEL = float("inf")
ANGLE_THRESHOLDS = (11.25, 22.5, 30.0)
QUERY_CHUNK = 50000


class GeometryReport(BaseModel):
    accu: float = Field(description="mean distance pred samples -> gt surface")
    comp: float = Field(description="mean distance gt samples -> pred surface")
    prec: float
    recall: float
    fscore: float
    chamfer: float = Field(description="(accu + comp) / 2")
    threshold: float
    n_pred: int = 0
    n_gt: int = 0

    def row(self) -> Dict[str, float]:
        return {
            "Accu": self.accu,
            "Comp": self.comp,
            "Prec": self.prec,
            "Recall": self.recall,
            "F-score": self.fscore,
            "Chamfer": self.chamfer,
            "tau": self.threshold,
            "n_pred": self.n_pred,
            "n_gt": self.n_gt,
        }


class NormalReport(BaseModel):
    mean: float
    median: float
    rmse: float
    within_11_25: float = Field(description="% of pixels with error < 11.25 deg")
    within_22_5: float
    within_30: float
    count: int

    def row(self) -> Dict[str, float]:
        return {
            "Mean": self.mean,
            "Median": self.median,
            "RMSE": self.rmse,
            "11.25°": self.within_11_25,
            "22.5°": self.within_22_5,
            "30°": self.within_30,
            "count": self.count,
        }


def fscore(prec: float, recall: float) -> float:
    return 2.0 * prec * recall / (prec + recall) if prec + recall > 0 else 0.0


def sample_mesh(mesh: trimesh.Trimesh, n_samples: int, seed: int) -> np.ndarray:
    """Area-uniform surface samples."""
    points, _ = trimesh.sample.sample_surface(mesh, n_samples, seed=seed)
    return np.asarray(points, dtype=np.float64)


def surface_distance(points: np.ndarray, mesh: trimesh.Trimesh) -> np.ndarray:
    """Exact point-to-triangle distance from each point to `mesh`, queried in chunks."""
    out = np.empty(len(points), dtype=np.float64)
    for start in range(0, len(points), QUERY_CHUNK):
        _, dist, _ = trimesh.proximity.closest_point(mesh, points[start: start + QUERY_CHUNK])
        out[start: start + QUERY_CHUNK] = dist
    return out


def _is_empty(mesh: Optional[trimesh.Trimesh]) -> bool:
    return mesh is None or len(mesh.faces) == 0 or float(mesh.area) <= 0.0


def eval_mesh(pred: trimesh.Trimesh, gt: trimesh.Trimesh, threshold: float = 0.05, n_samples: int = 200000,
              seed: int = 0) -> GeometryReport:
    """Both meshes are sampled with the same seed, so swapping them swaps Accu and Comp."""
    if threshold <= 0:
        raise ValidationError("threshold must be positive")
    if _is_empty(pred) or _is_empty(gt):
        logger.warning("empty mesh in evaluation; reporting the degenerate sentinel")
        return GeometryReport(accu=DISTANCE_SENTINEL, comp=DISTANCE_SENTINEL, prec=0.0, recall=0.0, fscore=0.0,
                              chamfer=DISTANCE_SENTINEL, threshold=threshold)

    sample_seed = stream_seed(seed, "metrics")
    pred_pts = sample_mesh(pred, n_samples, sample_seed)
    gt_pts = sample_mesh(gt, n_samples, sample_seed)

    dist_pred = surface_distance(pred_pts, gt)
    dist_gt = surface_distance(gt_pts, pred)

    accu = float(np.mean(dist_pred))
    comp = float(np.mean(dist_gt))
    prec = float(np.mean(dist_pred < threshold))
    recall = float(np.mean(dist_gt < threshold))
    return GeometryReport(accu=accu, comp=comp, prec=prec, recall=recall, fscore=fscore(prec, recall),
                          chamfer=0.5 * (accu + comp), threshold=threshold, n_pred=len(pred_pts), n_gt=len(gt_pts))


def angular_errors(pred: np.ndarray, gt: np.ndarray, valid: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-pixel angle in degrees between unit normals, over valid pixels only."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise ValidationError(f"normal maps differ in shape: {pred.shape} vs {gt.shape}")
    mask = np.ones(len(pred), dtype=bool) if valid is None else np.array(valid, dtype=bool).reshape(-1)
    mask &= np.all(np.isfinite(pred), axis=-1) & np.all(np.isfinite(gt), axis=-1)
    cos = np.clip(np.sum(pred[mask] * gt[mask], axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def normal_report(errors: np.ndarray) -> NormalReport:
    if errors.size == 0:
        raise ValidationError("no valid pixels for normal evaluation")
    within = [float(np.mean(errors < t) * 100.0) for t in ANGLE_THRESHOLDS]
    return NormalReport(
        mean=float(np.mean(errors)),
        median=float(np.median(errors)),
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        within_11_25=within[0],
        within_22_5=within[1],
        within_30=within[2],
        count=int(errors.size),
    )


def eval_normals(pred: Sequence[np.ndarray] | np.ndarray, gt: Sequence[np.ndarray] | np.ndarray,
                 valid: Optional[Sequence[np.ndarray] | np.ndarray] = None) -> NormalReport:
    """Pooled over every valid pixel of every map pair."""
    preds = [pred] if isinstance(pred, np.ndarray) else list(pred)
    gts = [gt] if isinstance(gt, np.ndarray) else list(gt)
    if len(preds) != len(gts):
        raise ValidationError("different number of predicted and reference normal maps")
    masks = [None] * len(preds) if valid is None else ([valid] if isinstance(valid, np.ndarray) else list(valid))
    errors = [angular_errors(p, g, m) for p, g, m in zip(preds, gts, masks)]
    return normal_report(np.concatenate(errors) if errors else np.zeros(0))


def psnr(rendered: np.ndarray, reference: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """10 * log10(1 / MSE) for images in [0, 1]; identical images give PSNR_SENTINEL."""
    rendered = np.asarray(rendered, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if rendered.shape != reference.shape:
        raise ValidationError(f"image shapes differ: {rendered.shape} vs {reference.shape}")
    for name, img in (("rendered", rendered), ("reference", reference)):
        if img.min() < -1e-6 or img.max() > 1.0 + 1e-6:
            raise ValidationError(f"{name} image values must be in [0, 1]")
    diff = (rendered - reference) ** 2
    if mask is not None:
        diff = diff[np.asarray(mask, dtype=bool)]
        if diff.size == 0:
            raise ValidationError("no valid pixels for PSNR")
    mse = float(np.mean(diff))
    if mse == 0.0:
        return PSNR_SENTINEL
    return float(10.0 * np.log10(1.0 / mse))


def reports_frame(reports: Dict[str, BaseModel]) -> pd.DataFrame:
    rows: List[Dict] = []
    for name, report in reports.items():
        rows.append({"name": name, **report.row()})
    return pd.DataFrame(rows)


def write_reports(reports: Dict[str, BaseModel], out_dir: Path, stem: str) -> Dict[str, str]:
    """Write `<stem>.csv` and `<stem>.txt` (human-readable table)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    df = reports_frame(reports)
    csv_path = out_dir / f"{stem}.csv"
    txt_path = out_dir / f"{stem}.txt"
    df.to_csv(csv_path, index=False)
    txt_path.write_text(df.to_string(index=False, float_format=lambda x: f"{x:.4f}") + "\n", encoding="utf-8")
    return {"csv": str(csv_path), "table": str(txt_path)}


def main() -> None:
    from utils.mesher import load_mesh

    parser = argparse.ArgumentParser(description="Compare a predicted mesh with a reference mesh")
    parser.add_argument("pred", type=Path)
    parser.add_argument("gt", type=Path)
    parser.add_argument("--tau", type=float, default=0.05)
    parser.add_argument("--samples", type=int, default=200000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    report = eval_mesh(load_mesh(args.pred), load_mesh(args.gt), args.tau, args.samples, args.seed)
    print(json.dumps(report.row(), ensure_ascii=False, indent=2))


if __name__ == "__main__":
    main()
