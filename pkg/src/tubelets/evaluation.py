"""Proposal quality against ground-truth box sequences: localization score, ABO/MABO, recall."""
from __future__ import annotations

import csv
import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tubelet import Tubelet


@dataclass(eq=False)
class GroundTruthInstance:
    video: str
    label: str
    boxes: dict[int, tuple[int, int, int, int]]   # frame -> inclusive box; missing frames are empty

    def __post_init__(self):
        self.boxes = {int(t): tuple(int(v) for v in b) for t, b in self.boxes.items() if b is not None}
        if not self.boxes:
            raise ValueError("a ground-truth instance needs at least one box")

    @classmethod
    def from_tubelet(cls, tube: Tubelet, label: str = "action") -> "GroundTruthInstance":
        return cls(tube.video, label, {int(t): tube.box(int(t)) for t in tube.frames})


BoxSeq = Mapping[int, tuple] | Tubelet | GroundTruthInstance


def _as_arrays(seq) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(seq, Tubelet):
        return seq.frames, seq.boxes.astype(np.float64)
    if isinstance(seq, GroundTruthInstance):
        seq = seq.boxes
    frames = np.array(sorted(seq), dtype=np.int64)
    boxes = np.array([seq[t] for t in frames], dtype=np.float64).reshape(-1, 4)
    return frames, boxes


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU of inclusive-coordinate boxes (areas count pixels: (x1 - x0 + 1) * (y1 - y0 + 1))."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    iw = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]) + 1
    ih = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]) + 1
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[..., 2] - a[..., 0] + 1) * (a[..., 3] - a[..., 1] + 1)
    area_b = (b[..., 2] - b[..., 0] + 1) * (b[..., 3] - b[..., 1] + 1)
    return inter / (area_a + area_b - inter)


def localization_score(gt: BoxSeq, dt: BoxSeq, spatial_only: bool = False) -> float:
    """Mean per-frame IoU over frames where either sequence has a box.

    With ``spatial_only`` the average runs over ground-truth frames only, so
    proposal frames outside the annotated span are not penalised.
    """
    fg, bg = _as_arrays(gt)
    fd, bd = _as_arrays(dt)
    if spatial_only:
        denom = len(fg)
    else:
        denom = len(np.union1d(fg, fd))
    if denom == 0:
        raise ValueError("localization score undefined: both sequences are empty")
    common, ig, id_ = np.intersect1d(fg, fd, assume_unique=True, return_indices=True)
    if common.size == 0:
        return 0.0
    return float(box_iou(bg[ig], bd[id_]).sum() / denom)


def cuboid_envelope(seq: BoxSeq) -> dict[int, tuple[int, int, int, int]]:
    """Constant box enclosing the whole sequence, over its full temporal extent."""
    frames, boxes = _as_arrays(seq)
    env = (int(boxes[:, 0].min()), int(boxes[:, 1].min()), int(boxes[:, 2].max()), int(boxes[:, 3].max()))
    return {t: env for t in range(int(frames.min()), int(frames.max()) + 1)}


class DenseTubes:
    """Proposals of one video stacked into (N, F, 4) arrays for batched scoring."""

    def __init__(self, tubes: Sequence[Tubelet], frame_count: int | None = None):
        self.tubes = list(tubes)
        if frame_count is None:
            frame_count = max((t.end + 1 for t in self.tubes), default=0)
        self.frame_count = frame_count
        n = len(self.tubes)
        self.boxes = np.zeros((n, frame_count, 4))
        self.present = np.zeros((n, frame_count), bool)
        for i, t in enumerate(self.tubes):
            self.boxes[i, t.start:t.end + 1] = t.boxes
            self.present[i, t.start:t.end + 1] = True

    def scores_against(self, seq: BoxSeq, idx: np.ndarray | None = None, spatial_only: bool = False) -> np.ndarray:
        """Localization score of ``seq`` against every (or the selected) stacked proposal."""
        frames, boxes = _as_arrays(seq)
        boxes_p = self.boxes if idx is None else self.boxes[idx]
        present = self.present if idx is None else self.present[idx]
        if len(boxes_p) == 0:
            return np.zeros(0)
        keep = frames < self.frame_count
        fr, bx = frames[keep], boxes[keep]
        iou = np.where(present[:, fr], box_iou(boxes_p[:, fr], bx[None]), 0.0).sum(axis=1)
        if spatial_only:
            denom = np.full(len(boxes_p), float(len(frames)))
        else:
            # |union of frames| = |proposal frames| + |gt frames| - |shared frames|
            denom = (present.sum(axis=1) + len(frames) - present[:, fr].sum(axis=1)).astype(np.float64)
        return iou / denom


def _by_video(pool: Iterable[Tubelet]) -> dict[str, list[Tubelet]]:
    out: dict[str, list[Tubelet]] = defaultdict(list)
    for t in pool:
        out[t.video].append(t)
    return out


def best_overlaps(gts: Sequence[GroundTruthInstance], pool: Iterable[Tubelet],
                  spatial_only: bool = False) -> np.ndarray:
    """Best localization score of each instance over proposals of the same video (0 if none)."""
    per_video = {v: DenseTubes(ts) for v, ts in _by_video(pool).items()}
    out = np.zeros(len(gts))
    for i, gt in enumerate(gts):
        dense = per_video.get(gt.video)
        if dense is not None and dense.tubes:
            out[i] = float(dense.scores_against(gt, spatial_only=spatial_only).max())
    return out


def abo(gts: Sequence[GroundTruthInstance], pool: Iterable[Tubelet], spatial_only: bool = False) -> float:
    if not gts:
        raise ValueError("ABO needs at least one ground-truth instance")
    return float(np.mean(best_overlaps(gts, pool, spatial_only)))


def _by_class(gts: Iterable[GroundTruthInstance]) -> dict[str, list[GroundTruthInstance]]:
    out: dict[str, list[GroundTruthInstance]] = defaultdict(list)
    for g in gts:
        out[g.label].append(g)
    return dict(sorted(out.items()))


def mabo(gts: Iterable[GroundTruthInstance], pool: Iterable[Tubelet]) -> float:
    pool = list(pool)
    return float(np.mean([abo(g, pool) for g in _by_class(gts).values()]))


def recall_at(gts: Iterable[GroundTruthInstance], pool: Iterable[Tubelet],
              sigma: float = 0.5) -> tuple[dict[str, float], float]:
    """Per-class fraction of instances whose best overlap exceeds ``sigma``, and the class mean."""
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    pool = list(pool)
    per_class = {c: float(np.mean(best_overlaps(g, pool) > sigma)) for c, g in _by_class(gts).items()}
    return per_class, float(np.mean(list(per_class.values()))) if per_class else 0.0


def correct_localization(gt: GroundTruthInstance, dt: BoxSeq, predicted_class: str, sigma: float = 0.5) -> bool:
    return predicted_class == gt.label and localization_score(gt, dt) > sigma


@dataclass
class EvalReport:
    abo: dict[str, float]
    mabo: float
    recall: dict[str, float]
    mean_recall: float
    sigma: float
    proposal_counts: dict[str, int]
    curve: list[tuple[float, float]] = field(default_factory=list)

    def summary(self) -> dict:
        return {"mabo": self.mabo, "mean_recall": self.mean_recall, "sigma": self.sigma,
                "abo": self.abo, "recall": self.recall, "proposal_counts": self.proposal_counts,
                "mean_proposals": float(np.mean(list(self.proposal_counts.values())))
                if self.proposal_counts else 0.0}


def evaluate(gts: Sequence[GroundTruthInstance], pool: Sequence[Tubelet], sigma: float = 0.5,
             curve_sigmas: Sequence[float] | None = None) -> EvalReport:
    pool = list(pool)
    classes = _by_class(gts)
    best = {c: best_overlaps(g, pool) for c, g in classes.items()}
    abo_c = {c: float(b.mean()) for c, b in best.items()}
    rec_c = {c: float((b > sigma).mean()) for c, b in best.items()}
    counts = {v: len(ts) for v, ts in sorted(_by_video(pool).items())}
    for v in sorted({g.video for g in gts}):
        counts.setdefault(v, 0)
    counts = dict(sorted(counts.items()))
    sigmas = curve_sigmas if curve_sigmas is not None else np.round(np.arange(0.05, 1.0, 0.05), 2)
    curve = [(float(s), float(np.mean([(b > s).mean() for b in best.values()]))) for s in sigmas]
    return EvalReport(abo_c, float(np.mean(list(abo_c.values()))), rec_c,
                      float(np.mean(list(rec_c.values()))), sigma, counts, curve)


def load_ground_truth(path: str | os.PathLike) -> list[GroundTruthInstance]:
    doc = json.loads(Path(path).read_text())
    items = doc["instances"] if isinstance(doc, dict) else doc
    out = []
    for d in items:
        boxes = {f["t"]: (f["x_min"], f["y_min"], f["x_max"], f["y_max"]) for f in d["frames"]}
        out.append(GroundTruthInstance(d["video"], d["class"], boxes))
    return out


def ground_truth_document(gts: Iterable[GroundTruthInstance]) -> list[dict]:
    return [{"video": g.video, "class": g.label,
             "frames": [{"t": t, "x_min": b[0], "y_min": b[1], "x_max": b[2], "y_max": b[3]}
                        for t, b in sorted(g.boxes.items())]} for g in gts]


def write_report(report: EvalReport, out_dir: str | os.PathLike) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_class = out_dir / "per_class.csv"
    with open(per_class, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "abo", f"recall@{report.sigma}"])
        for c in report.abo:
            w.writerow([c, f"{report.abo[c]:.6f}", f"{report.recall[c]:.6f}"])
    curve = out_dir / "recall_curve.csv"
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sigma", "mean_recall"])
        for s, r in report.curve:
            w.writerow([f"{s:.2f}", f"{r:.6f}"])
    summary = out_dir / "summary.json"
    summary.write_text(json.dumps(report.summary(), indent=1, sort_keys=True) + "\n")
    return {"per_class": per_class, "curve": curve, "summary": summary}
