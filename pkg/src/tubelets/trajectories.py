"""Point trajectories and their assignment to Tubelets.

A lightweight stand-in for dense trajectories: grid points are tracked
frame to frame with pyramidal Lucas-Kanade, checked forwards-backwards, and
cut at a maximum length.  Pruning and refinement only need to know which
trajectories pass through which boxes.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import cv2
import numpy as np

from .motion import MotionParams, velocity
from .tubelet import Tubelet
from .video_io import VideoVolume, to_grayscale


@dataclass(eq=False)
class Trajectory:
    start_frame: int
    points: np.ndarray     # (length, 2) x, y

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    @property
    def length(self) -> int:
        return len(self.points)

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.points) - 1


@dataclass(frozen=True)
class TrackConfig:
    grid_stride: int = 5
    max_length: int = 15
    max_step: float = 10.0
    min_disp: float = 2.0
    fb_threshold: float = 1.0
    max_patch_error: float = 2.0
    window: int = 7
    pyramid_levels: int = 2
    min_eig_quality: float = 1e-3


def _seed_points(gray: np.ndarray, occupied: np.ndarray, stride: int, quality: float) -> np.ndarray:
    h, w = gray.shape
    eig = cv2.cornerMinEigenVal(gray, 3)
    thresh = quality * float(eig.max()) if eig.max() > 0 else np.inf
    ys = np.arange(stride // 2, h, stride)
    xs = np.arange(stride // 2, w, stride)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    cell_free = ~occupied[:len(ys), :len(xs)]
    ok = cell_free & (eig[gy, gx] > thresh)
    return np.stack([gx[ok], gy[ok]], axis=1).astype(np.float32)


def track(video: VideoVolume, grid_stride: int = 5, max_length: int = 15,
          cfg: TrackConfig | None = None, motions: Sequence[MotionParams] | None = None) -> list[Trajectory]:
    """Track grid points through the clip; static tracks are dropped.

    With ``motions`` (the dominant motion of each frame pair) a track is
    static when its displacement relative to the camera stays below
    ``min_disp``; otherwise raw displacement is used.
    """
    if video.frame_count < 2:
        raise ValueError("tracking needs at least 2 frames")
    cfg = cfg or TrackConfig()
    stride, max_length = grid_stride, max_length
    gray = to_grayscale(video).data
    h, w = gray.shape[1:]
    lk = dict(winSize=(cfg.window, cfg.window), maxLevel=cfg.pyramid_levels,
              criteria=(cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, 30, 0.01))
    n_cy, n_cx = (h + stride - 1) // stride, (w + stride - 1) // stride

    finished: list[tuple[int, list]] = []
    active: list[tuple[int, list]] = []
    ended: list[tuple[int, list]] = []     # reached max_length at frame t; their cells stay taken
    for t in range(video.frame_count):
        occupied = np.zeros((n_cy, n_cx), bool)
        for _, pts in active + ended:
            x, y = pts[-1]
            occupied[min(int(y) // stride, n_cy - 1), min(int(x) // stride, n_cx - 1)] = True
        ended = []
        for p in _seed_points(gray[t], occupied, stride, cfg.min_eig_quality):
            active.append((t, [(float(p[0]), float(p[1]))]))
        if t == video.frame_count - 1 or not active:
            continue
        p0 = np.array([pts[-1] for _, pts in active], dtype=np.float32).reshape(-1, 1, 2)
        p1, st, err = cv2.calcOpticalFlowPyrLK(gray[t], gray[t + 1], p0, None, **lk)
        p0r, st_b, _ = cv2.calcOpticalFlowPyrLK(gray[t + 1], gray[t], p1, None, **lk)
        p0, p1, p0r = p0.reshape(-1, 2), p1.reshape(-1, 2), p0r.reshape(-1, 2)
        fb = np.linalg.norm(p0 - p0r, axis=1)
        step = np.linalg.norm(p1 - p0, axis=1)
        inside = (p1[:, 0] >= 0) & (p1[:, 0] <= w - 1) & (p1[:, 1] >= 0) & (p1[:, 1] <= h - 1)
        # patch error rejects windows straddling a motion boundary
        good = (st.ravel() == 1) & (st_b.ravel() == 1) & (fb < cfg.fb_threshold) \
            & (err.ravel() < cfg.max_patch_error) & (step <= cfg.max_step) & inside
        still = []
        for k, (t0, pts) in enumerate(active):
            if good[k]:
                pts.append((float(p1[k, 0]), float(p1[k, 1])))
                (ended if len(pts) >= max_length else still).append((t0, pts))
            else:
                finished.append((t0, pts))
        finished.extend(ended)
        active = still
    finished.extend(active)

    out = []
    for t0, pts in sorted(finished, key=lambda item: (item[0], item[1][0][1], item[1][0][0])):
        if len(pts) < 2:
            continue
        arr = np.asarray(pts)
        if _displacement(t0, arr, motions) < cfg.min_disp:
            continue
        out.append(Trajectory(t0, arr))
    return out


def _displacement(t0: int, pts: np.ndarray, motions) -> float:
    steps = np.diff(pts, axis=0)
    if motions is not None:
        for k in range(len(steps)):
            u, v = velocity(motions[t0 + k], pts[k, 0], pts[k, 1])
            steps[k] -= (float(u), float(v))
    path = np.cumsum(steps, axis=0)
    return float(np.max(np.linalg.norm(path, axis=1)))


class TrajectoryBank:
    """Trajectories packed into padded arrays for fast box tests."""

    def __init__(self, trajs: Iterable[Trajectory]):
        trajs = list(trajs)
        self.trajectories = trajs
        n = len(trajs)
        lmax = max((t.length for t in trajs), default=1)
        self.starts = np.array([t.start_frame for t in trajs], dtype=np.int64)
        self.lengths = np.array([t.length for t in trajs], dtype=np.int64)
        self.points = np.full((n, lmax, 2), np.nan)
        for i, t in enumerate(trajs):
            self.points[i, :t.length] = t.points
        self.ends = self.starts + self.lengths - 1

    def __len__(self):
        return len(self.trajectories)

    def inside(self, tube: Tubelet, idx: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(candidate indices, per-point inside mask) for trajectories overlapping ``tube``'s span."""
        if idx is None:
            idx = np.nonzero((self.ends >= tube.start) & (self.starts <= tube.end))[0]
        lmax = self.points.shape[1]
        rel = self.starts[idx, None] + np.arange(lmax) - tube.start
        valid = (np.arange(lmax) < self.lengths[idx, None]) & (rel >= 0) & (rel < tube.length)
        box = tube.boxes[np.clip(rel, 0, tube.length - 1)]
        pts = self.points[idx]
        with np.errstate(invalid="ignore"):
            inside = valid & (pts[..., 0] >= box[..., 0]) & (pts[..., 0] <= box[..., 2]) \
                & (pts[..., 1] >= box[..., 1]) & (pts[..., 1] <= box[..., 3])
        return idx, inside


def _as_bank(trajs) -> TrajectoryBank:
    return trajs if isinstance(trajs, TrajectoryBank) else TrajectoryBank(trajs)


def member_indices(trajs, tube: Tubelet) -> np.ndarray:
    """Trajectories with a strict majority of their points inside the Tubelet's boxes."""
    bank = _as_bank(trajs)
    if len(bank) == 0:
        return np.zeros(0, dtype=np.int64)
    idx, inside = bank.inside(tube)
    return idx[inside.sum(axis=1) * 2 > bank.lengths[idx]]


def assign(trajs, tube: Tubelet) -> tuple[np.ndarray, int]:
    """Per-frame member-trajectory counts (nrTraj profile) and the member total."""
    bank = _as_bank(trajs)
    profile = np.zeros(tube.length, dtype=np.int64)
    if len(bank) == 0:
        return profile, 0
    members = member_indices(bank, tube)
    if members.size == 0:
        return profile, 0
    _, inside = bank.inside(tube, members)
    rel = bank.starts[members, None] + np.arange(inside.shape[1]) - tube.start
    np.add.at(profile, rel[inside], 1)
    return profile, int(members.size)


def annotate(trajs, tubes: Iterable[Tubelet]) -> list[Tubelet]:
    """Return copies of ``tubes`` with traj_total / traj_profile filled in."""
    bank = _as_bank(trajs)
    out = []
    for t in tubes:
        profile, total = assign(bank, t)
        out.append(Tubelet(t.start, t.boxes, t.source, t.grouping_fn, t.video, t.flags, total, profile))
    return out


def save_trajectories(trajs: Iterable[Trajectory], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for t in trajs:
            fh.write(json.dumps({"start_frame": int(t.start_frame),
                                 "points": [[float(x), float(y)] for x, y in t.points]}))
            fh.write("\n")


def load_trajectories(path: str | os.PathLike) -> list[Trajectory]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(Trajectory(int(d["start_frame"]), np.asarray(d["points"], dtype=np.float64)))
    return out
