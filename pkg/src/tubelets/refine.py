"""Pruning and spatiotemporal refinement of Tubelet pools."""
from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .evaluation import DenseTubes
from .trajectories import TrajectoryBank, annotate, member_indices
from .tubelet import Tubelet

TRIMMED, UNTRIMMED = "trimmed", "untrimmed"
VID, IMOTION = "vid", "imotion"


@dataclass(frozen=True)
class RefineConfig:
    mode: str = TRIMMED
    P: int = 50
    keep_fraction: float = 0.10
    theta: float = 0.8
    target_segments: int = 15
    min_length: int = 30
    profile_median: int = 5
    n_fraction: float = 0.05
    regression_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (TRIMMED, UNTRIMMED):
            raise ValueError(f"unknown refinement mode {self.mode!r}")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.P < 0:
            raise ValueError("P must be >= 0")


def _group_by_video(pool: Sequence[Tubelet]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(pool):
        groups[t.video].append(i)
    return groups


def motion_prune(pool: Sequence[Tubelet], P: int = 50, keep_fraction: float = 0.10) -> list[Tubelet]:
    """Per video keep the P vid-sourced proposals with most trajectories plus the top
    ``keep_fraction`` (floored) of the rest; iMotion-sourced proposals pass through."""
    pool = list(pool)
    keep = np.zeros(len(pool), bool)
    for idx in _group_by_video(pool).values():
        vid = [i for i in idx if pool[i].source == VID]
        for i in idx:
            if pool[i].source != VID:
                keep[i] = True
        n = len(vid)
        quota = min(n, P + math.floor(keep_fraction * max(0, n - P)))
        ranked = sorted(vid, key=lambda i: -pool[i].traj_total)
        keep[ranked[:quota]] = True
    return [t for t, k in zip(pool, keep) if k]


def overlap_prune(pool: Sequence[Tubelet], theta: float = 0.8) -> list[Tubelet]:
    """Greedy in decreasing trajectory count: keep a proposal iff its localization score
    with every proposal already kept (same video) is at most ``theta``."""
    pool = list(pool)
    keep = np.zeros(len(pool), bool)
    for idx in _group_by_video(pool).values():
        dense = DenseTubes([pool[i] for i in idx])
        kept: list[int] = []
        for j in sorted(range(len(idx)), key=lambda j: -pool[idx[j]].traj_total):
            if kept:
                s = dense.scores_against(dense.tubes[j], np.asarray(kept))
                if np.any(s > theta):
                    continue
            kept.append(j)
        keep[[idx[j] for j in kept]] = True
    return [t for t, k in zip(pool, keep) if k]


def temporal_refine(t: Tubelet, target_segments: int = 15, min_length: int = 30,
                    seed: int = 0, profile_median: int = 5) -> list[Tubelet]:
    """Split a Tubelet into contiguous runs of frames clustered on
    (relative location, relative trajectory count).

    The count profile is median filtered over ``profile_median`` frames first
    (1 disables it): with sparse tracks single-frame dips would otherwise cut
    runs below ``min_length``.
    """
    b = t.length
    if b < min_length:
        return []
    profile = t.traj_profile
    if profile is None or np.max(profile) == 0:
        return [t]
    counts = profile.astype(np.float64)
    if profile_median > 1:
        counts = ndimage.median_filter(counts, profile_median, mode="nearest")
    if counts.max() == 0:
        return [t]
    i = np.arange(1, b + 1)
    emb = np.stack([i / b, counts / counts.max()], axis=1)
    k = min(target_segments, len(np.unique(emb, axis=0)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = KMeans(n_clusters=k, init="k-means++", n_init=1, random_state=seed).fit_predict(emb)
    cuts = np.nonzero(np.diff(labels))[0] + 1
    starts = np.concatenate([[0], cuts])
    ends = np.concatenate([cuts, [b]])
    out = []
    for s, e in zip(starts, ends):
        if e - s < min_length:
            continue
        out.append(t.with_flag("temporal", start=t.start + int(s), boxes=t.boxes[s:e],
                               traj_profile=profile[s:e].copy()))
    return out


def local_linear_smooth(y: np.ndarray, bandwidth: int) -> np.ndarray:
    """Local linear regression at every index with tent weights ``max(0, 1 - |d| / bandwidth)``."""
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n < 2 or bandwidth < 2:
        return y.copy()
    d = np.arange(-(bandwidth - 1), bandwidth, dtype=np.float64)
    w = 1.0 - np.abs(d) / bandwidth
    ones = np.ones(n)

    def corr(sig, kern):
        return ndimage.correlate1d(sig, kern, mode="constant", cval=0.0)

    s0, s1, s2 = corr(ones, w), corr(ones, w * d), corr(ones, w * d * d)
    t0, t1 = corr(y, w), corr(y, w * d)
    det = s0 * s2 - s1 * s1
    safe = np.abs(det) > 1e-12
    out = np.where(safe, (s2 * t0 - s1 * t1) / np.where(safe, det, 1.0), t0 / s0)
    return out


def regression_bandwidth(length: int, fraction: float = 0.2) -> int:
    return max(3, math.floor(length * fraction))


def spatial_refine(t: Tubelet, trajs, N: float, frame_size: tuple[int, int] | None = None,
                   regression_fraction: float = 0.2) -> Tubelet:
    """Clamp boxes to the padded extent of member-trajectory points, then smooth
    x, y, width and height by local linear regression.  ``frame_size`` is (width, height)."""
    boxes = t.boxes.astype(np.float64).copy()
    bank = trajs if isinstance(trajs, TrajectoryBank) else TrajectoryBank(trajs or [])
    if len(bank):
        members = member_indices(bank, t)
        if members.size:
            _, inside = bank.inside(t, members)
            rel = bank.starts[members, None] + np.arange(inside.shape[1]) - t.start
            pts = bank.points[members]
            fr = rel[inside]
            px, py = pts[..., 0][inside], pts[..., 1][inside]
            lo_x = np.full(t.length, np.inf)
            lo_y = np.full(t.length, np.inf)
            hi_x = np.full(t.length, -np.inf)
            hi_y = np.full(t.length, -np.inf)
            np.minimum.at(lo_x, fr, px)
            np.minimum.at(lo_y, fr, py)
            np.maximum.at(hi_x, fr, px)
            np.maximum.at(hi_y, fr, py)
            has = np.isfinite(lo_x)
            boxes[has, 0] = np.maximum(boxes[has, 0], np.floor(lo_x[has] - N))
            boxes[has, 1] = np.maximum(boxes[has, 1], np.floor(lo_y[has] - N))
            boxes[has, 2] = np.minimum(boxes[has, 2], np.ceil(hi_x[has] + N))
            boxes[has, 3] = np.minimum(boxes[has, 3], np.ceil(hi_y[has] + N))
    bw = regression_bandwidth(t.length, regression_fraction)
    x0 = local_linear_smooth(boxes[:, 0], bw)
    y0 = local_linear_smooth(boxes[:, 1], bw)
    wd = local_linear_smooth(boxes[:, 2] - boxes[:, 0] + 1, bw)
    ht = local_linear_smooth(boxes[:, 3] - boxes[:, 1] + 1, bw)
    nx0 = np.floor(x0 + 0.5)
    ny0 = np.floor(y0 + 0.5)
    nx1 = nx0 + np.maximum(1.0, np.floor(wd + 0.5)) - 1
    ny1 = ny0 + np.maximum(1.0, np.floor(ht + 0.5)) - 1
    if frame_size is not None:
        w, h = frame_size
        nx0, nx1 = np.clip(nx0, 0, w - 1), np.clip(nx1, 0, w - 1)
        ny0, ny1 = np.clip(ny0, 0, h - 1), np.clip(ny1, 0, h - 1)
    out = np.stack([nx0, ny0, np.maximum(nx0, nx1), np.maximum(ny0, ny1)], axis=1).astype(np.int64)
    return t.with_flag("spatial", boxes=out)


def refine_pipeline(pools: dict[str, Sequence[Tubelet]], cfg: RefineConfig, trajs=None,
                    frame_size: tuple[int, int] | None = None) -> list[Tubelet]:
    """Prune and refine the vid / iMotion proposal pools of one or more videos.

    trimmed:   motion_prune(vid) + imotion -> overlap_prune -> spatial_refine
    untrimmed: motion_prune(vid) -> overlap_prune -> temporal_refine -> overlap_prune,
               imotion -> overlap_prune; union -> spatial_refine
    """
    if cfg.mode not in (TRIMMED, UNTRIMMED):
        raise ValueError(f"unknown refinement mode {cfg.mode!r}")
    bank = trajs if isinstance(trajs, TrajectoryBank) else TrajectoryBank(trajs or [])
    vid = annotate(bank, pools.get(VID, []))
    imo = annotate(bank, pools.get(IMOTION, []))
    vid = motion_prune(vid, cfg.P, cfg.keep_fraction)
    if cfg.mode == TRIMMED:
        pool = overlap_prune(vid + imo, cfg.theta)
    else:
        vid = overlap_prune(vid, cfg.theta)
        subs = [s for t in vid for s in temporal_refine(t, cfg.target_segments, cfg.min_length, cfg.seed,
                                                    cfg.profile_median)]
        vid = overlap_prune(annotate(bank, subs), cfg.theta)
        pool = vid + overlap_prune(imo, cfg.theta)
    n_pad = cfg.n_fraction * frame_size[0] if frame_size is not None else np.inf
    return [spatial_refine(t, bank, n_pad, frame_size, cfg.regression_fraction) for t in pool]
