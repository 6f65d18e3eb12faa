"""Independent-motion evidence maps.

Evidence is one minus the robust influence weight of each pixel under the
frame's dominant motion: pixels the estimator down-weights are the ones
that do not follow the camera.  Maps are stored as 8-bit frames so the
sequence can be segmented like any grey video.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .motion import MotionEstimate, RobustConfig, estimate_dominant_motion
from .video_io import VideoVolume, save_image_dir, to_grayscale

RAW, CLOSED, BINARY = "raw", "closed", "binary"


@dataclass(frozen=True, eq=False)
class IMotionMap:
    data: np.ndarray   # (F, H, W) uint8
    stage: str = RAW

    def __post_init__(self):
        if self.stage not in (RAW, CLOSED, BINARY):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.data.dtype != np.uint8:
            raise TypeError("iMotion maps are 8-bit")

    def as_video(self, name: str = "imotion") -> VideoVolume:
        return VideoVolume(np.array(self.data, copy=True), name=name)


def _as_stack(a: np.ndarray) -> np.ndarray:
    return a[None] if a.ndim == 2 else a


def evidence_map(weights: np.ndarray) -> IMotionMap:
    """Quantise ``1 - w``; NaN weights (no residual) give zero evidence."""
    w = _as_stack(np.asarray(weights, dtype=np.float64))
    xi = np.where(np.isfinite(w), 1.0 - np.clip(w, 0.0, 1.0), 0.0)
    return IMotionMap(np.floor(xi * 255.0 + 0.5).astype(np.uint8), RAW)


def close_map(m: IMotionMap, se_radius: int = 2) -> IMotionMap:
    """Per-frame grey closing with a square element of side ``2*se_radius + 1``."""
    if se_radius < 1:
        raise ValueError("se_radius must be >= 1")
    size = (1, 2 * se_radius + 1, 2 * se_radius + 1)
    # 'nearest' padding makes the window extrema equal to in-frame extrema
    dil = ndimage.grey_dilation(m.data, size=size, mode="nearest")
    out = ndimage.grey_erosion(dil, size=size, mode="nearest")
    return IMotionMap(out.astype(np.uint8), CLOSED)


def binarize(m: IMotionMap, tau: int = 0) -> IMotionMap:
    return IMotionMap((m.data > tau).astype(np.uint8), BINARY)


def estimate_video_motion(video: VideoVolume, cfg: RobustConfig | None = None) -> list[MotionEstimate]:
    if video.frame_count < 2:
        raise ValueError("motion estimation needs at least 2 frames")
    gray = to_grayscale(video).data
    return [estimate_dominant_motion(gray[t], gray[t + 1], cfg) for t in range(video.frame_count - 1)]


def compute_imotion(video: VideoVolume, cfg: RobustConfig | None = None,
                    se_radius: int = 2) -> tuple[IMotionMap, IMotionMap]:
    """Return (raw, closed) evidence for every frame of ``video``.

    Frame t uses the pair (t, t+1); the last frame repeats the map of the
    final pair so the sequence has one map per frame.
    """
    estimates = estimate_video_motion(video, cfg)
    weights = np.stack([e.weights for e in estimates])
    raw = evidence_map(weights)
    data = np.concatenate([raw.data, raw.data[-1:]], axis=0)
    raw = IMotionMap(data, RAW)
    return raw, close_map(raw, se_radius)


def export_maps(m: IMotionMap, out_dir: str | os.PathLike) -> list[Path]:
    data = m.data * 255 if m.stage == BINARY else m.data
    return save_image_dir(data.astype(np.uint8), out_dir)
