"""Graph-based segmentation of a video volume into super-voxels.

The Felzenszwalb-Huttenlocher merge criterion applied to the 3D (t, y, x)
lattice: edges between neighbouring voxels are visited in order of
increasing weight and two components merge when the edge is no heavier
than both components' internal difference plus ``c / size``.  A second pass
absorbs components smaller than ``smin`` into a neighbour.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from PIL import Image
from scipy import ndimage

from .video_io import VideoVolume

ABSENT = np.iinfo(np.int32).max

# forward neighbour offsets (dt, dy, dx); each is lexicographically positive
_OFFSETS_6 = [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
_OFFSETS_26 = [(dt, dy, dx) for dt in (-1, 0, 1) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
               if (dt, dy, dx) > (0, 0, 0)]

WEIGHT_QUANTUM = 1e-6


@dataclass(frozen=True)
class SegmentationConfig:
    smoothing_sigma: float = 0.5
    merge_threshold_c: float = 200.0
    min_segment_size_smin: int = 500
    connectivity: int = 6

    def __post_init__(self):
        if self.connectivity not in (6, 26):
            raise ValueError("connectivity must be 6 or 26")
        if self.smoothing_sigma < 0 or self.merge_threshold_c < 0 or self.min_segment_size_smin < 0:
            raise ValueError("segmentation parameters must be non-negative")


@dataclass(frozen=True, eq=False)
class VoxelLabeling:
    labels: np.ndarray   # (F, H, W) int32, dense in [0, label_count)
    label_count: int

    @property
    def shape(self):
        return self.labels.shape


@dataclass(eq=False)
class LabelStats:
    sizes: np.ndarray    # (L,) voxel counts
    boxes: np.ndarray    # (L, F, 4) x_min, y_min, x_max, y_max; ABSENT / -1 where missing

    def frame_span(self, label: int) -> tuple[int, int]:
        present = np.nonzero(self.boxes[label, :, 2] >= 0)[0]
        return int(present[0]), int(present[-1])


def smooth_volume(data: np.ndarray, sigma: float) -> np.ndarray:
    """Per-frame, per-channel spatial Gaussian (radius ``int(4 sigma + 0.5)``, edge-clamped)."""
    vol = data.astype(np.float64)
    if vol.ndim == 3:
        vol = vol[..., None]
    if sigma <= 0:
        return vol
    return ndimage.gaussian_filter(vol, sigma=(0, sigma, sigma, 0), truncate=4.0, mode="nearest")


def quantize_weights(w: np.ndarray) -> np.ndarray:
    # fixed grid so near-equal weights sort identically everywhere
    return np.floor(w / WEIGHT_QUANTUM + 0.5) * WEIGHT_QUANTUM


def build_edges(vol: np.ndarray, connectivity: int = 6):
    """Return (a, b, w) for all lattice edges, ``a < b`` linear voxel indices, sorted by (w, a, b)."""
    f, h, w = vol.shape[:3]
    idx = np.arange(f * h * w, dtype=np.int64).reshape(f, h, w)
    offsets = _OFFSETS_6 if connectivity == 6 else _OFFSETS_26
    aa, bb, ww = [], [], []
    for dt, dy, dx in offsets:
        src = tuple(slice(max(0, -d), n - max(0, d)) for d, n in zip((dt, dy, dx), (f, h, w)))
        dst = tuple(slice(max(0, d), n - max(0, -d)) for d, n in zip((dt, dy, dx), (f, h, w)))
        a = idx[src].ravel()
        b = idx[dst].ravel()
        diff = vol[src] - vol[dst]
        ww.append(np.sqrt(np.sum(diff * diff, axis=-1)).ravel())
        aa.append(a)
        bb.append(b)
    a = np.concatenate(aa)
    b = np.concatenate(bb)
    wts = quantize_weights(np.concatenate(ww))
    order = np.lexsort((b, a, wts))
    return a[order], b[order], wts[order]


@numba.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@numba.njit(cache=True)
def _union(parent, size, ra, rb):
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return ra


@numba.njit(cache=True)
def _segment_graph(a, b, w, n, c, smin):
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    internal = np.zeros(n, dtype=np.float64)
    for k in range(a.shape[0]):
        ra = _find(parent, a[k])
        rb = _find(parent, b[k])
        if ra == rb:
            continue
        if w[k] <= min(internal[ra] + c / size[ra], internal[rb] + c / size[rb]):
            root = _union(parent, size, ra, rb)
            internal[root] = w[k]
    for k in range(a.shape[0]):
        ra = _find(parent, a[k])
        rb = _find(parent, b[k])
        if ra != rb and (size[ra] < smin or size[rb] < smin):
            _union(parent, size, ra, rb)
    for x in range(n):
        _find(parent, x)
    return parent


def canonical_labels(roots: np.ndarray) -> tuple[np.ndarray, int]:
    """Relabel so labels are numbered by first occurrence in raster (t, y, x) order."""
    uniq, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int32)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq), dtype=np.int32)
    return rank[inverse], len(uniq)


def segment(video: VideoVolume | np.ndarray, cfg: SegmentationConfig | None = None) -> VoxelLabeling:
    cfg = cfg or SegmentationConfig()
    data = video.data if isinstance(video, VideoVolume) else np.asarray(video)
    if data.size == 0:
        raise ValueError("cannot segment an empty volume")
    shape = data.shape[:3]
    vol = smooth_volume(data, cfg.smoothing_sigma)
    a, b, w = build_edges(vol, cfg.connectivity)
    n = int(np.prod(shape))
    roots = _segment_graph(a, b, w, n, float(cfg.merge_threshold_c), int(cfg.min_segment_size_smin))
    labels, count = canonical_labels(roots)
    return VoxelLabeling(labels.reshape(shape).astype(np.int32), count)


def label_stats(lab: VoxelLabeling) -> LabelStats:
    """Voxel count and per-frame tight box of every label."""
    f, h, w = lab.shape
    flat = lab.labels.ravel().astype(np.int64)
    sizes = np.bincount(flat, minlength=lab.label_count)
    t_idx, y_idx, x_idx = np.unravel_index(np.arange(flat.size), (f, h, w))
    key = flat * f + t_idx
    order = np.argsort(key, kind="stable")
    key_s = key[order]
    starts = np.concatenate([[0], np.nonzero(np.diff(key_s))[0] + 1])
    keys = key_s[starts]
    xs = x_idx[order]
    ys = y_idx[order]
    boxes = np.empty((lab.label_count, f, 4), dtype=np.int32)
    boxes[..., :2] = ABSENT
    boxes[..., 2:] = -1
    lbl, tt = keys // f, keys % f
    boxes[lbl, tt, 0] = np.minimum.reduceat(xs, starts)
    boxes[lbl, tt, 1] = np.minimum.reduceat(ys, starts)
    boxes[lbl, tt, 2] = np.maximum.reduceat(xs, starts)
    boxes[lbl, tt, 3] = np.maximum.reduceat(ys, starts)
    return LabelStats(sizes, boxes)


def export_labels(lab: VoxelLabeling, out_dir: str | os.PathLike) -> list[Path]:
    """Write one label raster per frame: 16-bit PNG, or 24-bit RGB-packed above 65535 labels."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    digits = max(5, len(str(lab.shape[0])))
    for t, frame in enumerate(lab.labels):
        p = out_dir / f"{t:0{digits}d}_labels.png"
        if lab.label_count <= 65536:
            Image.fromarray(frame.astype(np.uint16)).save(p)
        else:
            v = frame.astype(np.uint32)
            rgb = np.stack([(v >> 16) & 255, (v >> 8) & 255, v & 255], axis=-1).astype(np.uint8)
            Image.fromarray(rgb).save(p)
        paths.append(p)
    return paths


def load_labels(in_dir: str | os.PathLike) -> VoxelLabeling:
    files = sorted(Path(in_dir).glob("*_labels.png"))
    frames = []
    for p in files:
        with Image.open(p) as im:
            arr = np.asarray(im)
        if arr.ndim == 3:
            arr = (arr[..., 0].astype(np.int64) << 16) | (arr[..., 1].astype(np.int64) << 8) | arr[..., 2]
        frames.append(arr.astype(np.int32))
    labels = np.stack(frames)
    return VoxelLabeling(labels, int(labels.max()) + 1)
