"""Agglomerative grouping of super-voxels into a binary merge tree.

Each super-voxel carries motion, colour and texture histograms; pairs of
active neighbours are ranked by a grouping function (a sum of similarity
measures) and the best pair is merged until one node is left.  Every merge
produces a candidate super-voxel whose per-frame tight boxes form a Tubelet.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .segmentation import LabelStats, VoxelLabeling, label_stats, _OFFSETS_6, _OFFSETS_26
from .tubelet import Tubelet
from .video_io import VideoVolume, rgb_to_hsv

MOTION, COLOR, TEXTURE, SIZE, FILL = "motion", "color", "texture", "size", "fill"
MEASURES = (MOTION, COLOR, TEXTURE, SIZE, FILL)

MOTION_WINDOW = (3, 5, 5)          # (t, y, x)
MOTION_BINS = int(np.prod(MOTION_WINDOW)) + 1
COLOR_BINS_PER_CHANNEL = 25
ORIENTATIONS = 8
MAGNITUDE_BINS = 10
MAGNITUDE_MAX = 128.0
TEXTURE_BINS_PER_CHANNEL = ORIENTATIONS * MAGNITUDE_BINS

# scores are compared on a fixed grid so ties resolve by id, not by rounding noise
SCORE_QUANTUM = 1e-9


@dataclass(frozen=True)
class GroupingFunction:
    measures: frozenset
    name: str = ""

    def __post_init__(self):
        unknown = set(self.measures) - set(MEASURES)
        if unknown or not self.measures:
            raise ValueError(f"bad measure set {sorted(self.measures)}")
        if not self.name:
            object.__setattr__(self, "name", "+".join(m for m in MEASURES if m in self.measures))


def _gf(name, *measures):
    return GroupingFunction(frozenset(measures), name)


PRESETS = {
    "motion": _gf("motion", MOTION),
    "color": _gf("color", COLOR),
    "texture": _gf("texture", TEXTURE),
    "size": _gf("size", SIZE),
    "fill": _gf("fill", FILL),
    "motion+size+fill": _gf("motion+size+fill", MOTION, SIZE, FILL),
    "texture+size+fill": _gf("texture+size+fill", TEXTURE, SIZE, FILL),
    "all-but-motion": _gf("all-but-motion", COLOR, TEXTURE, SIZE, FILL),
    "all": _gf("all", *MEASURES),
}
SELECTED = ("motion", "fill", "motion+size+fill", "all-but-motion", "all")


def grouping_function(spec: str | GroupingFunction) -> GroupingFunction:
    if isinstance(spec, GroupingFunction):
        return spec
    if spec in PRESETS:
        return PRESETS[spec]
    return GroupingFunction(frozenset(spec.split("+")))


# ---------------------------------------------------------------------------
# per-voxel features


def motion_counts(binary: np.ndarray) -> np.ndarray:
    """Number of ones in the 3x5x5 (t, y, x) neighbourhood of each voxel; outside counts 0."""
    b = (np.asarray(binary) > 0).astype(np.int32)
    return ndimage.correlate(b, np.ones(MOTION_WINDOW, np.int32), mode="constant", cval=0)


def motion_histogram(binary: np.ndarray, region: np.ndarray) -> np.ndarray:
    region = np.asarray(region, bool)
    if not region.any():
        raise ValueError("motion histogram of an empty region is undefined")
    counts = motion_counts(binary)[region]
    return np.bincount(counts, minlength=MOTION_BINS).astype(np.float64) / counts.size


def color_bins(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) bin index per HSV channel, offset into a 75-bin histogram."""
    hsv = rgb_to_hsv(rgb).astype(np.int64)
    bins = hsv * COLOR_BINS_PER_CHANNEL // 256
    return bins + np.arange(3) * COLOR_BINS_PER_CHANNEL


def texture_bins(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) joint orientation/magnitude bin of the per-frame gradient of each colour channel."""
    img = rgb.astype(np.float64)
    gy = np.gradient(img, axis=-3)
    gx = np.gradient(img, axis=-2)
    ang = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    ori = np.minimum((ang / (2 * np.pi) * ORIENTATIONS).astype(np.int64), ORIENTATIONS - 1)
    mag = np.hypot(gx, gy)
    mb = np.minimum((mag / MAGNITUDE_MAX * MAGNITUDE_BINS).astype(np.int64), MAGNITUDE_BINS - 1)
    return ori * MAGNITUDE_BINS + mb + np.arange(3) * TEXTURE_BINS_PER_CHANNEL


class FeatureVolume:
    """Per-voxel histogram bin indices for one video and its binary iMotion maps."""

    def __init__(self, video: VideoVolume | np.ndarray, binary_motion: np.ndarray):
        rgb = video.data if isinstance(video, VideoVolume) else np.asarray(video)
        if rgb.ndim == 3:
            rgb = np.repeat(rgb[..., None], 3, axis=-1)
        self.shape = rgb.shape[:3]
        if np.asarray(binary_motion).shape != self.shape:
            raise ValueError("motion map and video shapes differ")
        self.motion = motion_counts(binary_motion).reshape(-1).astype(np.int64)
        self.color = color_bins(rgb).reshape(-1, 3)
        self.texture = texture_bins(rgb).reshape(-1, 3)

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.shape))

    def histograms(self, region: np.ndarray):
        """From-scratch (h_motion, h_color, h_texture) of a boolean voxel mask."""
        m = np.asarray(region, bool).reshape(-1)
        n = int(m.sum())
        if n == 0:
            raise ValueError("empty region")
        hm = np.bincount(self.motion[m], minlength=MOTION_BINS) / n
        hc = np.bincount(self.color[m].ravel(), minlength=3 * COLOR_BINS_PER_CHANNEL) / (3 * n)
        ht = np.bincount(self.texture[m].ravel(), minlength=3 * TEXTURE_BINS_PER_CHANNEL) / (3 * n)
        return hm.astype(np.float64), hc.astype(np.float64), ht.astype(np.float64)

    def label_histograms(self, labels: np.ndarray, count: int):
        lab = np.asarray(labels).reshape(-1).astype(np.int64)
        sizes = np.bincount(lab, minlength=count).astype(np.float64)

        def hist(bins, nb, per_voxel):
            keys = (lab[:, None] * nb + bins.reshape(lab.size, per_voxel)).ravel()
            h = np.bincount(keys, minlength=count * nb).reshape(count, nb).astype(np.float64)
            return h / (sizes[:, None] * per_voxel)

        return (hist(self.motion, MOTION_BINS, 1),
                hist(self.color, 3 * COLOR_BINS_PER_CHANNEL, 3),
                hist(self.texture, 3 * TEXTURE_BINS_PER_CHANNEL, 3))


# ---------------------------------------------------------------------------
# super-voxels


@dataclass(eq=False)
class SuperVoxel:
    id: int
    size: int
    h_motion: np.ndarray
    h_color: np.ndarray
    h_texture: np.ndarray
    boxes: np.ndarray                 # (F, 4); ABSENT / -1 on frames the region misses
    cuboid: tuple[int, int, int, int, int, int]   # t0, y0, x0, t1, y1, x1
    neighbors: set = field(default_factory=set)
    active: bool = True
    children: tuple[int, int] | None = None

    def span(self) -> tuple[int, int]:
        return self.cuboid[0], self.cuboid[3]

    def to_tubelet(self, **kw) -> Tubelet:
        t0, t1 = self.span()
        return Tubelet(t0, self.boxes[t0:t1 + 1].astype(np.int64), **kw)


def _cuboid_from_boxes(boxes: np.ndarray) -> tuple[int, int, int, int, int, int]:
    present = np.nonzero(boxes[:, 2] >= 0)[0]
    b = boxes[present]
    return (int(present[0]), int(b[:, 1].min()), int(b[:, 0].min()),
            int(present[-1]), int(b[:, 3].max()), int(b[:, 2].max()))


def cuboid_volume(c) -> int:
    return (c[3] - c[0] + 1) * (c[4] - c[1] + 1) * (c[5] - c[2] + 1)


def label_adjacency(labels: np.ndarray, connectivity: int = 6) -> set[tuple[int, int]]:
    f, h, w = labels.shape
    offsets = _OFFSETS_6 if connectivity == 6 else _OFFSETS_26
    pairs = []
    for d in offsets:
        src = tuple(slice(max(0, -k), n - max(0, k)) for k, n in zip(d, (f, h, w)))
        dst = tuple(slice(max(0, k), n - max(0, -k)) for k, n in zip(d, (f, h, w)))
        a = labels[src].ravel()
        b = labels[dst].ravel()
        m = a != b
        if m.any():
            pairs.append(np.stack([np.minimum(a[m], b[m]), np.maximum(a[m], b[m])], axis=1))
    if not pairs:
        return set()
    uniq = np.unique(np.concatenate(pairs), axis=0)
    return {(int(a), int(b)) for a, b in uniq}


def build_leaves(labeling: VoxelLabeling, features: FeatureVolume,
                 stats: LabelStats | None = None, connectivity: int = 6) -> list[SuperVoxel]:
    """One super-voxel per initial segment, ids equal to labels."""
    stats = stats or label_stats(labeling)
    hm, hc, ht = features.label_histograms(labeling.labels, labeling.label_count)
    leaves = [SuperVoxel(i, int(stats.sizes[i]), hm[i], hc[i], ht[i], stats.boxes[i],
                         _cuboid_from_boxes(stats.boxes[i]))
              for i in range(labeling.label_count)]
    for a, b in label_adjacency(labeling.labels, connectivity):
        leaves[a].neighbors.add(b)
        leaves[b].neighbors.add(a)
    return leaves


def histogram_intersection(h1: np.ndarray, h2: np.ndarray) -> float:
    return float(np.minimum(h1, h2).sum())


def similarity(a: SuperVoxel, b: SuperVoxel, g: GroupingFunction | str, video_size: int) -> float:
    g = grouping_function(g)
    if b.id not in a.neighbors:
        raise ValueError(f"super-voxels {a.id} and {b.id} are not neighbours")
    ms = g.measures
    s = 0.0
    if MOTION in ms:
        s += histogram_intersection(a.h_motion, b.h_motion)
    if COLOR in ms:
        s += histogram_intersection(a.h_color, b.h_color)
    if TEXTURE in ms:
        s += histogram_intersection(a.h_texture, b.h_texture)
    if SIZE in ms:
        s += 1.0 - (a.size + b.size) / video_size
    if FILL in ms:
        ca, cb = a.cuboid, b.cuboid
        joint = (min(ca[0], cb[0]), min(ca[1], cb[1]), min(ca[2], cb[2]),
                 max(ca[3], cb[3]), max(ca[4], cb[4]), max(ca[5], cb[5]))
        s += (a.size + b.size) / cuboid_volume(joint)
    return s


def merge(a: SuperVoxel, b: SuperVoxel, new_id: int) -> SuperVoxel:
    """Size-weighted histogram propagation; deactivates both inputs."""
    if not (a.active and b.active):
        raise ValueError("cannot merge an inactive super-voxel")
    if b.id not in a.neighbors:
        raise ValueError(f"super-voxels {a.id} and {b.id} are not neighbours")
    n = a.size + b.size
    boxes = np.empty_like(a.boxes)
    np.minimum(a.boxes[:, :2], b.boxes[:, :2], out=boxes[:, :2])
    np.maximum(a.boxes[:, 2:], b.boxes[:, 2:], out=boxes[:, 2:])
    ca, cb = a.cuboid, b.cuboid
    cub = (min(ca[0], cb[0]), min(ca[1], cb[1]), min(ca[2], cb[2]),
           max(ca[3], cb[3]), max(ca[4], cb[4]), max(ca[5], cb[5]))
    node = SuperVoxel(new_id, n,
                      (a.size * a.h_motion + b.size * b.h_motion) / n,
                      (a.size * a.h_color + b.size * b.h_color) / n,
                      (a.size * a.h_texture + b.size * b.h_texture) / n,
                      boxes, cub, (a.neighbors | b.neighbors) - {a.id, b.id},
                      children=(a.id, b.id))
    a.active = False
    b.active = False
    return node


@dataclass
class MergeTree:
    n_leaves: int
    merges: list[tuple[int, int, int]] = field(default_factory=list)   # (child_a, child_b, parent)

    @property
    def root(self) -> int | None:
        return self.merges[-1][2] if self.merges else (0 if self.n_leaves == 1 else None)

    def children(self) -> dict[int, tuple[int, int]]:
        return {p: (a, b) for a, b, p in self.merges}

    def leaves_of(self, node: int) -> list[int]:
        kids = self.children()
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x in kids:
                stack.extend(kids[x])
            else:
                out.append(x)
        return sorted(out)


@dataclass
class GroupingResult:
    tree: MergeTree
    nodes: list[SuperVoxel]
    retained: list[SuperVoxel]
    grouping_fn: str


def _key(score: float) -> int:
    return int(round(score / SCORE_QUANTUM))


def run_grouping(leaves: list[SuperVoxel], g: GroupingFunction | str, video_size: int,
                 discard_min_size: int = 500) -> GroupingResult:
    """Merge the most similar active neighbours until one node remains.

    ``leaves`` are consumed (their ``active`` flags and neighbour sets change);
    pass fresh copies for each grouping function.
    """
    g = grouping_function(g)
    n = len(leaves)
    nodes: list[SuperVoxel] = list(leaves)
    for i, sv in enumerate(nodes):
        if sv.id != i:
            raise ValueError("leaf ids must be 0..n-1 in order")
    heap = []
    for sv in nodes:
        for nb in sv.neighbors:
            if nb > sv.id:
                heap.append((-_key(similarity(sv, nodes[nb], g, video_size)), sv.id, nb))
    heapq.heapify(heap)
    tree = MergeTree(n)
    while heap:
        _, i, j = heapq.heappop(heap)
        a, b = nodes[i], nodes[j]
        if not (a.active and b.active):
            continue
        new = merge(a, b, len(nodes))
        nodes.append(new)
        tree.merges.append((i, j, new.id))
        for nb in new.neighbors:
            other = nodes[nb]
            other.neighbors.discard(i)
            other.neighbors.discard(j)
            other.neighbors.add(new.id)
        for nb in sorted(new.neighbors):
            heapq.heappush(heap, (-_key(similarity(new, nodes[nb], g, video_size)), nb, new.id))
    retained = [sv for sv in nodes[n:]
                if sv.size >= discard_min_size and sv.h_motion[0] < 1.0 - 1e-12]
    return GroupingResult(tree, nodes, retained, g.name)


def copy_leaves(leaves: list[SuperVoxel]) -> list[SuperVoxel]:
    return [SuperVoxel(s.id, s.size, s.h_motion, s.h_color, s.h_texture, s.boxes, s.cuboid,
                       set(s.neighbors)) for s in leaves]


def tubelets_from_result(result: GroupingResult, source: str, video: str = "") -> list[Tubelet]:
    return [sv.to_tubelet(source=source, grouping_fn=result.grouping_fn, video=video)
            for sv in result.retained]


def union_phi(results: list[list[Tubelet]]) -> list[Tubelet]:
    """Union of proposal lists; exact duplicates (same video, span and boxes) kept once."""
    seen = set()
    out = []
    for tubes in results:
        for t in tubes:
            k = t.key()
            if k in seen:
                continue
            seen.add(k)
            out.append(t)
    return out
