"""End-to-end proposal generation for one video."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import cv2
import numpy as np

from .config import PipelineConfig
from .grouping import FeatureVolume, build_leaves, copy_leaves, run_grouping, tubelets_from_result, union_phi
from .imotion import IMotionMap, binarize, close_map, evidence_map
from .motion import MotionEstimate, MotionParams, estimate_dominant_motion
from .refine import IMOTION, VID, refine_pipeline
from .segmentation import VoxelLabeling, label_stats, segment
from .trajectories import Trajectory, track
from .tubelet import Tubelet
from .video_io import VideoVolume, to_grayscale

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Proposals:
    video: str
    frame_size: tuple[int, int]          # (width, height)
    pools: dict[str, list[Tubelet]]
    motions: list[MotionParams] = field(default_factory=list)
    imotion: IMotionMap | None = None
    labelings: dict[str, VoxelLabeling] = field(default_factory=dict)

    def all(self) -> list[Tubelet]:
        return self.pools[VID] + self.pools[IMOTION]


def set_threads(n: int) -> None:
    cv2.setNumThreads(max(1, n))


def dominant_motions(video: VideoVolume, cfg: PipelineConfig) -> list[MotionEstimate]:
    if video.frame_count < 2:
        raise ValueError("motion estimation needs at least 2 frames")
    gray = to_grayscale(video).data
    pairs = range(video.frame_count - 1)
    if cfg.run.threads <= 1:
        return [estimate_dominant_motion(gray[t], gray[t + 1], cfg.motion) for t in pairs]
    with ThreadPoolExecutor(cfg.run.threads) as ex:
        return list(ex.map(lambda t: estimate_dominant_motion(gray[t], gray[t + 1], cfg.motion), pairs))


def imotion_maps(estimates: list[MotionEstimate], cfg: PipelineConfig) -> tuple[IMotionMap, IMotionMap]:
    raw = evidence_map(np.stack([e.weights for e in estimates]))
    raw = IMotionMap(np.concatenate([raw.data, raw.data[-1:]], axis=0), raw.stage)
    return raw, close_map(raw, cfg.imotion.se_radius)


def group_source(labeling: VoxelLabeling, features: FeatureVolume, cfg: PipelineConfig,
                 source: str, video: str) -> list[Tubelet]:
    """Run every configured grouping function on one segmentation and return their union."""
    connectivity = cfg.segment_vid.connectivity if source == VID else cfg.segment_imotion.connectivity
    leaves = build_leaves(labeling, features, label_stats(labeling), connectivity)
    per_fn = []
    for name in cfg.grouping.functions:
        res = run_grouping(copy_leaves(leaves), name, features.voxel_count, cfg.grouping.discard_min_size)
        per_fn.append(tubelets_from_result(res, source, video))
        log.debug("%s/%s: %d retained of %d merges", source, name, len(res.retained), len(res.tree.merges))
    return union_phi(per_fn)


def propose(video: VideoVolume, cfg: PipelineConfig | None = None) -> Proposals:
    """Dominant motion, iMotion maps, both segmentations, grouping and the union per source."""
    cfg = cfg or PipelineConfig()
    set_threads(cfg.run.threads)
    name = video.name
    estimates = dominant_motions(video, cfg)
    _, closed = imotion_maps(estimates, cfg)
    features = FeatureVolume(video, binarize(closed, cfg.imotion.tau).data)
    lab_vid = segment(video, cfg.segment_vid)
    lab_imo = segment(closed.data, cfg.segment_imotion)
    pools = {VID: group_source(lab_vid, features, cfg, VID, name),
             IMOTION: group_source(lab_imo, features, cfg, IMOTION, name)}
    log.info("%s: %d vid and %d iMotion proposals", name, len(pools[VID]), len(pools[IMOTION]))
    return Proposals(name, (video.width, video.height), pools, [e.params for e in estimates], closed,
                     {VID: lab_vid, IMOTION: lab_imo})


def trajectories(video: VideoVolume, cfg: PipelineConfig,
                 motions: list[MotionParams] | None = None) -> list[Trajectory]:
    t = cfg.track
    return track(video, t.grid_stride, t.max_length, t, motions)


def refine(pools: dict[str, list[Tubelet]], trajs: list[Trajectory], frame_size: tuple[int, int],
           cfg: PipelineConfig) -> list[Tubelet]:
    return refine_pipeline({VID: pools.get(VID, []), IMOTION: pools.get(IMOTION, [])},
                           cfg.refine, trajs, frame_size)


def run(video: VideoVolume, cfg: PipelineConfig | None = None) -> tuple[list[Tubelet], Proposals, list[Trajectory]]:
    """Full pipeline: proposals, trajectories, pruning and refinement."""
    cfg = cfg or PipelineConfig()
    props = propose(video, cfg)
    trajs = trajectories(video, cfg, props.motions)
    final = refine(props.pools, trajs, props.frame_size, cfg)
    return final, props, trajs
