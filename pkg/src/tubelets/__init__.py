"""Unsupervised spatiotemporal action proposals (Tubelets) from motion-aware super-voxels."""
from .evaluation import GroundTruthInstance, abo, evaluate, localization_score, mabo, recall_at
from .tubelet import SCHEMA_VERSION, Tubelet, load_proposals, save_proposals
from .video_io import BoundingBox, VideoVolume, load_video

__version__ = "0.1.0"

__all__ = ["BoundingBox", "GroundTruthInstance", "SCHEMA_VERSION", "Tubelet", "VideoVolume", "abo",
           "evaluate", "load_proposals", "load_video", "localization_score", "mabo", "recall_at",
           "save_proposals"]
