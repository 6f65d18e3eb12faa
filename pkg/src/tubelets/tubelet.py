"""Tubelet proposals and their JSON serialisation."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

SCHEMA_VERSION = "1.0"


class SchemaError(ValueError):
    pass


@dataclass(eq=False)
class Tubelet:
    """One box per frame over the contiguous span ``[start, start + len(boxes))``."""

    start: int
    boxes: np.ndarray                      # (B, 4) int: x_min, y_min, x_max, y_max
    source: str = "vid"
    grouping_fn: str = ""
    video: str = ""
    flags: tuple[str, ...] = ()
    traj_total: int = 0
    traj_profile: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.int64).reshape(-1, 4)
        if len(self.boxes) == 0:
            raise ValueError("a tubelet needs at least one box")
        if np.any(self.boxes[:, 0] > self.boxes[:, 2]) or np.any(self.boxes[:, 1] > self.boxes[:, 3]):
            raise ValueError("tubelet boxes must satisfy x_min <= x_max and y_min <= y_max")

    @property
    def length(self) -> int:
        return len(self.boxes)

    @property
    def end(self) -> int:
        """Last frame index (inclusive)."""
        return self.start + len(self.boxes) - 1

    @property
    def frames(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self.boxes))

    def box(self, t: int):
        if self.start <= t <= self.end:
            return tuple(int(v) for v in self.boxes[t - self.start])
        return None

    def key(self) -> tuple:
        return (self.video, self.start, self.boxes.tobytes())

    def cuboid(self) -> tuple[int, int, int, int, int, int]:
        """Tight spatiotemporal envelope (t0, x_min, y_min, t1, x_max, y_max)."""
        b = self.boxes
        return (self.start, int(b[:, 0].min()), int(b[:, 1].min()),
                self.end, int(b[:, 2].max()), int(b[:, 3].max()))

    def with_flag(self, flag: str, **changes) -> "Tubelet":
        flags = self.flags if flag in self.flags else self.flags + (flag,)
        return replace(self, flags=flags, **changes)

    def to_dict(self) -> dict:
        d = {
            "source": self.source,
            "grouping_fn": self.grouping_fn,
            "flags": list(self.flags),
            "traj_total": int(self.traj_total),
            "frames": [
                {"t": int(self.start + i), "x_min": int(b[0]), "y_min": int(b[1]),
                 "x_max": int(b[2]), "y_max": int(b[3])}
                for i, b in enumerate(self.boxes)
            ],
        }
        if self.traj_profile is not None:
            d["traj_profile"] = [int(v) for v in self.traj_profile]
        return d

    @classmethod
    def from_dict(cls, d: dict, video: str = "") -> "Tubelet":
        frames = sorted(d["frames"], key=lambda f: f["t"])
        if not frames:
            raise SchemaError("proposal without frames")
        ts = [f["t"] for f in frames]
        if ts != list(range(ts[0], ts[0] + len(ts))):
            raise SchemaError("proposal frames must be contiguous")
        boxes = [[f["x_min"], f["y_min"], f["x_max"], f["y_max"]] for f in frames]
        prof = d.get("traj_profile")
        return cls(ts[0], np.array(boxes), d.get("source", "vid"), d.get("grouping_fn", ""),
                   video, tuple(d.get("flags", ())), int(d.get("traj_total", 0)),
                   None if prof is None else np.asarray(prof, dtype=np.int64))


def check_schema(doc: dict) -> None:
    version = str(doc.get("schema_version", ""))
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")


def proposals_document(tubelets: Iterable[Tubelet], video: str = "", **meta) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "video": video}
    doc.update(meta)
    doc["proposals"] = [t.to_dict() for t in tubelets]
    return doc


def dump_json(doc: dict, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def save_proposals(path: str | os.PathLike, tubelets: Iterable[Tubelet], video: str = "", **meta) -> None:
    dump_json(proposals_document(tubelets, video, **meta), path)


def load_proposals(path: str | os.PathLike) -> tuple[list[Tubelet], dict]:
    doc = json.loads(Path(path).read_text())
    check_schema(doc)
    video = doc.get("video", "")
    tubes = [Tubelet.from_dict(p, video) for p in doc.get("proposals", [])]
    meta = {k: v for k, v in doc.items() if k != "proposals"}
    return tubes, meta
