"""Frame-sequence ingestion, pixel views and overlay rendering."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


class VideoFormatError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel box. ``BoundingBox.EMPTY`` stands for the empty box."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not self.is_empty and (self.x_min > self.x_max or self.y_min > self.y_max):
            raise ValueError(f"degenerate box {self.as_tuple()}")

    @property
    def is_empty(self) -> bool:
        return self.x_max < 0 and self.y_max < 0 and self.x_min > self.x_max

    @property
    def width(self) -> int:
        return 0 if self.is_empty else self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return 0 if self.is_empty else self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def clamp(self, width: int, height: int) -> "BoundingBox":
        if self.is_empty:
            return self
        x0, x1 = max(0, self.x_min), min(width - 1, self.x_max)
        y0, y1 = max(0, self.y_min), min(height - 1, self.y_max)
        if x0 > x1 or y0 > y1:
            return BoundingBox.EMPTY
        return BoundingBox(x0, y0, x1, y1)


BoundingBox.EMPTY = BoundingBox(1, 1, -1, -1)


@dataclass(frozen=True)
class Frame:
    index: int
    pixels: np.ndarray


@dataclass(frozen=True, eq=False)
class VideoVolume:
    """A decoded clip. ``data`` is (frames, height, width) or (frames, height, width, 3) uint8."""

    data: np.ndarray
    name: str = ""
    frame_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.data.ndim not in (3, 4) or self.data.shape[0] < 1:
            raise ValueError("video data must be (F, H, W) or (F, H, W, 3)")
        if self.data.ndim == 4 and self.data.shape[3] != 3:
            raise ValueError("colour video must have 3 channels")
        self.data.setflags(write=False)

    @property
    def frame_count(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def is_color(self) -> bool:
        return self.data.ndim == 4

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape[:3]

    @property
    def voxel_count(self) -> int:
        return self.frame_count * self.height * self.width

    def frame(self, index: int) -> Frame:
        return Frame(index, self.data[index])

    @property
    def frames(self) -> list[Frame]:
        return [self.frame(i) for i in range(self.frame_count)]

    def __len__(self):
        return self.frame_count


def _frame_files(path: Path) -> list[Path]:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise VideoFormatError(f"no frames found in {path}")
    return files


def _read_image(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            return np.asarray(im.convert("L"))
        return np.asarray(im.convert("RGB"))


def load_image_dir(path: str | os.PathLike) -> VideoVolume:
    path = Path(path)
    files = _frame_files(path)
    frames = []
    for k, f in enumerate(files):
        arr = _read_image(f)
        if frames and arr.shape[:2] != frames[0].shape[:2]:
            raise VideoFormatError(f"inconsistent frame size at index {k} ({f.name})")
        frames.append(arr)
    # mixed grey/colour directories are promoted to colour
    if any(a.ndim == 3 for a in frames):
        frames = [np.repeat(a[..., None], 3, axis=2) if a.ndim == 2 else a for a in frames]
    return VideoVolume(np.stack(frames), name=path.name, frame_names=tuple(f.stem for f in files))


_Y4M_MAGIC = b"YUV4MPEG2"


def _ycbcr_to_rgb(y, cb, cr):
    # JFIF full-range BT.601
    y = y.astype(np.float64)
    cb = cb.astype(np.float64) - 128.0
    cr = cr.astype(np.float64) - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)


def load_y4m(path: str | os.PathLike) -> VideoVolume:
    """Decode an uncompressed YUV4MPEG2 stream (mono, 444 or 420 chroma)."""
    path = Path(path)
    raw = path.read_bytes()
    head_end = raw.find(b"\n")
    if head_end < 0 or not raw.startswith(_Y4M_MAGIC):
        raise VideoFormatError(f"{path} is not a YUV4MPEG2 stream")
    params = {}
    for tok in raw[len(_Y4M_MAGIC):head_end].split():
        params[chr(tok[0])] = tok[1:].decode("ascii")
    width, height = int(params["W"]), int(params["H"])
    cs = params.get("C", "420jpeg")
    if cs.startswith("mono"):
        chroma = None
    elif cs.startswith("444") and cs != "444alpha":
        chroma = (height, width)
    elif cs.startswith("420"):
        chroma = ((height + 1) // 2, (width + 1) // 2)
    else:
        raise VideoFormatError(f"unsupported y4m colourspace {cs!r}")
    luma_size = width * height
    chroma_size = 0 if chroma is None else chroma[0] * chroma[1]

    frames = []
    pos = head_end + 1
    while pos < len(raw):
        line_end = raw.find(b"\n", pos)
        if not raw.startswith(b"FRAME", pos) or line_end < 0:
            raise VideoFormatError(f"corrupt frame header at index {len(frames)}")
        pos = line_end + 1
        need = luma_size + 2 * chroma_size
        if pos + need > len(raw):
            raise VideoFormatError(f"truncated frame at index {len(frames)}")
        y = np.frombuffer(raw, np.uint8, luma_size, pos).reshape(height, width)
        if chroma is None:
            frames.append(y.copy())
        else:
            cb = np.frombuffer(raw, np.uint8, chroma_size, pos + luma_size).reshape(chroma)
            cr = np.frombuffer(raw, np.uint8, chroma_size, pos + luma_size + chroma_size).reshape(chroma)
            if chroma != (height, width):
                cb = np.repeat(np.repeat(cb, 2, 0), 2, 1)[:height, :width]
                cr = np.repeat(np.repeat(cr, 2, 0), 2, 1)[:height, :width]
            frames.append(_ycbcr_to_rgb(y, cb, cr))
        pos += need
    if not frames:
        raise VideoFormatError(f"{path} holds no frames")
    return VideoVolume(np.stack(frames), name=path.stem)


def load_video(path: str | os.PathLike, format: str | None = None) -> VideoVolume:
    """Load an image directory (``image_dir``) or a y4m file (``y4m``)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"video path {path} does not exist")
    if format is None:
        format = "image_dir" if path.is_dir() else "y4m"
    if format == "image_dir":
        return load_image_dir(path)
    if format == "y4m":
        return load_y4m(path)
    raise VideoFormatError(f"unsupported format {format!r}")


def save_image_dir(frames: np.ndarray, out_dir: str | os.PathLike, suffix: str = "",
                   names: Sequence[str] | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digits = max(5, len(str(len(frames))))
    paths = []
    for k, frame in enumerate(frames):
        stem = names[k] if names is not None else f"{k:0{digits}d}"
        p = out_dir / f"{stem}{suffix}.png"
        Image.fromarray(np.ascontiguousarray(frame)).save(p)
        paths.append(p)
    return paths


def write_y4m(frames: np.ndarray, path: str | os.PathLike, fps: str = "25:1") -> None:
    """Write grey frames as mono y4m, colour frames as 444 (via JFIF YCbCr)."""
    frames = np.asarray(frames)
    f, h, w = frames.shape[:3]
    cs = "mono" if frames.ndim == 3 else "444"
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{w} H{h} F{fps} Ip A1:1 C{cs}\n".encode("ascii"))
        for frame in frames:
            fh.write(b"FRAME\n")
            if frames.ndim == 3:
                fh.write(frame.astype(np.uint8).tobytes())
                continue
            rgb = frame.astype(np.float64)
            y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
            cb = 128 - 0.168736 * rgb[..., 0] - 0.331264 * rgb[..., 1] + 0.5 * rgb[..., 2]
            cr = 128 + 0.5 * rgb[..., 0] - 0.418688 * rgb[..., 1] - 0.081312 * rgb[..., 2]
            for plane in (y, cb, cr):
                fh.write(np.clip(np.floor(plane + 0.5), 0, 255).astype(np.uint8).tobytes())


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.float64)
    gray = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(gray + 0.5), 0, 255).astype(np.uint8)


def to_grayscale(video: VideoVolume) -> VideoVolume:
    if not video.is_color:
        return video
    return VideoVolume(rgb_to_gray(video.data), name=video.name, frame_names=video.frame_names)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone HSV with every channel scaled to [0, 255] (hue 360 degrees -> 256 steps)."""
    rgb = rgb.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(mx == r, ((g - b) / safe) % 6.0,
                   np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    hue = np.where(delta > 0, hue * 60.0, 0.0)
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    hsv = np.stack([hue / 360.0 * 256.0, sat * 255.0, mx * 255.0], axis=-1)
    return np.clip(np.floor(hsv), 0, 255).astype(np.uint8)


def to_hsv(video: VideoVolume) -> np.ndarray:
    data = video.data if video.is_color else np.repeat(video.data[..., None], 3, axis=-1)
    return rgb_to_hsv(data)


def _draw_outline(img: np.ndarray, box: tuple[int, int, int, int], color, thickness: int = 2):
    h, w = img.shape[:2]
    x0, y0, x1, y1 = (int(v) for v in box)
    x0, x1 = max(0, x0), min(w - 1, x1)
    y0, y1 = max(0, y0), min(h - 1, y1)
    if x0 > x1 or y0 > y1:
        return
    t = thickness
    color = np.asarray(color, dtype=np.uint8)
    img[y0:min(y0 + t, y1 + 1), x0:x1 + 1] = color
    img[max(y1 - t + 1, y0):y1 + 1, x0:x1 + 1] = color
    img[y0:y1 + 1, x0:min(x0 + t, x1 + 1)] = color
    img[y0:y1 + 1, max(x1 - t + 1, x0):x1 + 1] = color


def overlay_frames(video: VideoVolume,
                   boxes: dict[int, Iterable[tuple[tuple[int, int, int, int], tuple[int, int, int]]]],
                   thickness: int = 2) -> np.ndarray:
    """Draw box outlines; later entries of a frame's list are drawn on top."""
    for t in boxes:
        if not 0 <= t < video.frame_count:
            raise IndexError(f"frame index {t} out of range [0, {video.frame_count})")
    data = video.data if video.is_color else np.repeat(video.data[..., None], 3, axis=-1)
    out = np.array(data, copy=True)
    for t, items in boxes.items():
        for box, color in items:
            _draw_outline(out[t], box, color, thickness)
    if not video.is_color and not boxes:
        return np.array(video.data, copy=True)
    return out


def render_overlay(video: VideoVolume, boxes, out_dir: str | os.PathLike,
                   suffix: str = "_overlay", names: Sequence[str] | None = None) -> list[Path]:
    if names is None and video.frame_names:
        names = video.frame_names
    return save_image_dir(overlay_frames(video, boxes), out_dir, suffix=suffix, names=names)
