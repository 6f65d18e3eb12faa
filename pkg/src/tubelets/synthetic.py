"""Synthetic clips with known ground truth: textured scenes, camera pan, moving shapes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .video_io import VideoVolume


def texture(shape, rng: np.random.Generator, smooth: float = 1.5,
            lo: float = 0.0, hi: float = 255.0) -> np.ndarray:
    """Smoothed noise rescaled to [lo, hi]."""
    t = ndimage.gaussian_filter(rng.uniform(0, 1, shape), smooth, mode="wrap")
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    return lo + t * (hi - lo)


def colored_texture(h: int, w: int, rng: np.random.Generator, base=(128, 128, 128),
                    amplitude: float = 60.0, smooth: float = 1.5) -> np.ndarray:
    out = np.empty((h, w, 3))
    for c in range(3):
        out[..., c] = base[c] + texture((h, w), rng, smooth, -amplitude, amplitude)
    return np.clip(out, 0, 255)


@dataclass
class MovingShape:
    """A textured rectangle or ellipse following ``path(t) -> (x, y)`` of its top-left corner."""

    kind: str
    width: int
    height: int
    path: Callable[[int], tuple[float, float]]
    t_begin: int = 0
    t_end: int | None = None
    base_color: tuple[int, int, int] = (220, 40, 40)
    label: str = "action"
    seed: int = 1
    _tex: np.ndarray | None = field(default=None, repr=False)

    def texture(self) -> np.ndarray:
        if self._tex is None:
            rng = np.random.default_rng(self.seed)
            self._tex = colored_texture(self.height, self.width, rng, self.base_color, 35.0, 1.0)
        return self._tex

    def mask(self) -> np.ndarray:
        if self.kind == "rect":
            return np.ones((self.height, self.width), bool)
        yy, xx = np.mgrid[0:self.height, 0:self.width]
        cy, cx = (self.height - 1) / 2.0, (self.width - 1) / 2.0
        return ((yy - cy) / (self.height / 2.0)) ** 2 + ((xx - cx) / (self.width / 2.0)) ** 2 <= 1.0

    def active(self, t: int) -> bool:
        return t >= self.t_begin and (self.t_end is None or t <= self.t_end)


def linear_path(x0: float, y0: float, vx: float, vy: float, t0: int = 0):
    return lambda t: (x0 + vx * (t - t0), y0 + vy * (t - t0))


def bounce_path(x0: float, y0: float, vx: float, vy: float, xlim: tuple[float, float],
                ylim: tuple[float, float]):
    """Constant speed with reflections inside ``xlim``/``ylim`` (top-left corner ranges)."""
    def fold(p, lo, hi):
        span = hi - lo
        if span <= 0:
            return lo
        q = (p - lo) % (2 * span)
        return lo + (q if q <= span else 2 * span - q)
    return lambda t: (fold(x0 + vx * t, *xlim), fold(y0 + vy * t, *ylim))


def sine_path(cx: float, cy: float, ax: float, ay: float, period: float, phase: float = 0.0):
    """Smooth back-and-forth motion of the top-left corner around (cx, cy)."""
    w = 2 * np.pi / period
    return lambda t: (cx + ax * np.sin(w * t + phase), cy + ay * np.sin(w * t + 2 * phase))


@dataclass
class SyntheticClip:
    video: VideoVolume
    gt_boxes: dict[str, dict[int, tuple[int, int, int, int]]]
    pan: np.ndarray


def render_clip(width: int, height: int, frames: int, shapes: list[MovingShape],
                pan: tuple[float, float] = (0.0, 0.0), seed: int = 0,
                noise: float = 0.0, name: str = "synthetic") -> SyntheticClip:
    """Render a clip; shapes are placed in frame coordinates, background pans by ``pan`` px/frame."""
    rng = np.random.default_rng(seed)
    margin = int(np.ceil(max(abs(pan[0]), abs(pan[1])) * frames)) + 4
    bg = colored_texture(height + 2 * margin, width + 2 * margin, rng, (120, 130, 110), 70.0, 1.5)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    out = np.empty((frames, height, width, 3), np.uint8)
    offsets = np.zeros((frames, 2))
    gt: dict[str, dict[int, tuple[int, int, int, int]]] = {s.label: {} for s in shapes}
    for t in range(frames):
        ox = margin + pan[0] * t
        oy = margin + pan[1] * t
        offsets[t] = (pan[0] * t, pan[1] * t)
        frame = np.stack([ndimage.map_coordinates(bg[..., c], [yy + oy, xx + ox], order=1)
                          for c in range(3)], axis=-1)
        for s in shapes:
            if not s.active(t):
                continue
            px, py = s.path(t)
            x0, y0 = int(round(px)), int(round(py))
            m = s.mask()
            tex = s.texture()
            ys0, xs0 = max(0, y0), max(0, x0)
            ys1, xs1 = min(height, y0 + s.height), min(width, x0 + s.width)
            if ys0 >= ys1 or xs0 >= xs1:
                continue
            sub_m = m[ys0 - y0:ys1 - y0, xs0 - x0:xs1 - x0]
            sub_t = tex[ys0 - y0:ys1 - y0, xs0 - x0:xs1 - x0]
            region = frame[ys0:ys1, xs0:xs1]
            region[sub_m] = sub_t[sub_m]
            ys, xs = np.nonzero(sub_m)
            if ys.size:
                gt[s.label][t] = (int(xs.min() + xs0), int(ys.min() + ys0),
                                  int(xs.max() + xs0), int(ys.max() + ys0))
        if noise > 0:
            frame = frame + rng.normal(0, noise, frame.shape)
        out[t] = np.clip(np.floor(frame + 0.5), 0, 255).astype(np.uint8)
    return SyntheticClip(VideoVolume(out, name=name), gt, offsets)


def moving_rectangle_clip(width: int = 64, height: int = 48, frames: int = 12,
                          pan: tuple[float, float] = (1.0, 0.0), seed: int = 0) -> SyntheticClip:
    """Panning textured background with one independently moving rectangle."""
    rect = MovingShape("rect", 14, 12, linear_path(10, 18, 2.0, 0.5), seed=seed + 11)
    return render_clip(width, height, frames, [rect], pan=pan, seed=seed, name="moving_rectangle")


def trimmed_suite(seed: int = 0) -> list[SyntheticClip]:
    """Five short trimmed clips: rectangles and ellipses under camera pan."""
    w, h = 64, 48
    specs = [
        (100, (0.5, 0.0), [MovingShape("rect", 14, 18, sine_path(24, 15, 16, 5, 110, 0.3),
                                       base_color=(220, 50, 40), seed=21)]),
        (120, (-0.4, 0.2), [MovingShape("ellipse", 18, 14, sine_path(22, 16, 16, 8, 130, 1.9),
                                        base_color=(40, 60, 220), seed=22)]),
        (150, (0.3, 0.3), [MovingShape("rect", 12, 20, sine_path(26, 13, 18, 9, 160, 0.7),
                                       base_color=(230, 210, 40), seed=23)]),
        (180, (0.0, -0.3), [MovingShape("ellipse", 16, 16, sine_path(24, 15, 18, 10, 190, 2.5),
                                        base_color=(200, 40, 200), seed=24)]),
        (200, (0.6, -0.2), [MovingShape("rect", 16, 14, sine_path(24, 17, 18, 11, 210, 4.0),
                                        base_color=(40, 200, 60), seed=25)]),
    ]
    clips = []
    for k, (frames, pan, shapes) in enumerate(specs):
        clips.append(render_clip(w, h, frames, shapes, pan=pan, seed=seed + k, name=f"trimmed_{k}"))
    return clips


def untrimmed_clip(frames: int = 900, action: tuple[int, int] = (108, 151), width: int = 64,
                   height: int = 48, actor: tuple[int, int] = (24, 30), seed: int = 0) -> SyntheticClip:
    """Static camera; an actor stands still for the whole clip and moves only during ``action``."""
    a0, a1 = action
    aw, ah = actor
    x_rest, y_rest = (width - aw) / 2.0 - 6, (height - ah) / 2.0

    def path(t):
        if a0 <= t <= a1:
            # triangle wave, 2 px/frame, amplitude 6 px
            phase = (t - a0) % 12
            dx = 2 * phase if phase <= 6 else 2 * (12 - phase)
            return (x_rest + dx, y_rest)
        return (x_rest, y_rest)

    shape = MovingShape("rect", aw, ah, path, base_color=(210, 60, 50), label="action", seed=seed + 31)
    return render_clip(width, height, frames, [shape], seed=seed, name="untrimmed")
