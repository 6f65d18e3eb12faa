"""Robust dominant-motion estimation between consecutive frames.

The dominant (camera) motion of a frame pair is a 2D parametric flow field,
affine by default::

    u(x, y) = a1 + a2*x + a3*y
    v(x, y) = a4 + a5*x + a6*y

with the quadratic model adding ``a7*x**2 + a8*x*y`` to ``u`` and
``a7*x*y + a8*y**2`` to ``v``.  Parameters are fitted by minimising the sum
of Tukey biweight penalties of the displaced frame difference, with
iteratively reweighted least squares over a Gaussian pyramid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

AFFINE = "affine"
QUADRATIC = "quadratic"
N_PARAMS = {AFFINE: 6, QUADRATIC: 8}

TUKEY_TUNING = 4.6848


@dataclass(frozen=True)
class MotionParams:
    model: str = AFFINE
    a: tuple[float, ...] = (0.0,) * 6

    def __post_init__(self):
        if self.model not in N_PARAMS:
            raise ValueError(f"unknown motion model {self.model!r}")
        if len(self.a) != N_PARAMS[self.model]:
            raise ValueError(f"{self.model} model takes {N_PARAMS[self.model]} coefficients")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("motion coefficients must be finite")

    @classmethod
    def zeros(cls, model: str = AFFINE) -> "MotionParams":
        return cls(model, (0.0,) * N_PARAMS[model])

    def as_array(self) -> np.ndarray:
        return np.asarray(self.a, dtype=np.float64)


@dataclass(frozen=True)
class RobustConfig:
    """IRLS settings. ``tukey_scale=None`` selects the adaptive MAD-based scale."""

    tukey_scale: float | None = None
    min_scale: float = 4.0
    pyramid_levels: int = 3
    irls_iterations: int = 30
    convergence_eps: float = 1e-3
    model: str = AFFINE

    def __post_init__(self):
        if self.tukey_scale is not None and self.tukey_scale <= 0:
            raise ValueError("tukey_scale must be > 0")
        if self.min_scale <= 0:
            raise ValueError("min_scale must be > 0")
        if self.pyramid_levels < 1 or self.irls_iterations < 1:
            raise ValueError("pyramid_levels and irls_iterations must be >= 1")
        if self.model not in N_PARAMS:
            raise ValueError(f"unknown motion model {self.model!r}")


@dataclass
class MotionEstimate:
    params: MotionParams
    residuals: np.ndarray          # displaced frame difference, NaN where invalid
    weights: np.ndarray            # psi(r)/r in [0, 1], NaN where invalid
    scale: float                   # Tukey scale C used for the final weights
    degenerate: bool = False
    objective_history: list[float] = field(default_factory=list)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.residuals)


def velocity(params: MotionParams, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the flow field at ``(x, y)`` (scalars or arrays)."""
    a = params.a
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    u = a[0] + a[1] * x + a[2] * y
    v = a[3] + a[4] * x + a[5] * y
    if params.model == QUADRATIC:
        u = u + a[6] * x * x + a[7] * x * y
        v = v + a[6] * x * y + a[7] * y * y
    return u, v


def tukey_influence_ratio(r, c: float):
    """psi(r)/r of the Tukey biweight: ``(1 - (r/c)^2)^2`` inside the cutoff, 0 outside."""
    if c <= 0:
        raise ValueError("Tukey scale must be > 0")
    r = np.asarray(r, dtype=np.float64)
    u2 = (r / c) ** 2
    out = np.where(u2 < 1.0, (1.0 - u2) ** 2, 0.0)
    return float(out) if out.ndim == 0 else out


def tukey_rho(r, c: float):
    r = np.asarray(r, dtype=np.float64)
    u2 = np.minimum((r / c) ** 2, 1.0)
    return c * c / 6.0 * (1.0 - (1.0 - u2) ** 3)


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        prev = pyr[-1]
        if min(prev.shape) < 16:
            break
        pyr.append(ndimage.gaussian_filter(prev, 1.0, mode="nearest")[::2, ::2])
    return pyr


def _rescale(theta: np.ndarray, model: str, factor: float) -> np.ndarray:
    # w_fine(p) = factor * w_coarse(p / factor)
    out = theta.copy()
    out[0] *= factor
    out[3] *= factor
    if model == QUADRATIC:
        out[6:] /= factor
    return out


class _Level:
    """Precomputed grids for one pyramid level."""

    def __init__(self, i0: np.ndarray, i1: np.ndarray, model: str):
        self.i0 = i0
        self.i1 = i1
        self.model = model
        h, w = i0.shape
        self.shape = (h, w)
        self.y, self.x = np.mgrid[0:h, 0:w].astype(np.float64)
        gy, gx = np.gradient(i1)
        self.gx1, self.gy1 = gx, gy
        self.gy0, self.gx0 = np.gradient(i0)

    def warp(self, theta: np.ndarray):
        u, v = velocity(MotionParams(self.model, tuple(theta)), self.x, self.y)
        xw = self.x + u
        yw = self.y + v
        h, w = self.shape
        valid = (xw >= 0) & (xw <= w - 1) & (yw >= 0) & (yw <= h - 1)
        coords = np.stack([yw, xw])
        warped = ndimage.map_coordinates(self.i1, coords, order=1, mode="nearest")
        r = warped - self.i0
        r[~valid] = np.nan
        return r, valid, coords

    def objective(self, r: np.ndarray, c: float) -> float:
        rho = tukey_rho(np.where(np.isfinite(r), r, np.inf), c)
        return float(np.sum(rho))

    def jacobian(self, coords: np.ndarray, valid: np.ndarray) -> np.ndarray:
        gx = ndimage.map_coordinates(self.gx1, coords, order=1, mode="nearest")
        gy = ndimage.map_coordinates(self.gy1, coords, order=1, mode="nearest")
        # symmetric gradient estimate steadies the Gauss-Newton step
        gx = 0.5 * (gx + self.gx0)
        gy = 0.5 * (gy + self.gy0)
        x, y = self.x, self.y
        cols = [gx, gx * x, gx * y, gy, gy * x, gy * y]
        if self.model == QUADRATIC:
            cols += [gx * x * x + gy * x * y, gx * x * y + gy * y * y]
        return np.stack([c[valid] for c in cols], axis=1)


def _mad_scale(r_valid: np.ndarray, cfg: RobustConfig) -> float:
    if cfg.tukey_scale is not None:
        return cfg.tukey_scale
    if r_valid.size == 0:
        return cfg.min_scale
    med = np.median(r_valid)
    mad = np.median(np.abs(r_valid - med))
    return max(cfg.min_scale, TUKEY_TUNING * mad)


def _corner_displacement(delta: np.ndarray, model: str, shape) -> float:
    h, w = shape
    xs = np.array([0.0, w - 1, 0.0, w - 1])
    ys = np.array([0.0, 0.0, h - 1, h - 1])
    u, v = velocity(MotionParams(model, tuple(delta)), xs, ys)
    return float(np.max(np.hypot(u, v)))


def _irls_level(level: _Level, theta: np.ndarray, cfg: RobustConfig,
                history: list[float] | None = None):
    r, valid, coords = level.warp(theta)
    c = _mad_scale(r[valid], cfg)
    obj = level.objective(r, c)
    if history is not None:
        history.append(obj)
    for _ in range(cfg.irls_iterations):
        if not valid.any():
            break
        wts = tukey_influence_ratio(r[valid], c)
        if not np.any(wts > 0):
            break
        jac = level.jacobian(coords, valid)
        sw = np.sqrt(wts)
        delta, *_ = np.linalg.lstsq(jac * sw[:, None], -r[valid] * sw, rcond=None)
        if not np.all(np.isfinite(delta)):
            break
        # backtrack until the robust objective does not increase
        step = 1.0
        accepted = False
        for _ in range(6):
            cand = theta + step * delta
            r_new, valid_new, coords_new = level.warp(cand)
            obj_new = level.objective(r_new, c)
            if obj_new <= obj:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        theta, r, valid, coords = cand, r_new, valid_new, coords_new
        # scale only shrinks: rho is non-decreasing in C, so the objective stays monotone
        c = min(c, _mad_scale(r[valid], cfg))
        obj = level.objective(r, c)
        if history is not None:
            history.append(obj)
        if _corner_displacement(step * delta, level.model, level.shape) < cfg.convergence_eps:
            break
    return theta, r, c


def estimate_dominant_motion(f_t: np.ndarray, f_t1: np.ndarray,
                             cfg: RobustConfig | None = None) -> MotionEstimate:
    """Fit the dominant motion mapping frame ``f_t`` onto ``f_t1``.

    Frames are single-channel arrays of equal shape. Returns the parameters,
    the displaced frame difference ``I(p + w(p), t+1) - I(p, t)`` and the
    Tukey influence weights at the final estimate.
    """
    cfg = cfg or RobustConfig()
    f0 = np.asarray(f_t, dtype=np.float64)
    f1 = np.asarray(f_t1, dtype=np.float64)
    if f0.shape != f1.shape:
        raise ValueError(f"frame size mismatch: {f0.shape} vs {f1.shape}")
    if f0.ndim != 2:
        raise ValueError("frames must be single-channel")
    model = cfg.model
    n = N_PARAMS[model]

    if not (np.any(np.diff(f0, axis=0)) or np.any(np.diff(f0, axis=1))
            or np.any(np.diff(f1, axis=0)) or np.any(np.diff(f1, axis=1))):
        r = f1 - f0
        c = _mad_scale(r.ravel(), cfg)
        return MotionEstimate(MotionParams.zeros(model), r, tukey_influence_ratio(r, c),
                              c, degenerate=True)

    pyr0 = _pyramid(f0, cfg.pyramid_levels)
    pyr1 = _pyramid(f1, cfg.pyramid_levels)
    theta = np.zeros(n)
    history: list[float] = []
    for k in range(len(pyr0) - 1, -1, -1):
        level = _Level(pyr0[k], pyr1[k], model)
        theta, r, c = _irls_level(level, theta, cfg, history if k == 0 else None)
        if k > 0:
            theta = _rescale(theta, model, 2.0)

    weights = np.full(r.shape, np.nan)
    valid = np.isfinite(r)
    weights[valid] = tukey_influence_ratio(r[valid], c)
    return MotionEstimate(MotionParams(model, tuple(float(v) for v in theta)), r, weights, c,
                          objective_history=history)

