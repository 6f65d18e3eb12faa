import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy import ndimage

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def textured(h, w, seed=0, smooth=1.5):
    r = np.random.default_rng(seed).uniform(0, 1, (h, w))
    t = ndimage.gaussian_filter(r, smooth, mode="wrap")
    return (t - t.min()) / (t.max() - t.min()) * 200 + 20


def shifted_pair(h, w, shift, seed=0, patch=None):
    """f1(p + shift) = f0(p) on a smooth texture; optional (y0, x0, size, dx, dy) patch moving on its own."""
    big = textured(h + 40, w + 40, seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    f0 = ndimage.map_coordinates(big, [yy + 20, xx + 20], order=3)
    f1 = ndimage.map_coordinates(big, [yy + 20 - shift[1], xx + 20 - shift[0]], order=3)
    if patch is not None:
        y0, x0, s, dx, dy = patch
        tex = textured(s, s, seed + 99) + 30
        f0[y0:y0 + s, x0:x0 + s] = tex
        f1[y0 + dy:y0 + dy + s, x0 + dx:x0 + dx + s] = tex
    return f0, f1
