import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tubelets.evaluation import localization_score
from tubelets.refine import (RefineConfig, local_linear_smooth, motion_prune, overlap_prune, refine_pipeline,
                             regression_bandwidth, spatial_refine, temporal_refine)
from tubelets.trajectories import Trajectory
from tubelets.tubelet import Tubelet


def const(box, n=50, start=0, total=0, source="vid", video="v", profile=None):
    return Tubelet(start, np.tile(box, (n, 1)), source=source, video=video, traj_total=total,
                   traj_profile=profile)


def test_motion_prune_quota():
    pool = [const((0, 0, 5, 5), 3, total=k) for k in range(150)]
    kept = motion_prune(pool, 50, 0.10)
    assert len(kept) == 60
    assert sorted(t.traj_total for t in kept) == list(range(90, 150))
    assert len(motion_prune(pool[:40], 50, 0.10)) == 40


def test_motion_prune_per_video_and_imotion_exempt():
    pool = [const((0, 0, 5, 5), 3, total=k, video=v) for v in "ab" for k in range(70)]
    pool += [const((0, 0, 5, 5), 3, source="imotion") for _ in range(30)]
    kept = motion_prune(pool, 50, 0.10)
    assert sum(t.source == "imotion" for t in kept) == 30
    assert sum(t.video == "a" and t.source == "vid" for t in kept) == 52


def test_motion_prune_preserves_order():
    pool = [const((0, 0, 5, 5), 3, total=t) for t in (5, 1, 9, 3)]
    assert [t.traj_total for t in motion_prune(pool, 2, 0.0)] == [5, 9]


def test_overlap_prune_identical():
    assert len(overlap_prune([const((0, 0, 9, 9))] * 4, 0.8)) == 1


def test_overlap_prune_disjoint():
    assert len(overlap_prune([const((0, 0, 9, 9)), const((20, 20, 29, 29))], 0.8)) == 2


def test_overlap_prune_chain():
    # A~B and B~C above theta, A and C below it
    a = const((0, 0, 9, 9), total=3)
    b = const((1, 0, 10, 9), total=2)
    c = const((2, 0, 11, 9), total=1)
    assert localization_score(a, b) > 0.8 and localization_score(b, c) > 0.8
    assert localization_score(a, c) <= 0.8
    kept = overlap_prune([c, b, a], 0.8)
    assert [t.traj_total for t in kept] == [1, 3]


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_overlap_prune_pairwise_bound(seed):
    r = np.random.default_rng(seed)
    pool = []
    for _ in range(15):
        x, y, s = (int(v) for v in r.integers(0, 20, 3))
        pool.append(const((x, y, x + s, y + s), int(r.integers(3, 10)), int(r.integers(0, 5)),
                          int(r.integers(0, 100))))
    kept = overlap_prune(pool, 0.6)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert localization_score(a, b) <= 0.6
    # every dropped proposal is covered by something kept
    for t in pool:
        if all(t is not k for k in kept):
            assert max(localization_score(t, k) for k in kept) > 0.6


def test_temporal_refine_short_tube():
    assert temporal_refine(const((0, 0, 5, 5), 10, profile=np.ones(10, int))) == []


def test_temporal_refine_uniform():
    t = const((0, 0, 5, 5), 30, profile=np.full(30, 4))
    assert len(temporal_refine(t)) <= 1


def test_temporal_refine_without_profile_passes_through():
    t = const((0, 0, 5, 5), 40)
    assert temporal_refine(t) == [t]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_temporal_refine_finds_step(seed):
    prof = np.ones(900, int)
    prof[100:161] = 10
    t = const((0, 0, 5, 5), 900, start=7, profile=prof)
    subs = temporal_refine(t, seed=seed)
    high = [s for s in subs if s.traj_profile.mean() > 5]
    assert high
    lo, hi = min(s.start for s in high), max(s.end for s in high)
    assert abs(lo - 107) <= 10 and abs(hi - 167) <= 10
    for s in subs:
        assert s.length >= 30 and t.start <= s.start and s.end <= t.end
        assert np.array_equal(s.boxes, t.boxes[s.start - t.start:s.end - t.start + 1])
        assert "temporal" in s.flags


def test_local_linear_preserves_lines():
    y = 3.0 + 0.5 * np.arange(40)
    assert np.allclose(local_linear_smooth(y, 8), y)


def test_bandwidth():
    assert regression_bandwidth(10) == 3 and regression_bandwidth(100) == 20


def test_spatial_refine_constant_identity():
    t = const((10, 12, 29, 35), 40)
    out = spatial_refine(t, [], np.inf, (64, 48))
    assert np.array_equal(out.boxes, t.boxes) and "spatial" in out.flags


def test_spatial_refine_damps_outlier():
    boxes = np.tile([10, 10, 29, 29], (50, 1))
    boxes[25] = (10, 10, 49, 49)
    out = spatial_refine(Tubelet(0, boxes), [], np.inf)
    w = out.boxes[25, 2] - out.boxes[25, 0] + 1
    assert abs(w - 20) <= 0.15 * 20
    assert np.array_equal(out.boxes[:15], boxes[:15])


def test_spatial_refine_clamps_to_frame():
    out = spatial_refine(const((50, 40, 80, 70), 20), [], np.inf, (64, 48))
    assert out.boxes[:, 2].max() == 63 and out.boxes[:, 3].max() == 47


def test_spatial_refine_tight_trajectories_identity():
    t = const((10, 10, 29, 29), 20)
    trajs = [Trajectory(0, np.tile(p, (20, 1))) for p in [(10, 10), (29, 29), (20, 20)]]
    out = spatial_refine(t, trajs, 0.0, (64, 48))
    assert np.array_equal(out.boxes, t.boxes)


def test_spatial_refine_shrinks_to_trajectories():
    t = const((0, 0, 40, 40), 20)
    trajs = [Trajectory(0, np.tile(p, (20, 1))) for p in [(10, 10), (20, 20)]]
    out = spatial_refine(t, trajs, 2.0, (64, 48))
    assert np.all(out.boxes == (8, 8, 22, 22))


def test_pipeline_empty():
    assert refine_pipeline({}, RefineConfig()) == []
    assert refine_pipeline({"vid": [], "imotion": []}, RefineConfig(mode="untrimmed")) == []


def test_pipeline_untrimmed_count_bound():
    r = np.random.default_rng(0)
    vid = []
    for _ in range(80):
        x, y = (int(v) for v in r.integers(0, 30, 2))
        vid.append(const((x, y, x + 15, y + 15), 200, source="vid"))
    trajs = [Trajectory(int(r.integers(0, 180)), np.cumsum(r.normal(0, 1, (15, 2)), 0) + r.uniform(5, 40, 2))
             for _ in range(300)]
    out = refine_pipeline({"vid": vid}, RefineConfig(mode="untrimmed"), trajs, (64, 48))
    # at most 60 survive pruning and each splits into at most floor(200 / 30) runs
    assert len(out) <= 60 * 6


def test_pipeline_trimmed_flags_and_sources():
    pools = {"vid": [const((0, 0, 9, 9), 12)], "imotion": [const((30, 30, 40, 40), 12, source="imotion")]}
    out = refine_pipeline(pools, RefineConfig(), [], (64, 48))
    assert [t.source for t in out] == ["vid", "imotion"]
    assert all(t.flags == ("spatial",) for t in out)


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        RefineConfig(mode="sliding")
    with pytest.raises(ValueError):
        RefineConfig(theta=0)
    with pytest.raises(ValueError):
        RefineConfig(P=-1)
