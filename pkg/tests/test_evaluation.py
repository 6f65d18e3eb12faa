import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tubelets.evaluation import (DenseTubes, GroundTruthInstance, abo, best_overlaps, box_iou,
                                 correct_localization, cuboid_envelope, evaluate, ground_truth_document,
                                 load_ground_truth, localization_score, mabo, recall_at, write_report)
from tubelets.tubelet import Tubelet

from oracles import brute_iou, brute_localization

BOX = (10, 10, 19, 19)


def seq(frames, box=BOX):
    return {t: box for t in frames}


def tube(start, boxes, video="v"):
    return Tubelet(start, np.asarray(boxes).reshape(-1, 4), video=video)


@st.composite
def box_seqs(draw):
    start = draw(st.integers(0, 10))
    n = draw(st.integers(1, 8))
    out = {}
    for t in range(start, start + n):
        if draw(st.booleans()) or not out:
            x0, y0 = draw(st.integers(0, 30)), draw(st.integers(0, 30))
            out[t] = (x0, y0, x0 + draw(st.integers(0, 15)), y0 + draw(st.integers(0, 15)))
    return out


def test_one_third_by_hand():
    assert localization_score(seq([0, 1]), seq([1, 2])) == pytest.approx(1 / 3)


def test_identical_and_disjoint():
    assert localization_score(seq(range(5)), seq(range(5))) == 1.0
    assert localization_score(seq(range(3)), seq(range(5, 8))) == 0.0
    assert localization_score(seq([0]), seq([0], (30, 30, 35, 35))) == 0.0


def test_inclusive_pixel_iou():
    assert box_iou(np.array([0, 0, 0, 0]), np.array([0, 0, 0, 0])) == 1.0
    assert box_iou(np.array([0, 0, 1, 1]), np.array([1, 1, 2, 2])) == pytest.approx(1 / 7)


def test_empty_sequences_rejected():
    with pytest.raises(ValueError):
        localization_score({}, {})


@settings(max_examples=100)
@given(box_seqs(), box_seqs())
def test_score_matches_brute_force(gt, dt):
    assert abs(localization_score(gt, dt) - brute_localization(gt, dt)) <= 1e-12
    assert abs(localization_score(gt, dt) - localization_score(dt, gt)) <= 1e-12
    assert 0.0 <= localization_score(gt, dt) <= 1.0


@settings(max_examples=50)
@given(box_seqs(), st.lists(box_seqs(), min_size=1, max_size=5))
def test_dense_scores_match_scalar(gt, dts):
    tubes = []
    for d in dts:
        frames = sorted(d)
        # tubelets are contiguous: fill holes with the previous box
        boxes = [d.get(t) or d[max(f for f in frames if f < t)] for t in range(frames[0], frames[-1] + 1)]
        tubes.append(tube(frames[0], boxes))
    dense = DenseTubes(tubes).scores_against(gt)
    for s, t in zip(dense, tubes):
        assert s == pytest.approx(localization_score(gt, t), abs=1e-12)


@given(box_seqs(), box_seqs())
def test_iou_oracle(a, b):
    for t in set(a) & set(b):
        assert box_iou(np.array(a[t]), np.array(b[t])) == pytest.approx(brute_iou(a[t], b[t]), abs=1e-12)


def test_spatial_only_ignores_extra_proposal_frames():
    gt = seq(range(2, 4))
    dt = seq(range(0, 10))
    assert localization_score(gt, dt) == pytest.approx(0.2)
    assert localization_score(gt, dt, spatial_only=True) == 1.0


def test_cuboid_envelope():
    env = cuboid_envelope({0: (1, 2, 3, 4), 2: (0, 5, 2, 9)})
    assert env == {0: (0, 2, 3, 9), 1: (0, 2, 3, 9), 2: (0, 2, 3, 9)}


def _gts():
    return [GroundTruthInstance("v", "run", seq(range(0, 4))),
            GroundTruthInstance("v", "run", seq(range(10, 14), (30, 30, 39, 39))),
            GroundTruthInstance("w", "jump", seq(range(0, 4)))]


def test_abo_recall_examples():
    gts = _gts()
    pool = [tube(0, [BOX] * 4), tube(10, [(30, 30, 39, 39)] * 2)]
    assert best_overlaps(gts, pool).tolist() == [1.0, 0.5, 0.0]
    assert abo(gts[:2], pool) == 0.75
    assert mabo(gts, pool) == pytest.approx((0.75 + 0.0) / 2)
    per_class, mean = recall_at(gts, pool, 0.5)
    assert per_class == {"jump": 0.0, "run": 0.5} and mean == 0.25
    assert recall_at(gts, pool, 0.49)[0]["run"] == 1.0


def test_empty_pool_scores_zero():
    assert abo(_gts(), []) == 0.0


@settings(max_examples=30)
@given(st.lists(box_seqs(), min_size=1, max_size=4), st.lists(box_seqs(), min_size=1, max_size=4))
def test_pool_extension_never_hurts(base, extra):
    gts = [GroundTruthInstance("v", "a", seq(range(3)))]

    def as_tubes(ds):
        out = []
        for d in ds:
            frames = sorted(d)
            out.append(tube(frames[0], [d.get(t) or d[frames[0]] for t in range(frames[0], frames[-1] + 1)]))
        return out

    a, b = as_tubes(base), as_tubes(extra)
    assert abo(gts, a + b) >= abo(gts, a)
    assert recall_at(gts, a + b)[1] >= recall_at(gts, a)[1]


def test_recall_non_increasing_in_sigma():
    r = np.random.default_rng(3)
    gts = [GroundTruthInstance("v", "c%d" % (k % 3), seq(range(k, k + 5), (k, k, k + 10, k + 10)))
           for k in range(12)]
    pool = [tube(int(r.integers(0, 12)), [(int(x), int(x), int(x) + 10, int(x) + 10)
                                          for x in r.integers(0, 14, 6)]) for _ in range(40)]
    rec = [recall_at(gts, pool, s)[1] for s in np.linspace(0.05, 0.95, 19)]
    assert all(b <= a for a, b in zip(rec, rec[1:]))
    curve = [r_ for _, r_ in evaluate(gts, pool).curve]
    assert all(b <= a for a, b in zip(curve, curve[1:]))


@pytest.mark.parametrize("sigma", [0.0, 1.0, -0.1, 1.5])
def test_sigma_bounds(sigma):
    with pytest.raises(ValueError):
        recall_at(_gts(), [], sigma)


def test_correct_localization():
    gt = _gts()[0]
    good = tube(0, [BOX] * 4)
    assert correct_localization(gt, good, "run")
    assert not correct_localization(gt, good, "jump")
    assert not correct_localization(gt, tube(0, [BOX] * 2), "run", 0.5)     # exactly 0.5 is not enough


def test_ground_truth_round_trip(tmp_path):
    p = tmp_path / "gt.json"
    p.write_text(json.dumps({"instances": ground_truth_document(_gts())}))
    back = load_ground_truth(p)
    assert [(g.video, g.label, g.boxes) for g in back] == [(g.video, g.label, g.boxes) for g in _gts()]


def test_ground_truth_needs_a_box():
    with pytest.raises(ValueError):
        GroundTruthInstance("v", "c", {})


def test_report_files(tmp_path):
    gts = _gts()
    rep = evaluate(gts, [tube(0, [BOX] * 4), tube(0, [BOX] * 4, video="x")])
    paths = write_report(rep, tmp_path / "r")
    summary = json.loads(paths["summary"].read_text())
    assert summary["mabo"] == pytest.approx(0.25)
    assert summary["proposal_counts"] == {"v": 1, "w": 0, "x": 1}
    rows = list(csv.reader(open(paths["per_class"])))
    assert rows[0] == ["class", "abo", "recall@0.5"] and rows[1][0] == "jump"
    assert len(list(csv.reader(open(paths["curve"])))) == 20
