import numpy as np
import pytest

from mepck.design_space import Domain
from mepck.sampling import (
    ExperimentalDesign,
    ForwardEvalError,
    load_ed_csv,
    min_pairwise_distance,
    mipt_fill,
    mipt_next,
    save_ed_csv,
)


class StubRng:
    """Feeds a fixed candidate block, mimicking a seeded generator."""

    def __init__(self, unit_rows):
        self.unit_rows = np.asarray(unit_rows, dtype=float)

    def random(self, shape):
        n, m = shape
        assert self.unit_rows.shape[1] == m
        reps = int(np.ceil(n / self.unit_rows.shape[0]))
        return np.tile(self.unit_rows, (reps, 1))[:n]


UNIT_SQUARE = Domain([0.0, 0.0], [1.0, 1.0])


def test_mipt_next_prefers_far_corner():
    ed = ExperimentalDesign([[0.5, 0.5]], [0.0])
    corners = StubRng([[0, 0], [0, 1], [1, 0], [1, 1]])
    pick = mipt_next(ed, UNIT_SQUARE, n_candidates=4, rng=corners)
    assert set(np.round(pick, 12)) <= {0.0, 1.0}


def test_mipt_next_empty_design_returns_first():
    stub = StubRng([[0.3, 0.7], [0.9, 0.9]])
    pick = mipt_next(None, UNIT_SQUARE, n_candidates=2, rng=stub)
    assert np.allclose(pick, [0.3, 0.7])
    pick2 = mipt_next(ExperimentalDesign.empty(2), UNIT_SQUARE, 2, stub)
    assert np.allclose(pick2, [0.3, 0.7])


def test_mipt_next_min_distance_comparison():
    # min dist of (0.5,0.5) to {(0,0),(1,1)} is 0.7071; of (0.1,0.1) it is 0.1414
    ed = ExperimentalDesign([[0.0, 0.0], [1.0, 1.0]], [0.0, 0.0])
    stub = StubRng([[0.5, 0.5], [0.1, 0.1]])
    pick = mipt_next(ed, UNIT_SQUARE, n_candidates=2, rng=stub)
    assert np.allclose(pick, [0.5, 0.5])
    d_good = np.sqrt(2) * 0.5
    d_bad = np.sqrt(2) * 0.1
    assert d_good == pytest.approx(0.7071067811865476)
    assert d_bad == pytest.approx(0.14142135623730953)


def test_mipt_fill_noop_when_target_met():
    ed = ExperimentalDesign([[0.2, 0.2], [0.8, 0.8]], [1.0, 2.0])
    out = mipt_fill(ed, UNIT_SQUARE, target_n=2, n_candidates=10, rng=0,
                    forward=lambda x: 0.0)
    assert out is ed


def test_mipt_fill_counts_forward_evaluations():
    calls = []

    def forward(x):
        calls.append(np.array(x))
        return float(x[0])

    ed = ExperimentalDesign([[0.5, 0.5]], [0.5])
    out = mipt_fill(ed, UNIT_SQUARE, target_n=6, n_candidates=50, rng=3, forward=forward)
    assert len(calls) == 5
    assert len(out) == 6
    assert np.allclose(out.inputs[0], [0.5, 0.5])  # prior samples retained


def test_mipt_fill_target_below_count_raises():
    ed = ExperimentalDesign([[0.2, 0.2], [0.8, 0.8]], [1.0, 2.0])
    with pytest.raises(ValueError, match="below current count"):
        mipt_fill(ed, UNIT_SQUARE, target_n=1, n_candidates=5, rng=0, forward=lambda x: 0.0)


def test_mipt_fill_deterministic():
    f = lambda x: float(np.sum(x))
    a = mipt_fill(None, UNIT_SQUARE, 20, 500, np.random.default_rng(11), f)
    b = mipt_fill(None, UNIT_SQUARE, 20, 500, np.random.default_rng(11), f)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.outputs, b.outputs)


def test_mipt_points_inside_box_and_dispersion_monotone():
    box = Domain([2.0, -1.0], [3.0, 4.0])
    ed = None
    rng = np.random.default_rng(5)
    prev = None
    for _ in range(25):
        pick = mipt_next(ed, box, 200, rng)
        assert np.all(pick > box.lower) and np.all(pick < box.upper)
        if ed is None:
            ed = ExperimentalDesign(pick[None, :], [0.0])
        else:
            # the appended point's distance to the design equals the new
            # minimum pairwise distance by construction of the argmax
            dists = np.linalg.norm(ed.inputs - pick, axis=1)
            ed = ExperimentalDesign(
                np.vstack([ed.inputs, pick]), np.zeros(len(ed) + 1), validate=False
            )
            new_min = min_pairwise_distance(ed.inputs)
            assert new_min <= dists.min() + 1e-12
        prev = pick


def test_mipt_beats_uniform_dispersion():
    # scaled-down version of the study comparison; the acceptance suite runs
    # the full 100-point, 20-seed variant
    box = Domain([0.0, 0.0], [1.0, 1.0])
    n, seeds = 40, 7
    mipt_meds, unif_meds = [], []
    for s in range(seeds):
        ed = mipt_fill(None, box, n, 2000, np.random.default_rng(s), lambda x: 0.0)
        mipt_meds.append(min_pairwise_distance(ed.inputs))
        u = np.random.default_rng(1000 + s).random((n, 2))
        unif_meds.append(min_pairwise_distance(u))
    assert np.median(mipt_meds) > np.median(unif_meds)


def test_forward_error_carries_point():
    def bad(x):
        raise RuntimeError("boom")

    with pytest.raises(ForwardEvalError) as err:
        mipt_fill(None, UNIT_SQUARE, 1, 10, 0, bad)
    assert err.value.x.shape == (2,)


def test_duplicate_rows_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        ExperimentalDesign([[0.1, 0.1], [0.1, 0.1]], [0.0, 0.0])


def test_ed_csv_round_trip(tmp_path):
    ed = ExperimentalDesign([[0.1, 0.9], [0.4, 0.2]], [1.5, -2.25])
    path = tmp_path / "ed.csv"
    save_ed_csv(path, ed)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,y"
    back = load_ed_csv(path)
    assert np.array_equal(back.inputs, ed.inputs)
    assert np.array_equal(back.outputs, ed.outputs)
