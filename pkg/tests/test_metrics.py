import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import mk_dataset, mk_trace, random_walk_trace
from ziptrace.errors import UndefinedScoreError, UnknownUserError
from ziptrace.metrics import (
    classify_type,
    jaccard_score,
    mixing_score,
    score_dataset,
)
from ziptrace.traces import Dataset


class TestJaccard:
    def test_partial_overlap(self):
        # towers {A,B} vs {B,C}
        train = mk_trace(1, (0, 0, 5), (1, 5, 9))
        test = mk_trace(1, (1, 20, 25), (2, 25, 30))
        assert jaccard_score(train, test) == pytest.approx(1 / 3)

    def test_identical_sets(self):
        train = mk_trace(1, (0, 0, 5), (1, 5, 9))
        test = mk_trace(1, (1, 20, 25), (0, 25, 30))
        assert jaccard_score(train, test) == 1.0

    def test_disjoint_sets(self):
        train = mk_trace(1, (0, 0, 5))
        test = mk_trace(1, (7, 10, 15))
        assert jaccard_score(train, test) == 0.0

    def test_empty_trace_is_an_error(self):
        from ziptrace.traces import Trace

        with pytest.raises(UndefinedScoreError):
            jaccard_score(Trace(1, ()), mk_trace(1, (0, 0, 5)))

    @given(st.sets(st.integers(0, 20), min_size=1, max_size=8),
           st.sets(st.integers(0, 20), min_size=1, max_size=8))
    def test_symmetric_and_bounded(self, towers_a, towers_b):
        def trace_of(towers):
            return mk_trace(1, *((t, 10 * i, 10 * i + 5) for i, t in enumerate(sorted(towers))))

        a, b = trace_of(towers_a), trace_of(towers_b)
        j1, j2 = jaccard_score(a, b), jaccard_score(b, a)
        assert j1 == j2
        assert 0.0 <= j1 <= 1.0


class TestMixingScore:
    def test_alone_in_dataset_scores_zero(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 100), (1, 100, 200)))
        assert mixing_score(ds, 1) == 0.0

    def test_single_arrival_ten_seconds_in(self):
        # Other user arrives at t=10 during u's dwell [0, 100] and stays past
        # its end: one encounter instant, co-location count 1, gap 10.
        ds = mk_dataset(
            mk_trace(1, (5, 0, 100)),
            mk_trace(2, (5, 10, 150)),
        )
        assert mixing_score(ds, 1) == pytest.approx(1 / 10)

    def test_doubling_colocated_users_doubles_score(self):
        # A background user present for the whole dwell doubles the count at
        # the same encounter instant.
        ds = mk_dataset(
            mk_trace(1, (5, 0, 100)),
            mk_trace(2, (5, 10, 150)),
            mk_trace(3, (5, 0, 150)),
        )
        base = mk_dataset(mk_trace(1, (5, 0, 100)), mk_trace(2, (5, 10, 150)))
        assert mixing_score(base, 1) == pytest.approx(1 / 10)
        # User 3 arrives at t=0 (gap floored to 1, count 1 at that instant)
        # and is present at user 2's arrival.
        assert mixing_score(ds, 1) == pytest.approx(1 / 1 + 2 / 10)

    def test_departure_instants_count(self):
        # Other user departs 40 s into the dwell; at the departure instant it
        # is no longer attached, so the count there is 0. Only its arrival
        # before the dwell contributes nothing (outside the window).
        ds = mk_dataset(
            mk_trace(1, (5, 0, 100)),
            mk_trace(2, (5, 10, 40)),
        )
        # instants: arrival@10 (count 1, gap 10), departure@40 (count 0).
        assert mixing_score(ds, 1) == pytest.approx(1 / 10)

    def test_gap_floor_configurable(self):
        ds = mk_dataset(
            mk_trace(1, (5, 0, 100)),
            mk_trace(2, (5, 0, 150)),
        )
        # Arrival exactly at dwell start: zero gap floored.
        assert mixing_score(ds, 1, gap_floor=1) == pytest.approx(1.0)
        assert mixing_score(ds, 1, gap_floor=2) == pytest.approx(0.5)

    def test_unknown_user_raises(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 10)))
        with pytest.raises(UnknownUserError):
            mixing_score(ds, 9)

    def test_non_negative_and_zero_iff_never_colocated(self):
        rng = np.random.default_rng(7)
        ds = Dataset(tuple(random_walk_trace(rng, u, 6, 25) for u in range(6)))
        for u in ds.users:
            m = mixing_score(ds, u)
            assert m >= 0.0

    def test_merged_dwell_is_one_window(self):
        # Two contiguous events at the same tower form one dwell; an arrival
        # during the second event still measures its gap from the dwell start.
        ds = mk_dataset(
            mk_trace(1, (5, 0, 50), (5, 50, 100)),
            mk_trace(2, (5, 80, 150)),
        )
        assert mixing_score(ds, 1) == pytest.approx(1 / 80)


class TestTypology:
    def test_threshold_classification(self):
        assert classify_type(0.3, 10) == "P/M"
        assert classify_type(0.05, 2) == "nP/nM"
        assert classify_type(0.3, 2) == "P/nM"
        assert classify_type(0.05, 10) == "nP/M"

    def test_boundary_values_are_not_strictly_greater(self):
        assert classify_type(0.1, 4) == "nP/nM"
        assert classify_type(0.1, 10) == "nP/M"
        assert classify_type(0.3, 4) == "P/nM"

    def test_partition_is_total(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            t = classify_type(float(rng.uniform(0, 1)), float(rng.uniform(0, 20)))
            assert t in {"P/M", "nP/M", "P/nM", "nP/nM"}

    def test_score_dataset_skips_users_missing_from_a_half(self):
        ds = mk_dataset(
            mk_trace(1, (0, 0, 10), (1, 20, 30)),
            mk_trace(2, (0, 0, 10)),          # train only
            mk_trace(3, (0, 25, 35)),         # test only
        )
        scores = score_dataset(ds, 15)
        assert [s.user for s in scores] == [1]
