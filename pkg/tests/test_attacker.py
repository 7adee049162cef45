import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import (
    mk_dataset,
    mk_trace,
    random_link_instance,
    random_profiles_instance,
    random_walk_trace,
)
from ziptrace.attacker import (
    LocationProfiler,
    ProfileScorer,
    TrajectoryLinker,
    TransitionMatrix,
    build_profiles,
    classify,
    collapse_repeats,
    evaluate_accuracy,
    link_and_classify,
    link_chain,
    profile_user,
    smooth_row,
    train_link_matrix,
)
from ziptrace.errors import (
    ParameterError,
    TraceValidationError,
    UnknownUserError,
)
from ziptrace.oracle import exact_classify, exact_link_chain
from ziptrace.traces import AnonTrace, Dataset, TowerEvent


class TestProfileUser:
    def test_transition_ratios_before_smoothing(self):
        # History A->B, A->B, A->C.
        tr = mk_trace(1, (0, 0, 1), (1, 1, 2), (0, 2, 3), (1, 3, 4), (0, 4, 5), (2, 5, 6))
        m = profile_user(mk_dataset(tr), 1)
        n = sum(c for (p, _), c in m.counts.items() if p == 0)
        assert m.counts[(0, 1)] / n == pytest.approx(2 / 3)
        assert m.counts[(0, 2)] / n == pytest.approx(1 / 3)

    def test_single_tower_history(self):
        tr = mk_trace(1, (4, 0, 10), (4, 10, 20), (4, 25, 30))
        m = profile_user(mk_dataset(tr), 1)
        assert m.start_prob(4) == 1.0
        assert m.counts == {}

    def test_unknown_user_raises(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 5)))
        with pytest.raises(UnknownUserError):
            profile_user(ds, 99)

    def test_empty_trace_error_is_distinct_from_unknown_user(self):
        from ziptrace.traces import Dataset, Trace

        ds = Dataset((Trace(1, ()),))
        with pytest.raises(TraceValidationError):
            profile_user(ds, 1)

    def test_rows_stochastic_on_synthetic_population(self):
        rng = np.random.default_rng(5)
        ds = Dataset(tuple(random_walk_trace(rng, u, 12, 40) for u in range(50)))
        profiles = build_profiles(ds)
        for m in profiles.values():
            for p in m.rows():
                assert sum(m.row_vector(p).values()) == pytest.approx(1.0, abs=1e-9)
            assert sum(m.start_prob(q) for q in m.universe) == pytest.approx(1.0, abs=1e-9)


class TestSmoothing:
    @given(st.dictionaries(st.integers(0, 40), st.integers(1, 15), min_size=1, max_size=8),
           st.integers(50, 90))
    def test_seen_never_below_unseen(self, counts, universe_size):
        probs, unseen, mass = smooth_row(counts, universe_size)
        assert min(probs.values()) >= unseen

    @given(st.dictionaries(st.integers(0, 40), st.integers(1, 15), min_size=0, max_size=8),
           st.integers(50, 90))
    def test_row_mass_sums_to_one(self, counts, universe_size):
        probs, unseen, _ = smooth_row(counts, universe_size)
        total = sum(probs.values()) + unseen * (universe_size - len(counts))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_count_scaling_leaves_matrix_unchanged(self):
        counts = {(0, 1): 3, (0, 2): 1, (1, 0): 2}
        prior = {0: 4, 1: 2, 2: 1}
        universe = range(6)
        m1 = TransitionMatrix(counts, prior, universe)
        m3 = TransitionMatrix({k: 3 * v for k, v in counts.items()},
                              {k: 3 * v for k, v in prior.items()}, universe)
        for p in range(6):
            for q in range(6):
                assert m1.transition_prob(p, q) == m3.transition_prob(p, q)
            assert m1.start_prob(p) == m3.start_prob(p)


class TestClassify:
    def test_disjoint_tower_sets(self):
        ds = mk_dataset(
            mk_trace(1, (0, 0, 5), (1, 5, 9), (0, 9, 14)),
            mk_trace(2, (5, 0, 5), (6, 5, 9), (5, 9, 14)),
        )
        profiles = build_profiles(ds)
        assert classify(profiles, [0, 1, 0])[0] == 1
        assert classify(profiles, [5, 6])[0] == 2

    def test_single_training_user_always_wins(self):
        ds = mk_dataset(mk_trace(3, (0, 0, 5), (1, 5, 9)))
        profiles = build_profiles(ds)
        for seq in ([0], [1, 0], [7, 7, 7]):
            assert classify(profiles, seq)[0] == 3

    def test_empty_sequence_is_an_error(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 5)))
        with pytest.raises(ValueError):
            classify(build_profiles(ds), [])

    def test_tie_breaks_to_smallest_user_id(self):
        # Identical histories give identical scores.
        ds = mk_dataset(
            mk_trace(4, (0, 0, 5), (1, 5, 9)),
            mk_trace(2, (0, 0, 5), (1, 5, 9)),
        )
        assert classify(build_profiles(ds), [0, 1])[0] == 2

    def test_agrees_with_exact_oracle_on_random_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            profiles, seq = random_profiles_instance(rng)
            assert classify(profiles, seq)[0] == exact_classify(profiles, seq)[0]

    def test_agreement_does_not_degrade_with_length(self):
        rng = np.random.default_rng(23)
        agreement = []
        for length in (2, 6, 12):
            hits = 0
            for _ in range(40):
                profiles, _ = random_profiles_instance(rng, max_len=length)
                seq = [int(rng.integers(9)) for _ in range(length)]
                hits += classify(profiles, seq)[0] == exact_classify(profiles, seq)[0]
            agreement.append(hits / 40)
        assert agreement == sorted(agreement, reverse=True) or all(a == 1.0 for a in agreement)

    def test_scorer_matches_reference_classify(self):
        rng = np.random.default_rng(29)
        for _ in range(40):
            profiles, seq = random_profiles_instance(rng)
            scorer = ProfileScorer(profiles)
            ref_user, ref_score = classify(profiles, seq)
            fast_user, fast_score = scorer.classify(seq)
            assert fast_user == ref_user
            assert fast_score == pytest.approx(ref_score, abs=1e-9)

    def test_collapse_repeats(self):
        assert collapse_repeats([1, 1, 2, 2, 2, 1]) == [1, 2, 1]
        assert collapse_repeats([]) == []

    def test_single_event_sequence_is_prior_only(self):
        ds = mk_dataset(
            mk_trace(1, (0, 0, 5), (1, 5, 9), (0, 9, 14)),
            mk_trace(2, (0, 0, 9), (2, 9, 14)),
        )
        profiles = build_profiles(ds)
        for tower in (0, 1, 2):
            expected = max(sorted(profiles),
                           key=lambda u: (profiles[u].start_prob(tower), -u))
            got, score = classify(profiles, [tower])
            assert got == expected
            assert score == pytest.approx(np.log(profiles[got].start_prob(tower)))


class TestLinkMatrix:
    def test_always_reappears_at_b(self):
        tr = mk_trace(1, (0, 0, 10), (1, 40, 50), (0, 80, 90), (1, 120, 130))
        lm = train_link_matrix(mk_dataset(tr), window=30)
        assert lm.matrix.transition_prob(0, 1) == pytest.approx(
            1.0 - lm.matrix.row_mass[0])
        assert lm.matrix.counts == {(0, 1): 2, (1, 0): 1}

    def test_no_reappearances_leaves_only_smoothing(self):
        tr = mk_trace(1, (0, 0, 10), (1, 500, 510))
        lm = train_link_matrix(mk_dataset(tr), window=30)
        assert lm.matrix.counts == {}
        assert lm.matrix.transition_prob(0, 1) == pytest.approx(1 / 2)

    def test_window_must_be_positive(self):
        with pytest.raises(ParameterError):
            train_link_matrix(mk_dataset(mk_trace(1, (0, 0, 5))), 0)

    def test_rows_stochastic_on_synthetic_data(self):
        rng = np.random.default_rng(31)
        ds = Dataset(tuple(random_walk_trace(rng, u, 10, 30) for u in range(20)))
        lm = train_link_matrix(ds, window=10)
        for p in lm.matrix.rows():
            assert sum(lm.matrix.row_vector(p).values()) == pytest.approx(1.0, abs=1e-9)


def _views(*fragments):
    return [AnonTrace(pid, tuple(TowerEvent(t, s, e) for t, s, e in events))
            for pid, events in fragments]


class TestLinking:
    def _simple_lm(self, window=30):
        tr = mk_trace(1, (0, 0, 10), (1, 12, 20), (0, 25, 30), (1, 33, 40))
        return train_link_matrix(mk_dataset(tr), window)

    def test_no_candidates_degenerates_to_classify(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 5), (1, 5, 9)), mk_trace(2, (5, 0, 5), (6, 5, 9)))
        profiles = build_profiles(ds)
        lm = self._simple_lm()
        views = _views((10, [(0, 100, 110), (1, 110, 120)]))
        attr = link_and_classify(profiles, lm, views, 10)
        assert attr.linked_chain == (10,)
        assert (attr.predicted, attr.log_score) == classify(profiles, [0, 1])

    def test_sole_candidate_is_chained_and_attributed(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 50), (1, 50, 100), (0, 100, 150)),
                        mk_trace(2, (5, 0, 50), (6, 50, 100)))
        profiles = build_profiles(ds)
        lm = train_link_matrix(ds, 30)
        views = _views(
            (10, [(0, 200, 210), (1, 210, 220)]),
            (11, [(0, 230, 250)]),
        )
        attr = link_and_classify(profiles, lm, views, 10)
        assert attr.linked_chain == (10, 11)
        assert attr.predicted == 1

    def test_simultaneous_start_is_not_a_candidate(self):
        lm = self._simple_lm()
        views = _views(
            (10, [(0, 0, 100)]),
            (11, [(1, 100, 120)]),   # starts exactly at chain end
            (12, [(1, 101, 120)]),
        )
        chain = link_chain(lm, views, 10)
        assert 11 not in chain
        assert chain == [0, 2]

    def test_max_links_bounds_chain(self):
        lm = self._simple_lm()
        views = _views(
            (10, [(0, 0, 10)]),
            (11, [(1, 15, 25)]),
            (12, [(0, 30, 40)]),
            (13, [(1, 45, 55)]),
        )
        for max_links in (0, 1, 2, 3):
            chain = link_chain(lm, views, 10, max_links=max_links)
            assert len(chain) == 1 + max_links

    def test_greedy_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(37)
        for _ in range(80):
            lm, views, target = random_link_instance(rng)
            max_links = int(rng.integers(0, 5))
            got = link_chain(lm, views, target, max_links=max_links)
            got_pids = [views[o].pseudonym for o in got]
            assert got_pids == exact_link_chain(lm, views, target, max_links=max_links)

    def test_attribution_invariant_under_pseudonym_relabeling(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 50), (1, 50, 100)),
                        mk_trace(2, (5, 0, 50), (6, 50, 100)))
        profiles = build_profiles(ds)
        lm = train_link_matrix(ds, 30)
        views_a = _views((10, [(0, 200, 210)]), (11, [(1, 215, 225)]))
        views_b = _views((99123, [(0, 200, 210)]), (5, [(1, 215, 225)]))
        attr_a = link_and_classify(profiles, lm, views_a, 10)
        attr_b = link_and_classify(profiles, lm, views_b, 99123)
        assert attr_a.predicted == attr_b.predicted
        assert len(attr_a.linked_chain) == len(attr_b.linked_chain)


class TestEvaluateAccuracy:
    def _attr(self, pid, predicted):
        from ziptrace.attacker import Attribution

        return Attribution(pid, predicted, 0.0, (pid,))

    def test_all_correct(self):
        sidecar = {1: 7, 2: 7, 3: 8}
        attrs = [self._attr(1, 7), self._attr(2, 7), self._attr(3, 8)]
        report = evaluate_accuracy(attrs, sidecar)
        assert report.per_user == {7: 1.0, 8: 1.0}
        assert report.overall.mean == 1.0

    def test_per_user_proportions(self):
        sidecar = {1: 7, 2: 7, 3: 8, 4: 8}
        attrs = [self._attr(1, 7), self._attr(2, 0), self._attr(3, 8), self._attr(4, 8)]
        report = evaluate_accuracy(attrs, sidecar)
        assert report.per_user[7] == 0.5
        assert report.per_user[8] == 1.0
        assert report.overall.mean == pytest.approx(0.75)

    def test_missing_pseudonym_is_an_error(self):
        with pytest.raises(TraceValidationError):
            evaluate_accuracy([self._attr(42, 1)], sidecar={1: 1})

    def test_per_type_grouping(self):
        sidecar = {1: 7, 2: 8}
        attrs = [self._attr(1, 7), self._attr(2, 0)]
        report = evaluate_accuracy(attrs, sidecar, user_types={7: "P/M", 8: "nP/nM"})
        assert report.per_type["P/M"].mean == 1.0
        assert report.per_type["nP/nM"].mean == 0.0


class TestEstimators:
    def test_profiler_fit_predict(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 5), (1, 5, 9)), mk_trace(2, (5, 0, 5), (6, 5, 9)))
        profiler = LocationProfiler().fit(ds)
        assert list(profiler.predict([[0, 1], [5, 6]])) == [1, 2]

    def test_linker_fit_attribute(self):
        ds = mk_dataset(mk_trace(1, (0, 0, 50), (1, 50, 100)),
                        mk_trace(2, (5, 0, 50), (6, 50, 100)))
        profiler = LocationProfiler().fit(ds)
        linker = TrajectoryLinker(window=30).fit(ds)
        views = _views((10, [(0, 200, 210)]), (11, [(1, 215, 225)]))
        attr = linker.attribute(views, 10, profiler)
        assert attr.predicted == 1
        assert attr.linked_chain == (10, 11)

    def test_estimator_params(self):
        linker = TrajectoryLinker(window=45, max_links=3)
        params = linker.get_params()
        assert params == {"window": 45, "max_links": 3, "collapse_repeats": True}
        assert TrajectoryLinker(**params).get_params() == params

    def test_fit_validates_input_type(self):
        with pytest.raises(TypeError, match="Dataset"):
            LocationProfiler().fit([[0, 1], [1, 0]])
        with pytest.raises(TypeError, match="Dataset"):
            TrajectoryLinker().fit("traces.csv")
