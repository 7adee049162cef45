"""Provider-side deanonymization: per-user Markov profiles plus trajectory linking.

Profiles are first-order transition matrices with a visit-count prior, trained
per user on labeled history. Classification scores a tower sequence against
every profile in log space and returns the argmax user. The linker extends a
target fragment by repeatedly appending the candidate fragment (one starting
within the public offline window of the chain's end) that maximizes a
time-limited linking transition matrix, then classifies the concatenation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from .errors import ParameterError, TraceValidationError, UnknownUserError
from .traces import AnonTrace, Dataset, check_dataset

# ---------------------------------------------------------------------------
# Smoothing
# ---------------------------------------------------------------------------


def smooth_row(counts: Mapping[int, int], universe_size: int) -> tuple[dict[int, float], float, float]:
    """Turn raw outgoing counts into a smoothed probability row.

    Reserves mass 1/(1 + d) for unseen targets, where d is the number of
    distinct observed targets, and splits it evenly over the unseen part of
    the tower universe. Depending only on distinct targets (not totals) keeps
    rows invariant under count scaling. Returns (seen probabilities,
    per-unseen-cell probability, reserved mass). An empty row is uniform over
    the universe.

    Every cell is produced by one integer-ratio division, so probabilities
    that are equal as exact rationals are equal as floats.
    """
    d = len(counts)
    if d == 0:
        return {}, 1.0 / universe_size, 1.0
    n = sum(counts.values())
    unseen = universe_size - d
    if unseen <= 0:
        # Row saw the whole universe; keep maximum-likelihood ratios. The
        # unseen-cell value only serves out-of-universe lookups.
        return {q: c / n for q, c in counts.items()}, 1.0 / (d + 1), 0.0
    probs = {q: (c * d) / (n * (d + 1)) for q, c in counts.items()}
    return probs, 1.0 / ((d + 1) * unseen), 1.0 / (d + 1)


class TransitionMatrix:
    """Sparse smoothed first-order transition structure with a start prior.

    Raw counts are retained so that independent oracles can re-derive exact
    probabilities. Probabilities over the training tower universe are
    row-stochastic including the reserved smoothing mass.
    """

    def __init__(self, counts: Mapping[tuple[int, int], int],
                 prior_counts: Mapping[int, int], universe: Iterable[int]):
        self.counts = dict(counts)
        self.prior_counts = dict(prior_counts)
        self.universe = frozenset(universe)
        if not self.universe:
            raise ParameterError("tower universe must be non-empty")
        k = len(self.universe)
        self.uniform = 1.0 / k

        rows: dict[int, dict[int, int]] = {}
        for (p, q), c in self.counts.items():
            rows.setdefault(p, {})[q] = c
        self.probs: dict[tuple[int, int], float] = {}
        self.row_unseen: dict[int, float] = {}
        self.row_mass: dict[int, float] = {}
        for p, row in rows.items():
            probs, unseen, mass = smooth_row(row, k)
            for q, v in probs.items():
                self.probs[(p, q)] = v
            self.row_unseen[p] = unseen
            self.row_mass[p] = mass

        prior, prior_unseen, prior_mass = smooth_row(self.prior_counts, k)
        self.prior_probs = prior
        self.prior_unseen = prior_unseen
        self.prior_mass = prior_mass

    def rows(self) -> set[int]:
        return set(self.row_unseen)

    def transition_prob(self, p: int, q: int) -> float:
        v = self.probs.get((p, q))
        if v is not None:
            return v
        if p in self.row_unseen:
            return self.row_unseen[p]
        return self.uniform

    def start_prob(self, q: int) -> float:
        return self.prior_probs.get(q, self.prior_unseen)

    def row_vector(self, p: int) -> dict[int, float]:
        """Full probability row over the universe (for invariant checks)."""
        return {q: self.transition_prob(p, q) for q in self.universe}


@dataclass(frozen=True)
class LinkMatrix:
    """Linking transitions trained on reappearances within `window` seconds."""

    matrix: TransitionMatrix
    window: int


@dataclass(frozen=True)
class Attribution:
    pseudonym: int
    predicted: int
    log_score: float
    linked_chain: tuple[int, ...]


# ---------------------------------------------------------------------------
# Profiling
# ---------------------------------------------------------------------------


def collapse_repeats(seq: Sequence[int]) -> list[int]:
    """Drop consecutive duplicate towers; dwell-time repeats carry no movement."""
    out: list[int] = []
    for t in seq:
        if not out or out[-1] != t:
            out.append(t)
    return out


def profile_user(training: Dataset, user: int, collapse: bool = True,
                 universe: Iterable[int] | None = None) -> TransitionMatrix:
    """Build one user's transition matrix and start prior from labeled history."""
    if user not in training:
        raise UnknownUserError(user)
    trace = training[user]
    if len(trace) == 0:
        raise TraceValidationError(f"user {user} has an empty training trace")
    seq = trace.tower_sequence()
    if collapse:
        seq = collapse_repeats(seq)
    prior_counts = Counter(seq)
    counts = Counter(zip(seq, seq[1:]))
    return TransitionMatrix(counts, prior_counts, universe if universe is not None else training.towers())


def build_profiles(training: Dataset, collapse: bool = True) -> dict[int, TransitionMatrix]:
    universe = training.towers()
    return {u: profile_user(training, u, collapse, universe) for u in training.users}


# Log scores closer than this are treated as tied; float summation order
# perturbs mathematically equal likelihoods by a few ulps.
TIE_EPS = 1e-9


def classify(profiles: Mapping[int, TransitionMatrix], seq: Sequence[int],
             collapse: bool = True) -> tuple[int, float]:
    """Most likely user for a tower sequence, by log prior plus log transitions.

    Scores within TIE_EPS of the maximum are tied; ties break to the smallest
    user id.
    """
    if len(seq) == 0:
        raise ValueError("cannot classify an empty tower sequence")
    if not profiles:
        raise ValueError("no trained profiles")
    s = collapse_repeats(seq) if collapse else list(seq)
    users = sorted(profiles)
    scores = []
    for user in users:
        m = profiles[user]
        score = math.log(m.start_prob(s[0]))
        for p, q in zip(s, s[1:]):
            score += math.log(m.transition_prob(p, q))
        scores.append(score)
    top = max(scores)
    for user, score in zip(users, scores):
        if score >= top - TIE_EPS:
            return user, score
    raise AssertionError("unreachable")


class ProfileScorer:
    """Vectorized scoring of one sequence against every profile at once.

    Decomposes each log transition probability into the row's unseen-cell
    default plus a sparse per-(from,to) correction, so a sequence costs a few
    dictionary lookups per distinct transition instead of a full pass per
    user. Produces the same scores (up to float summation order) as
    `classify`.
    """

    def __init__(self, profiles: Mapping[int, TransitionMatrix], collapse: bool = True):
        if not profiles:
            raise ValueError("no trained profiles")
        self.collapse = collapse
        self.users = np.array(sorted(profiles), dtype=np.int64)
        first = profiles[self.users[0]]
        self._tower_index = {t: i for i, t in enumerate(sorted(first.universe))}
        k = len(self._tower_index)
        self._k = k
        self._log_uniform = math.log(1.0 / k)
        n_users = len(self.users)

        self._prior_default = np.empty(n_users)
        prior_entries: dict[int, list[tuple[int, float]]] = {}
        row_entries: dict[int, list[tuple[int, float]]] = {}
        trans_entries: dict[int, list[tuple[int, float]]] = {}
        for ui, user in enumerate(self.users):
            m = profiles[user]
            self._prior_default[ui] = math.log(m.prior_unseen)
            for q, v in m.prior_probs.items():
                prior_entries.setdefault(self._tower_index[q], []).append((ui, math.log(v)))
            for p, unseen in m.row_unseen.items():
                row_entries.setdefault(self._tower_index[p], []).append((ui, math.log(unseen)))
            for (p, q), v in m.probs.items():
                code = self._tower_index[p] * (k + 1) + self._tower_index[q]
                delta = math.log(v) - math.log(m.row_unseen[p])
                trans_entries.setdefault(code, []).append((ui, delta))

        self._prior = {t: _as_arrays(e) for t, e in prior_entries.items()}
        self._rows = {t: _as_arrays(e) for t, e in row_entries.items()}
        self._trans = {c: _as_arrays(e) for c, e in trans_entries.items()}

    def _indices(self, seq: Sequence[int]) -> np.ndarray:
        idx = self._tower_index
        k = self._k
        return np.array([idx.get(t, k) for t in seq], dtype=np.int64)

    def score_all(self, seq: Sequence[int]) -> np.ndarray:
        """Log scores for every user, aligned with `self.users`."""
        if len(seq) == 0:
            raise ValueError("cannot classify an empty tower sequence")
        s = collapse_repeats(seq) if self.collapse else list(seq)
        sidx = self._indices(s)
        scores = self._prior_default.copy()
        hit = self._prior.get(sidx[0])
        if hit is not None:
            scores[hit[0]] = hit[1]
        if len(sidx) > 1:
            p_idx = sidx[:-1]
            codes = p_idx * (self._k + 1) + sidx[1:]
            scores += self._log_uniform * len(codes)
            for p, cnt in zip(*np.unique(p_idx, return_counts=True)):
                entry = self._rows.get(int(p))
                if entry is not None:
                    scores[entry[0]] += (entry[1] - self._log_uniform) * cnt
            for code, cnt in zip(*np.unique(codes, return_counts=True)):
                entry = self._trans.get(int(code))
                if entry is not None:
                    scores[entry[0]] += entry[1] * cnt
        return scores

    def classify(self, seq: Sequence[int]) -> tuple[int, float]:
        scores = self.score_all(seq)
        i = int(np.argmax(scores >= scores.max() - TIE_EPS))
        return int(self.users[i]), float(scores[i])


def _as_arrays(entries: list[tuple[int, float]]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.array([e[0] for e in entries], dtype=np.int64)
    val = np.array([e[1] for e in entries])
    return idx, val


# ---------------------------------------------------------------------------
# Linking
# ---------------------------------------------------------------------------


def train_link_matrix(training: Dataset, window: int) -> LinkMatrix:
    """Count reappearances within `window` seconds of each attachment's end.

    For every event at tower p, every same-user event starting within
    [0, window] seconds after p ends contributes a p -> q pair. Zero-delay
    (handoff) pairs are included; candidate search during linking is what
    excludes simultaneity.
    """
    if window <= 0:
        raise ParameterError(f"link window must be positive, got {window}")
    counts: Counter[tuple[int, int]] = Counter()
    for trace in training:
        events = trace.events
        for i, e in enumerate(events):
            horizon = e.end + window
            j = i + 1
            while j < len(events) and events[j].start <= horizon:
                counts[(e.tower, events[j].tower)] += 1
                j += 1
    return LinkMatrix(TransitionMatrix(counts, {}, training.towers()), window)


class FragmentIndex:
    """Start-time index over attacker-visible fragments.

    Ordinals are input positions; tie-breaking uses them rather than
    pseudonym values, which are opaque nonces.
    """

    def __init__(self, views: Sequence[AnonTrace]):
        self.views = list(views)
        starts = np.array([v.start for v in self.views], dtype=np.int64)
        self._order = np.argsort(starts, kind="stable")
        self._sorted_starts = starts[self._order]
        self._by_pseudonym: dict[int, int] = {}
        for i, v in enumerate(self.views):
            self._by_pseudonym.setdefault(v.pseudonym, i)

    def __len__(self) -> int:
        return len(self.views)

    def ordinal_of(self, pseudonym: int) -> int:
        try:
            return self._by_pseudonym[pseudonym]
        except KeyError:
            raise UnknownUserError(pseudonym) from None

    def candidates(self, chain_end: int, window: int, consumed: set[int]) -> list[int]:
        """Ordinals of fragments starting in (chain_end, chain_end + window]."""
        lo = np.searchsorted(self._sorted_starts, chain_end, side="right")
        hi = np.searchsorted(self._sorted_starts, chain_end + window, side="right")
        found = [int(o) for o in self._order[lo:hi] if int(o) not in consumed]
        found.sort(key=lambda o: (self.views[o].start, o))
        return found


def link_chain(lm: LinkMatrix, views: Sequence[AnonTrace], target: int,
               max_links: int | None = None, index: FragmentIndex | None = None) -> list[int]:
    """Greedy chain of fragment ordinals starting from the target fragment.

    At each step the candidate maximizing the linking transition probability
    from the chain's last tower is appended; ties break by earliest start,
    then smallest ordinal. Stops when no fragment starts within the window or
    `max_links` appends were made.
    """
    idx = index if index is not None else FragmentIndex(views)
    start = idx.ordinal_of(target)
    chain = [start]
    consumed = {start}
    matrix = lm.matrix
    while max_links is None or len(chain) - 1 < max_links:
        tail = idx.views[chain[-1]]
        cands = idx.candidates(tail.end, lm.window, consumed)
        if not cands:
            break
        last_tower = tail.events[-1].tower
        best = None
        best_prob = -1.0
        for o in cands:
            prob = matrix.transition_prob(last_tower, idx.views[o].events[0].tower)
            if prob > best_prob:
                best, best_prob = o, prob
        chain.append(best)
        consumed.add(best)
    return chain


def link_and_classify(profiles: Mapping[int, TransitionMatrix], lm: LinkMatrix,
                      views: Sequence[AnonTrace], target: int,
                      max_links: int | None = None, collapse: bool = True,
                      scorer: ProfileScorer | None = None,
                      index: FragmentIndex | None = None) -> Attribution:
    """Chain fragments forward from `target`, then classify the concatenation."""
    idx = index if index is not None else FragmentIndex(views)
    chain = link_chain(lm, views, target, max_links, idx)
    seq: list[int] = []
    for o in chain:
        seq.extend(idx.views[o].tower_sequence())
    if scorer is not None:
        predicted, score = scorer.classify(seq)
    else:
        predicted, score = classify(profiles, seq, collapse)
    return Attribution(
        pseudonym=target,
        predicted=predicted,
        log_score=score,
        linked_chain=tuple(idx.views[o].pseudonym for o in chain),
    )


# ---------------------------------------------------------------------------
# Accuracy evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupAccuracy:
    mean: float
    ci95: float
    n_users: int


@dataclass(frozen=True)
class AccuracyReport:
    per_user: dict[int, float]
    overall: GroupAccuracy
    per_type: dict[str, GroupAccuracy]


def ci95_halfwidth(values: Sequence[float]) -> float:
    """95% half-width over per-user means; t-based below 30 users."""
    n = len(values)
    if n < 2:
        return 0.0
    sem = float(np.std(values, ddof=1)) / math.sqrt(n)
    crit = stats.t.ppf(0.975, n - 1) if n < 30 else 1.96
    return float(crit * sem)


def evaluate_accuracy(attributions: Iterable[Attribution], sidecar: Mapping[int, int],
                      user_types: Mapping[int, str] | None = None) -> AccuracyReport:
    """Per-user and aggregate attribution accuracy against the truth sidecar.

    A user's accuracy is the fraction of their evaluated fragments attributed
    correctly; aggregates are means over users with 95% confidence
    half-widths.
    """
    correct: Counter[int] = Counter()
    total: Counter[int] = Counter()
    for attr in attributions:
        if attr.pseudonym not in sidecar:
            raise TraceValidationError(f"pseudonym {attr.pseudonym} missing from truth sidecar")
        truth = sidecar[attr.pseudonym]
        total[truth] += 1
        if attr.predicted == truth:
            correct[truth] += 1
    per_user = {u: correct[u] / total[u] for u in sorted(total)}
    values = list(per_user.values())
    overall = GroupAccuracy(float(np.mean(values)) if values else math.nan,
                            ci95_halfwidth(values), len(values))
    per_type: dict[str, GroupAccuracy] = {}
    if user_types is not None:
        groups: dict[str, list[float]] = {}
        for u, acc in per_user.items():
            t = user_types.get(u)
            if t is not None:
                groups.setdefault(t, []).append(acc)
        per_type = {
            t: GroupAccuracy(float(np.mean(vals)), ci95_halfwidth(vals), len(vals))
            for t, vals in sorted(groups.items())
        }
    return AccuracyReport(per_user=per_user, overall=overall, per_type=per_type)


# ---------------------------------------------------------------------------
# Estimator wrappers
# ---------------------------------------------------------------------------


class LocationProfiler(BaseEstimator):
    """fit: train per-user profiles from a labeled Dataset; predict: user ids."""

    def __init__(self, collapse_repeats: bool = True):
        self.collapse_repeats = collapse_repeats

    def fit(self, training: Dataset, y=None):
        check_dataset(training)
        self.profiles_ = build_profiles(training, self.collapse_repeats)
        self.scorer_ = ProfileScorer(self.profiles_, self.collapse_repeats)
        return self

    def classify(self, seq: Sequence[int]) -> tuple[int, float]:
        return self.scorer_.classify(seq)

    def predict(self, sequences: Iterable[Sequence[int]]) -> np.ndarray:
        return np.array([self.scorer_.classify(s)[0] for s in sequences], dtype=np.int64)


class TrajectoryLinker(BaseEstimator):
    """fit: train the time-windowed link matrix; attribute: chain and classify."""

    def __init__(self, window: int = 30, max_links: int | None = None,
                 collapse_repeats: bool = True):
        self.window = window
        self.max_links = max_links
        self.collapse_repeats = collapse_repeats

    def fit(self, training: Dataset, y=None):
        check_dataset(training)
        self.link_matrix_ = train_link_matrix(training, self.window)
        return self

    def link(self, views: Sequence[AnonTrace], target: int,
             index: FragmentIndex | None = None) -> list[int]:
        chain = link_chain(self.link_matrix_, views, target, self.max_links, index)
        idx = index if index is not None else FragmentIndex(views)
        return [idx.views[o].pseudonym for o in chain]

    def attribute(self, views: Sequence[AnonTrace], target: int,
                  profiler: LocationProfiler,
                  index: FragmentIndex | None = None) -> Attribution:
        return link_and_classify(
            profiler.profiles_, self.link_matrix_, views, target,
            max_links=self.max_links, collapse=self.collapse_repeats,
            scorer=profiler.scorer_, index=index,
        )
