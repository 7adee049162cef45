"""Behavioural characterization: route predictability, mixing, and user typology.

Predictability is the Jaccard similarity between the tower sets a user visits
before and after a split point. The mixing score accumulates, over every
dwell a user spends at a tower, the co-location count at each instant another
user arrives or departs, divided by the time since the previous such instant.
Users are typed by thresholding both scores (strictly greater than).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedScoreError, UnknownUserError
from .traces import Dataset, Trace

USER_TYPES = ("P/M", "nP/M", "P/nM", "nP/nM")

JACCARD_THRESHOLD = 0.1
MIXING_THRESHOLD = 4.0


@dataclass(frozen=True)
class BehaviorScores:
    user: int
    jaccard: float
    mixing: float
    type: str


def jaccard_score(train: Trace, test: Trace) -> float:
    """|intersection| / |union| of the tower sets visited in each period."""
    if len(train) == 0 or len(test) == 0:
        raise UndefinedScoreError("jaccard score undefined for an empty trace")
    pre, post = train.towers(), test.towers()
    return len(pre & post) / len(pre | post)


def classify_type(jaccard: float, mixing: float,
                  jaccard_threshold: float = JACCARD_THRESHOLD,
                  mixing_threshold: float = MIXING_THRESHOLD) -> str:
    """Four-way typology; boundary values are not strictly greater, so they
    fall on the unpredictable / non-mixing side."""
    predictable = jaccard > jaccard_threshold
    mixing_flag = mixing > mixing_threshold
    if predictable:
        return "P/M" if mixing_flag else "P/nM"
    return "nP/M" if mixing_flag else "nP/nM"


class _TowerActivity:
    """Per-tower sorted arrival/departure arrays for co-location queries."""

    def __init__(self, ds: Dataset, tower: int):
        arrivals: list[tuple[int, int]] = []
        departures: list[tuple[int, int]] = []
        for tr in ds:
            for e in tr.events:
                if e.tower == tower:
                    arrivals.append((e.start, tr.owner))
                    departures.append((e.end, tr.owner))
        arrivals.sort(key=lambda x: x[0])
        departures.sort(key=lambda x: x[0])
        self.arr_t = np.array([t for t, _ in arrivals], dtype=np.int64)
        self.arr_u = np.array([u for _, u in arrivals], dtype=np.int64)
        self.dep_t = np.array([t for t, _ in departures], dtype=np.int64)
        self.dep_u = np.array([u for _, u in departures], dtype=np.int64)

    def occupancy(self, instants: np.ndarray) -> np.ndarray:
        """Number of users attached at each instant (closed start, open end)."""
        started = np.searchsorted(self.arr_t, instants, side="right")
        ended = np.searchsorted(self.dep_t, instants, side="right")
        return started - ended

    def other_instants(self, user: int, lo: int, hi: int) -> np.ndarray:
        """Arrival/departure instants of other users within [lo, hi], sorted."""
        a_lo = np.searchsorted(self.arr_t, lo, side="left")
        a_hi = np.searchsorted(self.arr_t, hi, side="right")
        d_lo = np.searchsorted(self.dep_t, lo, side="left")
        d_hi = np.searchsorted(self.dep_t, hi, side="right")
        arr = self.arr_t[a_lo:a_hi][self.arr_u[a_lo:a_hi] != user]
        dep = self.dep_t[d_lo:d_hi][self.dep_u[d_lo:d_hi] != user]
        out = np.concatenate([arr, dep])
        out.sort(kind="stable")
        return out


def _merged_dwells(trace: Trace) -> list[tuple[int, int, int]]:
    """(tower, start, end) dwells, merging contiguous same-tower events."""
    dwells: list[tuple[int, int, int]] = []
    for e in trace.events:
        if dwells and dwells[-1][0] == e.tower and dwells[-1][2] == e.start:
            dwells[-1] = (e.tower, dwells[-1][1], e.end)
        else:
            dwells.append((e.tower, e.start, e.end))
    return dwells


def mixing_score(ds: Dataset, user: int, gap_floor: int = 1,
                 _activity: dict[int, _TowerActivity] | None = None) -> float:
    """Encounter-rate aggregate over all of the user's tower dwells.

    For each dwell and each instant in it where another user arrives or
    departs, adds (co-located others at that instant) / (seconds since the
    previous instant, the dwell start for the first). Coincident instants
    contribute through `gap_floor`.
    """
    if user not in ds:
        raise UnknownUserError(user)
    activity = _activity if _activity is not None else {}
    score = 0.0
    for tower, lo, hi in _merged_dwells(ds[user]):
        act = activity.get(tower)
        if act is None:
            act = activity[tower] = _TowerActivity(ds, tower)
        instants = act.other_instants(user, lo, hi)
        if instants.size == 0:
            continue
        occupancy = act.occupancy(instants) - (instants < hi).astype(np.int64)
        prev = np.concatenate([[lo], instants[:-1]])
        gaps = np.maximum(instants - prev, gap_floor)
        score += float(np.sum(occupancy / gaps))
    return score


def score_dataset(ds: Dataset, split_boundary: int,
                  jaccard_threshold: float = JACCARD_THRESHOLD,
                  mixing_threshold: float = MIXING_THRESHOLD) -> list[BehaviorScores]:
    """Score and type every user with events on both sides of the split.

    Jaccard compares the two halves; mixing is computed on the full dataset.
    Users missing from either half are skipped (their predictability is
    undefined).
    """
    from .traces import split_by_period

    train, test = split_by_period(ds, split_boundary)
    activity: dict[int, _TowerActivity] = {}
    out: list[BehaviorScores] = []
    for user in ds.users:
        if user not in train or user not in test:
            continue
        j = jaccard_score(train[user], test[user])
        m = mixing_score(ds, user, _activity=activity)
        out.append(BehaviorScores(user, j, m, classify_type(j, m, jaccard_threshold, mixing_threshold)))
    return out
