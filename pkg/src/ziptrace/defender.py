"""Identifier renewal: fragment traces into pseudonymous pieces at tower switches.

A device keeps one pseudonym while its cooldown runs, disconnects at the first
tower switch after the cooldown expires, stays offline for a random draw from
(0, max_off_time], and reattaches under a fresh pseudonym. The cooldown is
sized from the realized offline time so that the long-run fraction of time
spent attached stays at the policy's utility target.
"""

from __future__ import annotations

import math
import secrets
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ParameterError
from .traces import Dataset, PseudonymousTrace, TowerEvent, Trace, check_dataset

BusyIntervals = Sequence[tuple[int, int]]


@dataclass(frozen=True)
class RenewalPolicy:
    """Public renewal parameters: target utility and maximum offline seconds.

    utility=1.0 disables renewals entirely (the trace is emitted unchanged
    under a single pseudonym). `literal_cooldown` switches to the plain
    `utility * off_time` cooldown for sensitivity analysis; the default
    `off_time * utility / (1 - utility)` is what actually holds realized
    utility at the target.
    """

    utility: float
    max_off_time: int
    rng_seed: int = 0
    literal_cooldown: bool = False

    def __post_init__(self):
        if not 0.0 <= self.utility <= 1.0:
            raise ParameterError(f"utility must be in [0, 1], got {self.utility}")
        if self.max_off_time <= 0:
            raise ParameterError(f"max_off_time must be positive, got {self.max_off_time}")

    def cooldown_seconds(self, off_time: float) -> float:
        """Minimum online time under one pseudonym after an offline period."""
        if self.literal_cooldown:
            return self.utility * off_time
        if self.utility >= 1.0:
            return math.inf
        return off_time * self.utility / (1.0 - self.utility)


@dataclass(frozen=True)
class UtilityLedger:
    """Per-trace accounting of what a renewal run cost the user.

    `offline_time` counts attached seconds actually deleted by offline
    windows; renewals that happen to fall inside natural coverage gaps cost
    nothing. `cooldown_skips` and `busy_deferrals` count switch boundaries
    where a renewal was possible but skipped.
    """

    user: int
    total_time: int
    offline_time: int
    renewals: int
    switches_seen: int
    cooldown_skips: int
    busy_deferrals: int
    offline_windows: tuple[tuple[int, float], ...]

    @property
    def realized_utility(self) -> float:
        if self.total_time <= 0:
            return 1.0
        return 1.0 - self.offline_time / self.total_time

    def window_lengths(self) -> np.ndarray:
        return np.array([off for _, off in self.offline_windows], dtype=float)


def fresh_pseudonym() -> int:
    """A 128-bit random nonce; unique across fragments, users, and runs."""
    return secrets.randbits(128)


def _in_busy(t: int, busy: BusyIntervals) -> bool:
    return any(s <= t < e for s, e in busy)


def anonymize(
    trace: Trace,
    policy: RenewalPolicy,
    busy_intervals: BusyIntervals = (),
) -> tuple[list[PseudonymousTrace], UtilityLedger]:
    """Fragment one trace under the renewal policy.

    Renewal fires at any boundary where the next event's tower differs from
    the current one, provided the cooldown has expired and the boundary does
    not fall inside a busy interval. The drawn offline window deletes all
    attachment it covers: events wholly inside are dropped, events straddling
    the window edge are truncated. Returns the fragments plus the ledger.
    """
    total = trace.attached_seconds()
    if len(trace) == 0:
        ledger = UtilityLedger(trace.owner, 0, 0, 0, 0, 0, 0, ())
        return [], ledger
    if policy.utility >= 1.0:
        ledger = UtilityLedger(trace.owner, total, 0, 0, _count_switches(trace.events), 0, 0, ())
        return [PseudonymousTrace(fresh_pseudonym(), trace.events, trace.owner)], ledger

    rng = np.random.default_rng([policy.rng_seed, trace.owner])
    fragments: list[PseudonymousTrace] = []
    windows: list[tuple[int, float]] = []
    current: list[TowerEvent] = []
    deleted = 0
    renewals = switches = cooldown_skips = busy_deferrals = 0
    eligible_at = float(trace.events[0].start)

    events = trace.events
    i = 0
    pending: TowerEvent | None = None  # truncated stand-in for events[i]
    while i < len(events):
        e = pending if pending is not None else events[i]
        pending = None
        current.append(e)
        nxt = events[i + 1] if i + 1 < len(events) else None
        if nxt is None or nxt.tower == e.tower:
            i += 1
            continue
        switches += 1
        boundary = e.end
        if boundary < eligible_at:
            cooldown_skips += 1
            i += 1
            continue
        if _in_busy(boundary, busy_intervals):
            busy_deferrals += 1
            i += 1
            continue

        off = float(rng.uniform(0.0, policy.max_off_time))
        while off == 0.0:  # measure-zero guard; a renewal must actually detach
            off = float(rng.uniform(0.0, policy.max_off_time))
        resume_at = boundary + math.ceil(off)
        renewals += 1
        windows.append((boundary, off))
        fragments.append(PseudonymousTrace(fresh_pseudonym(), tuple(current), trace.owner))
        current = []

        # Delete attachment covered by [boundary, resume_at).
        j = i + 1
        while j < len(events) and events[j].end <= resume_at:
            deleted += events[j].duration
            j += 1
        if j < len(events) and events[j].start < resume_at:
            deleted += resume_at - events[j].start
            pending = TowerEvent(events[j].tower, resume_at, events[j].end)
        if pending is not None:
            reconnect = pending.start
        elif j < len(events):
            reconnect = events[j].start
        else:
            reconnect = resume_at
        eligible_at = reconnect + policy.cooldown_seconds(resume_at - boundary)
        i = j
        continue

    if current:
        fragments.append(PseudonymousTrace(fresh_pseudonym(), tuple(current), trace.owner))

    ledger = UtilityLedger(
        user=trace.owner,
        total_time=total,
        offline_time=deleted,
        renewals=renewals,
        switches_seen=switches,
        cooldown_skips=cooldown_skips,
        busy_deferrals=busy_deferrals,
        offline_windows=tuple(windows),
    )
    return fragments, ledger


def _count_switches(events: Sequence[TowerEvent]) -> int:
    return sum(1 for a, b in zip(events, events[1:]) if a.tower != b.tower)


def anonymize_dataset(
    ds: Dataset,
    policy: RenewalPolicy,
    busy_intervals: Mapping[int, BusyIntervals] | None = None,
) -> tuple[list[PseudonymousTrace], dict[int, UtilityLedger]]:
    """Run `anonymize` over every trace; fragments come back sorted by start."""
    busy_intervals = busy_intervals or {}
    fragments: list[PseudonymousTrace] = []
    ledgers: dict[int, UtilityLedger] = {}
    for trace in ds:
        frs, ledger = anonymize(trace, policy, busy_intervals.get(trace.owner, ()))
        fragments.extend(frs)
        ledgers[trace.owner] = ledger
    fragments.sort(key=lambda fr: (fr.start, fr.end))
    return fragments, ledgers


class TraceAnonymizer(BaseEstimator):
    """Estimator-style wrapper over `anonymize_dataset`.

    `transform` maps a Dataset to the list of pseudonymous fragments and
    stores the per-user ledgers on `ledgers_`. There is nothing to fit.
    """

    def __init__(self, utility: float = 0.95, max_off_time: int = 30, rng_seed: int = 0,
                 literal_cooldown: bool = False):
        self.utility = utility
        self.max_off_time = max_off_time
        self.rng_seed = rng_seed
        self.literal_cooldown = literal_cooldown

    def _policy(self) -> RenewalPolicy:
        return RenewalPolicy(self.utility, self.max_off_time, self.rng_seed, self.literal_cooldown)

    def fit(self, ds: Dataset, y=None):
        return self

    def transform(self, ds: Dataset, busy_intervals: Mapping[int, BusyIntervals] | None = None
                  ) -> list[PseudonymousTrace]:
        check_dataset(ds)
        fragments, ledgers = anonymize_dataset(ds, self._policy(), busy_intervals)
        self.ledgers_ = ledgers
        return fragments
