"""Core data types for tower-attachment traces and their canonical CSV format.

Timestamps are integer seconds throughout; sub-second values are rejected at
parse time so that window and boundary comparisons are exact.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence, Union

from .errors import ParseError, TraceValidationError, UnknownUserError

Source = Union[str, Path, IO[str], IO[bytes]]

TRACE_HEADER = "user_id,tower_id,start_s,end_s"
ANON_HEADER = "pseudonym_id,tower_id,start_s,end_s"
SIDECAR_HEADER = "pseudonym_id,user_id"


@dataclass(frozen=True, slots=True)
class TowerEvent:
    """One attachment to a tower over the half-open-ish span [start, end]."""

    tower: int
    start: int
    end: int

    def __post_init__(self):
        if self.tower < 0:
            raise TraceValidationError(f"tower id must be non-negative, got {self.tower}")
        if self.start > self.end:
            raise TraceValidationError(
                f"event start {self.start} is after end {self.end}"
            )

    @property
    def duration(self) -> int:
        return self.end - self.start


def _validated_events(events: Iterable[TowerEvent], owner: object) -> tuple[TowerEvent, ...]:
    evs = tuple(events)
    for a, b in zip(evs, evs[1:]):
        if b.start < a.end:
            raise TraceValidationError(
                f"overlapping events for {owner}: ({a.start},{a.end}) and ({b.start},{b.end})"
            )
    return evs


@dataclass(frozen=True, slots=True)
class Trace:
    """All attachments of one ground-truth user, sorted and non-overlapping.

    Consecutive events may share a boundary timestamp (a handoff) but must
    never overlap.
    """

    owner: int
    events: tuple[TowerEvent, ...]

    def __post_init__(self):
        if self.owner < 0:
            raise TraceValidationError(f"user id must be non-negative, got {self.owner}")
        object.__setattr__(self, "events", _validated_events(self.events, f"user {self.owner}"))

    def __len__(self) -> int:
        return len(self.events)

    @property
    def start(self) -> int:
        return self.events[0].start

    @property
    def end(self) -> int:
        return self.events[-1].end

    def towers(self) -> set[int]:
        return {e.tower for e in self.events}

    def attached_seconds(self) -> int:
        return sum(e.duration for e in self.events)

    def tower_sequence(self) -> list[int]:
        return [e.tower for e in self.events]


@dataclass(frozen=True, slots=True)
class AnonTrace:
    """Attacker-visible view of a pseudonymous fragment: identifier and events only."""

    pseudonym: int
    events: tuple[TowerEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", _validated_events(self.events, f"pseudonym {self.pseudonym}"))

    def __len__(self) -> int:
        return len(self.events)

    @property
    def start(self) -> int:
        return self.events[0].start

    @property
    def end(self) -> int:
        return self.events[-1].end

    def tower_sequence(self) -> list[int]:
        return [e.tower for e in self.events]


@dataclass(frozen=True, slots=True)
class PseudonymousTrace:
    """A defender-emitted fragment plus its scoring-only ground-truth label.

    The `truth` field exists solely for evaluation; anything attacker-facing
    must go through `view()`, which strips it.
    """

    pseudonym: int
    events: tuple[TowerEvent, ...]
    truth: int

    def __post_init__(self):
        object.__setattr__(self, "events", _validated_events(self.events, f"pseudonym {self.pseudonym}"))

    def __len__(self) -> int:
        return len(self.events)

    @property
    def start(self) -> int:
        return self.events[0].start

    @property
    def end(self) -> int:
        return self.events[-1].end

    def view(self) -> AnonTrace:
        return AnonTrace(self.pseudonym, self.events)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of traces, one per user, indexed by user id."""

    traces: tuple[Trace, ...]
    _by_user: Mapping[int, Trace] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ordered = tuple(sorted(self.traces, key=lambda t: t.owner))
        by_user = {}
        for tr in ordered:
            if tr.owner in by_user:
                raise TraceValidationError(f"duplicate trace for user {tr.owner}")
            by_user[tr.owner] = tr
        object.__setattr__(self, "traces", ordered)
        object.__setattr__(self, "_by_user", by_user)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces)

    def __contains__(self, user: int) -> bool:
        return user in self._by_user

    def __getitem__(self, user: int) -> Trace:
        try:
            return self._by_user[user]
        except KeyError:
            raise UnknownUserError(user) from None

    @property
    def users(self) -> list[int]:
        return [t.owner for t in self.traces]

    def towers(self) -> set[int]:
        out: set[int] = set()
        for tr in self.traces:
            out |= tr.towers()
        return out

    def attached_seconds(self) -> int:
        return sum(tr.attached_seconds() for tr in self.traces)

    def span(self) -> tuple[int, int]:
        """(earliest event start, latest event end) over all traces."""
        starts = [tr.start for tr in self.traces if len(tr)]
        ends = [tr.end for tr in self.traces if len(tr)]
        if not starts:
            raise TraceValidationError("span undefined for an empty dataset")
        return min(starts), max(ends)


def check_dataset(obj) -> Dataset:
    """Validation helper for estimator entry points: require a Dataset."""
    if not isinstance(obj, Dataset):
        raise TypeError(
            f"expected a Dataset, got {type(obj).__name__}; build one with "
            "read_traces() or ziptrace.synth.generate()"
        )
    return obj


# ---------------------------------------------------------------------------
# Canonical CSV format
# ---------------------------------------------------------------------------


def _open_lines(source: Source):
    """Yield (line_number, text) pairs from a path, text stream, or byte stream."""
    if isinstance(source, (str, Path)):
        fh = open(source, "r", encoding="utf-8")
        close = True
    elif isinstance(source, io.TextIOBase):
        fh, close = source, False
    else:
        fh, close = io.TextIOWrapper(source, encoding="utf-8"), False
    try:
        for i, line in enumerate(fh, start=1):
            yield i, line.rstrip("\n").rstrip("\r")
    finally:
        if close:
            fh.close()


def _parse_field(raw: str, name: str, line_number: int) -> int:
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        raise ParseError(line_number, f"{name} must be an integer, got {raw!r}") from None


def _parse_rows(source: Source, id_column: str):
    """Parse 4-column event rows, tolerating one optional header line."""
    for line_number, line in _open_lines(source):
        if not line.strip():
            continue
        fields = line.split(",")
        if line_number == 1 and fields[0].strip() in (id_column, "user_id", "pseudonym_id"):
            continue
        if len(fields) != 4:
            raise ParseError(line_number, f"expected 4 comma-separated fields, got {len(fields)}")
        ident = _parse_field(fields[0], id_column, line_number)
        tower = _parse_field(fields[1], "tower_id", line_number)
        start = _parse_field(fields[2], "start_s", line_number)
        end = _parse_field(fields[3], "end_s", line_number)
        if ident < 0:
            raise ParseError(line_number, f"{id_column} must be non-negative, got {ident}")
        if start > end:
            raise ParseError(line_number, f"start_s {start} is after end_s {end}")
        yield ident, TowerEvent(tower, start, end)


def read_traces(source: Source) -> Dataset:
    """Read the canonical `user_id,tower_id,start_s,end_s` CSV into a Dataset.

    Events are grouped by user and sorted by start. A malformed line raises
    ParseError naming the line; overlapping events for one user raise
    TraceValidationError.
    """
    per_user: dict[int, list[TowerEvent]] = {}
    for user, event in _parse_rows(source, "user_id"):
        per_user.setdefault(user, []).append(event)
    traces = [
        Trace(user, tuple(sorted(evs, key=lambda e: (e.start, e.end))))
        for user, evs in per_user.items()
    ]
    return Dataset(tuple(traces))


def write_traces(ds: Dataset, dest: Source) -> None:
    """Write a Dataset in canonical form: header, users ascending, events by start."""
    _write_lines(
        dest,
        TRACE_HEADER,
        (
            f"{tr.owner},{e.tower},{e.start},{e.end}"
            for tr in ds.traces
            for e in tr.events
        ),
    )


def read_anon_traces(source: Source) -> list[AnonTrace]:
    """Read pseudonymous fragments (`pseudonym_id,...` CSV) as attacker views."""
    per_pseudonym: dict[int, list[TowerEvent]] = {}
    order: list[int] = []
    for pid, event in _parse_rows(source, "pseudonym_id"):
        if pid not in per_pseudonym:
            order.append(pid)
        per_pseudonym.setdefault(pid, []).append(event)
    return [
        AnonTrace(pid, tuple(sorted(per_pseudonym[pid], key=lambda e: (e.start, e.end))))
        for pid in order
    ]


def write_anon_traces(fragments: Sequence[PseudonymousTrace | AnonTrace], dest: Source) -> None:
    _write_lines(
        dest,
        ANON_HEADER,
        (
            f"{fr.pseudonym},{e.tower},{e.start},{e.end}"
            for fr in fragments
            for e in fr.events
        ),
    )


def write_sidecar(fragments: Sequence[PseudonymousTrace], dest: Source) -> None:
    """Write the scoring-only pseudonym -> user mapping."""
    _write_lines(dest, SIDECAR_HEADER, (f"{fr.pseudonym},{fr.truth}" for fr in fragments))


def read_sidecar(source: Source) -> dict[int, int]:
    mapping: dict[int, int] = {}
    for line_number, line in _open_lines(source):
        if not line.strip():
            continue
        fields = line.split(",")
        if line_number == 1 and fields[0].strip() == "pseudonym_id":
            continue
        if len(fields) != 2:
            raise ParseError(line_number, f"expected 2 comma-separated fields, got {len(fields)}")
        pid = _parse_field(fields[0], "pseudonym_id", line_number)
        user = _parse_field(fields[1], "user_id", line_number)
        mapping[pid] = user
    return mapping


def _write_lines(dest: Source, header: str, lines: Iterable[str]) -> None:
    if isinstance(dest, (str, Path)):
        fh = open(dest, "w", encoding="utf-8", newline="")
        close = True
    elif isinstance(dest, io.TextIOBase):
        fh, close = dest, False
    else:
        fh, close = io.TextIOWrapper(dest, encoding="utf-8", newline=""), False
    try:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")
        fh.flush()
    finally:
        if close:
            fh.close()
        elif isinstance(fh, io.TextIOWrapper):
            fh.detach()


# ---------------------------------------------------------------------------
# Train/test split
# ---------------------------------------------------------------------------


def split_by_period(ds: Dataset, boundary: int) -> tuple[Dataset, Dataset]:
    """Split every trace at `boundary` seconds.

    Events starting before the boundary go to the train half, the rest to the
    test half; an event straddling the boundary is truncated into both halves,
    so total attached time is conserved. Users with no events in a half are
    omitted from that half.
    """
    train: list[Trace] = []
    test: list[Trace] = []
    for tr in ds.traces:
        before: list[TowerEvent] = []
        after: list[TowerEvent] = []
        for e in tr.events:
            if e.start < boundary:
                if e.end > boundary:
                    before.append(TowerEvent(e.tower, e.start, boundary))
                    after.append(TowerEvent(e.tower, boundary, e.end))
                else:
                    before.append(e)
            else:
                after.append(e)
        if before:
            train.append(Trace(tr.owner, tuple(before)))
        if after:
            test.append(Trace(tr.owner, tuple(after)))
    return Dataset(tuple(train)), Dataset(tuple(test))
