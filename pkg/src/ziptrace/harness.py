"""End-to-end experiment orchestration: defender sweeps, attacker runs, reports.

Every run is deterministic given the config and its seed list: dataset
generation, defender draws, and test-trace sampling all derive their
generator state from the experiment seed. Reports are plain rows of Python
scalars so emitted CSVs are byte-stable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields as dataclass_fields
from functools import lru_cache
from pathlib import Path
from typing import IO, Mapping, Sequence, Union

import numpy as np

from . import battery as battery_mod
from .attacker import (
    FragmentIndex,
    ProfileScorer,
    TransitionMatrix,
    build_profiles,
    ci95_halfwidth,
    link_and_classify,
    train_link_matrix,
)
from .defender import RenewalPolicy, anonymize_dataset
from .errors import ParameterError
from .metrics import BehaviorScores, USER_TYPES, score_dataset
from .synth import SynthConfig, generate, with_seed
from .traces import Dataset, read_traces, split_by_period

_EXPERIMENT_KEYS = {
    "traces", "split", "utilities", "max_off_times", "sweep_utility",
    "sweep_max_off_times", "durations", "traces_per_user", "max_links",
    "window", "seeds", "jaccard_threshold", "mixing_threshold", "busy",
}


def load_kv(source: Union[str, Path, IO[str]]) -> dict[str, str]:
    """Flat key=value file; blank lines and # comments ignored."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    out: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"expected key=value, got {line!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.split(",") if x.strip())


def _float_tuple(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid definition for the three experiment families.

    The dataset source is either a synthetic population (`synth`, whose seed
    is replaced by each experiment seed) or a trace CSV. `window=None` makes
    the attacker's linking window track each grid point's max_off_time, which
    is public. `max_links=None` means chains grow until no candidate remains.
    """

    split: int
    synth: SynthConfig | None = None
    traces_csv: str | None = None
    utilities: tuple[float, ...] = (1.0, 0.95)
    max_off_times: tuple[int, ...] = (30,)
    sweep_utility: float = 0.95
    sweep_max_off_times: tuple[int, ...] = (5, 15, 30, 60, 120)
    durations: tuple[int, ...] = (600, 3600, 86400)
    traces_per_user: int = 10
    max_links: int | None = None
    window: int | None = None
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    jaccard_threshold: float = 0.1
    mixing_threshold: float = 4.0
    busy_csv: str | None = None

    def __post_init__(self):
        if (self.synth is None) == (self.traces_csv is None):
            raise ParameterError("exactly one of synth config or traces csv is required")
        if not self.utilities or not self.max_off_times or not self.seeds:
            raise ParameterError("utility, max_off_time, and seed grids must be non-empty")
        if self.traces_per_user < 1:
            raise ParameterError("traces_per_user must be >= 1")

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "ExperimentConfig":
        values = dict(values)
        kwargs: dict[str, object] = {}
        if "traces" in values:
            kwargs["traces_csv"] = values.pop("traces")
        if "busy" in values:
            kwargs["busy_csv"] = values.pop("busy")
        if "split" in values:
            kwargs["split"] = int(values.pop("split"))
        for key, conv in (
            ("utilities", _float_tuple), ("max_off_times", _int_tuple),
            ("sweep_max_off_times", _int_tuple), ("durations", _int_tuple),
            ("seeds", _int_tuple),
        ):
            if key in values:
                kwargs[key] = conv(values.pop(key))
        for key, conv in (
            ("sweep_utility", float), ("traces_per_user", int),
            ("jaccard_threshold", float), ("mixing_threshold", float),
        ):
            if key in values:
                kwargs[key] = conv(values.pop(key))
        if "max_links" in values:
            n = int(values.pop("max_links"))
            kwargs["max_links"] = None if n == 0 else n
        if "window" in values:
            n = int(values.pop("window"))
            kwargs["window"] = None if n == 0 else n
        if "traces_csv" not in kwargs:
            kwargs["synth"] = SynthConfig.from_mapping(values)
        elif values:
            raise ParameterError(f"unknown experiment config keys: {sorted(values)}")
        return cls(**kwargs)

    def config_hash(self) -> str:
        text = ",".join(
            f"{f.name}={getattr(self, f.name)!r}" for f in dataclass_fields(self)
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentReport:
    """Tidy rows for one figure family, plus optional battery rows."""

    kind: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    battery_columns: tuple[str, ...] = ()
    battery_rows: tuple[tuple, ...] = ()


@dataclass(frozen=True)
class _Population:
    ds: Dataset
    train: Dataset
    test: Dataset
    scores: tuple[BehaviorScores, ...]
    types: Mapping[int, str]
    profiles: Mapping[int, TransitionMatrix]
    scorer: ProfileScorer
    test_span: tuple[int, int]


@lru_cache(maxsize=8)
def _prepare(cfg: ExperimentConfig, seed: int) -> _Population:
    """Dataset, split, typology, and trained profiles for one seed."""
    if cfg.synth is not None:
        ds = generate(with_seed(cfg.synth, seed))
    else:
        ds = read_traces(cfg.traces_csv)
    train, test = split_by_period(ds, cfg.split)
    scores = tuple(score_dataset(ds, cfg.split, cfg.jaccard_threshold, cfg.mixing_threshold))
    types = {s.user: s.type for s in scores}
    profiles = build_profiles(train)
    scorer = ProfileScorer(profiles)
    span_end = ds.span()[1]
    return _Population(ds, train, test, scores, types, profiles, scorer,
                       (cfg.split, span_end))


def _sample_indices(n: int, k: int, rng: np.random.Generator) -> list[int]:
    if n <= k:
        return list(range(n))
    return sorted(int(i) for i in rng.choice(n, size=k, replace=False))


def _group_mean_rows(values_by_type: Mapping[str, list[float]]):
    for t in USER_TYPES:
        vals = values_by_type.get(t)
        if vals:
            yield t, float(np.mean(vals)), ci95_halfwidth(vals), len(vals)


@lru_cache(maxsize=16)
def _link_matrix(cfg: ExperimentConfig, seed: int, window: int):
    return train_link_matrix(_prepare(cfg, seed).train, window)


def _attack_grid_point(cfg: ExperimentConfig, pop: _Population, seed: int,
                       utility: float, max_off: int):
    """Defend the test period, attack every sampled fragment, return raw results."""
    window = cfg.window if cfg.window is not None else max_off
    lm = _link_matrix(cfg, seed, window)
    policy = RenewalPolicy(utility, max_off, rng_seed=seed)
    busy = _load_busy(cfg.busy_csv) if cfg.busy_csv else None
    fragments, ledgers = anonymize_dataset(pop.test, policy, busy)
    sidecar = {fr.pseudonym: fr.truth for fr in fragments}
    views = [fr.view() for fr in fragments]
    index = FragmentIndex(views)

    by_user: dict[int, list[int]] = {}
    for fr in fragments:
        if fr.truth in pop.types:
            by_user.setdefault(fr.truth, []).append(fr.pseudonym)

    rng = np.random.default_rng([seed, max_off, int(round(utility * 1_000_000)), 17])
    correct: dict[int, list[bool]] = {}
    linked_ok: list[bool] = []
    for user in sorted(by_user):
        pids = by_user[user]
        for i in _sample_indices(len(pids), cfg.traces_per_user, rng):
            attr = link_and_classify(
                pop.profiles, lm, views, pids[i], max_links=cfg.max_links,
                scorer=pop.scorer, index=index,
            )
            correct.setdefault(user, []).append(attr.predicted == user)
            linked_ok.append(any(sidecar[p] == user for p in attr.linked_chain[1:]))
    accuracy = {u: float(np.mean(v)) for u, v in correct.items()}
    link_rate = float(np.mean(linked_ok)) if linked_ok else 0.0
    return accuracy, link_rate, ledgers


def _per_type(pop: _Population, per_user: Mapping[int, float]) -> dict[str, list[float]]:
    grouped: dict[str, list[float]] = {}
    for u, v in per_user.items():
        t = pop.types.get(u)
        if t is not None:
            grouped.setdefault(t, []).append(v)
    return grouped


def run_tradeoff(cfg: ExperimentConfig) -> ExperimentReport:
    """Accuracy / utility / battery per user type over the policy grid."""
    rows: list[tuple] = []
    battery_rows: list[tuple] = []
    for seed in cfg.seeds:
        pop = _prepare(cfg, seed)
        test_days = max((pop.test_span[1] - pop.test_span[0]) / 86400.0, 1e-9)
        for max_off in cfg.max_off_times:
            for utility in cfg.utilities:
                accuracy, _, ledgers = _attack_grid_point(cfg, pop, seed, utility, max_off)
                realized = {u: ledgers[u].realized_utility for u in accuracy if u in ledgers}
                cycles = {u: ledgers[u].renewals / test_days for u in accuracy if u in ledgers}
                acc_by_type = _per_type(pop, accuracy)
                real_by_type = _per_type(pop, realized)
                cyc_by_type = _per_type(pop, cycles)
                for t, mean_acc, ci, _n in _group_mean_rows(acc_by_type):
                    mean_cycles = float(np.mean(cyc_by_type[t]))
                    rows.append((
                        seed, t, utility, max_off, mean_acc, ci,
                        float(np.mean(real_by_type[t])),
                        battery_mod.daily_battery_fraction(mean_cycles, battery_mod.RADIO_3G),
                        battery_mod.daily_battery_fraction(mean_cycles, battery_mod.RADIO_4G),
                    ))
                all_cycles = float(np.mean(list(cycles.values()))) if cycles else 0.0
                battery_rows.append((
                    seed, utility, max_off, all_cycles,
                    battery_mod.daily_battery_fraction(all_cycles, battery_mod.RADIO_3G),
                    battery_mod.daily_battery_fraction(all_cycles, battery_mod.RADIO_4G),
                ))
    return ExperimentReport(
        kind="tradeoff",
        columns=("seed", "user_type", "utility", "max_off_time", "mean_accuracy",
                 "ci95_halfwidth", "mean_realized_utility", "battery_fraction_3g",
                 "battery_fraction_4g"),
        rows=tuple(rows),
        battery_columns=("seed", "utility", "max_off_time", "mean_cycles_per_day",
                         "battery_fraction_3g", "battery_fraction_4g"),
        battery_rows=tuple(battery_rows),
    )


def run_trace_length(cfg: ExperimentConfig) -> ExperimentReport:
    """Profiles-only accuracy against ground-truth test slices of fixed duration."""
    rows: list[tuple] = []
    for seed in cfg.seeds:
        pop = _prepare(cfg, seed)
        span_start, span_end = pop.test_span
        span_len = max(span_end - span_start, 1)
        for duration in cfg.durations:
            capped = duration >= span_len
            eff = span_len if capped else duration
            rng = np.random.default_rng([seed, eff, 23])
            correct: dict[int, list[bool]] = {}
            for user in sorted(pop.types):
                if user not in pop.test:
                    continue
                windows: dict[int, list[int]] = {}
                for e in pop.test[user].events:
                    windows.setdefault((e.start - span_start) // eff, []).append(e.tower)
                keys = sorted(windows)
                for i in _sample_indices(len(keys), cfg.traces_per_user, rng):
                    predicted, _ = pop.scorer.classify(windows[keys[i]])
                    correct.setdefault(user, []).append(predicted == user)
            accuracy = {u: float(np.mean(v)) for u, v in correct.items()}
            for t, mean_acc, ci, _n in _group_mean_rows(_per_type(pop, accuracy)):
                rows.append((seed, t, duration, int(capped), mean_acc, ci))
    return ExperimentReport(
        kind="trace_length",
        columns=("seed", "user_type", "duration_s", "span_capped",
                 "mean_accuracy", "ci95_halfwidth"),
        rows=tuple(rows),
    )


def run_offline_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Accuracy and linking success across max_off_time at fixed utility."""
    rows: list[tuple] = []
    for seed in cfg.seeds:
        pop = _prepare(cfg, seed)
        for max_off in cfg.sweep_max_off_times:
            accuracy, link_rate, _ = _attack_grid_point(
                cfg, pop, seed, cfg.sweep_utility, max_off)
            for t, mean_acc, ci, _n in _group_mean_rows(_per_type(pop, accuracy)):
                rows.append((seed, t, cfg.sweep_utility, max_off, mean_acc, ci, link_rate))
    return ExperimentReport(
        kind="offline_sweep",
        columns=("seed", "user_type", "utility", "max_off_time", "mean_accuracy",
                 "ci95_halfwidth", "link_success_rate"),
        rows=tuple(rows),
    )


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def emit_plot_data(report: ExperimentReport, out_dir: Union[str, Path]) -> list[Path]:
    """Write one tidy CSV per figure family; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    path = out / f"{report.kind}.csv"
    _write_csv(path, report.columns, report.rows)
    paths.append(path)
    if report.battery_rows or report.battery_columns:
        bpath = out / "battery.csv"
        _write_csv(bpath, report.battery_columns, report.battery_rows)
        paths.append(bpath)
    return paths


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")


def run_all(cfg: ExperimentConfig, out_dir: Union[str, Path]) -> list[Path]:
    """Run the three experiment families and write all output files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for report in (run_tradeoff(cfg), run_trace_length(cfg), run_offline_sweep(cfg)):
        paths.extend(emit_plot_data(report, out))
    manifest = out / "manifest.txt"
    manifest.write_text(
        f"config_hash={cfg.config_hash()}\nseeds={','.join(str(s) for s in cfg.seeds)}\n",
        encoding="utf-8",
    )
    paths.append(manifest)
    return paths


def _load_busy(path: str) -> dict[int, tuple[tuple[int, int], ...]]:
    """Busy intervals CSV: user_id,start_s,end_s."""
    per_user: dict[int, list[tuple[int, int]]] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("user_id"):
            continue
        u, s, e = (int(x) for x in line.split(","))
        per_user.setdefault(u, []).append((s, e))
    return {u: tuple(sorted(v)) for u, v in per_user.items()}


def poisson_busy_intervals(users: Sequence[int], span: tuple[int, int],
                           per_day: float, mean_len_s: float,
                           seed: int = 0) -> dict[int, tuple[tuple[int, int], ...]]:
    """Synthetic call/screen activity: Poisson arrivals with exponential length.

    A stand-in for real interactivity logs when exercising busy-interval
    deferral.
    """
    lo, hi = span
    out: dict[int, tuple[tuple[int, int], ...]] = {}
    for u in users:
        rng = np.random.default_rng([seed, u, 29])
        n = rng.poisson(per_day * (hi - lo) / 86400.0)
        starts = np.sort(rng.integers(lo, hi, size=n))
        intervals = []
        for s in starts:
            length = max(1, int(rng.exponential(mean_len_s)))
            intervals.append((int(s), min(int(s) + length, hi)))
        out[u] = tuple(intervals)
    return out
