"""Synthetic mobility populations with controllable predictability and mixing.

Each user walks a personal first-order Markov process over three kinds of
moves: following a small favorite cycle of residential towers, excursions
(mostly to a personal side pool, sometimes to a uniformly random tower), and
visits to shared high-traffic hubs. Predictable users keep the same favorite
cycle and side pool for the whole simulation; unpredictable users redraw both
every epoch, so the towers they occupy drift over time. Hub exposure scales
with the number of hubs and is far higher for mixing users. Dwell times are
exponential, rounded to whole seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import ParameterError
from .traces import Dataset, TowerEvent, Trace

# Walk shape constants: per-user tower budgets, excursion split, coverage
# gaps, and the hub-count scale at which hub_rate is taken at face value.
# Hub stays are short relative to residential dwells (transit behaviour).
FAVORITES_PER_USER = 5
EXCURSION_POOL = 8
EXCURSION_NOVEL_SHARE = 0.25
GAP_PROB = 0.005
GAP_MEAN_S = 3600.0
HUBS_AT_NOMINAL_RATE = 4.0
NONMIX_HUB_FACTOR = 0.0001
HUB_DWELL_FACTOR = 0.25

_TRAIT_ORDER = ("P/M", "nP/M", "P/nM", "nP/nM")
_TRAITS = {"P/M": (True, True), "nP/M": (False, True),
           "P/nM": (True, False), "nP/nM": (False, False)}


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for one synthetic population.

    home_bias is the probability that a non-hub move follows the favorite
    cycle instead of taking an excursion; lowering it adds novel towers to a
    user's footprint. hub_fraction designates the share of towers acting as
    shared hubs. frac_predictable and frac_mixing set the population trait
    mix that typology targets derive from. The tower count must comfortably
    exceed duration/epoch_len times the per-epoch tower budget, or
    unpredictable users start re-visiting old haunts.
    """

    n_users: int = 100
    n_towers: int = 3000
    duration: int = 30 * 86400
    home_bias: float = 0.9
    hub_fraction: float = 0.0013
    seed: int = 0
    mean_dwell: float = 1800.0
    frac_predictable: float = 0.48
    frac_mixing: float = 0.44
    hub_rate: float = 0.3
    epoch_len: int = 86400

    def __post_init__(self):
        if self.n_users < 1:
            raise ParameterError(f"n_users must be >= 1, got {self.n_users}")
        if self.n_towers < 2:
            raise ParameterError(f"n_towers must be >= 2, got {self.n_towers}")
        if self.duration <= 0:
            raise ParameterError(f"duration must be positive, got {self.duration}")
        if self.mean_dwell <= 0:
            raise ParameterError(f"mean_dwell must be positive, got {self.mean_dwell}")
        if self.epoch_len <= 0:
            raise ParameterError(f"epoch_len must be positive, got {self.epoch_len}")
        for name in ("home_bias", "hub_fraction", "frac_predictable", "frac_mixing", "hub_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {v}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SynthConfig":
        """Build from flat key=value strings, e.g. a parsed config file."""
        kwargs = {}
        fields = dict(cls.__annotations__)
        for key, raw in values.items():
            if key not in fields:
                raise ParameterError(f"unknown synth config key {key!r}")
            kwargs[key] = float(raw) if "float" in str(fields[key]) else int(raw)
        return cls(**kwargs)


def typology_targets(cfg: SynthConfig) -> dict[str, float]:
    """Target fraction of each user type implied by the configured trait mix."""
    fp, fm = cfg.frac_predictable, cfg.frac_mixing
    return {
        "P/M": fp * fm,
        "nP/M": (1.0 - fp) * fm,
        "P/nM": fp * (1.0 - fm),
        "nP/nM": (1.0 - fp) * (1.0 - fm),
    }


def assign_traits(cfg: SynthConfig) -> dict[int, tuple[bool, bool]]:
    """Per-user (predictable, mixing) flags matching the target mix.

    Counts use largest-remainder rounding of the targets; which users land in
    which class is a seeded shuffle.
    """
    targets = typology_targets(cfg)
    n = cfg.n_users
    exact = {t: targets[t] * n for t in _TRAIT_ORDER}
    counts = {t: int(exact[t]) for t in _TRAIT_ORDER}
    short = n - sum(counts.values())
    for t in sorted(_TRAIT_ORDER, key=lambda t: exact[t] - int(exact[t]), reverse=True)[:short]:
        counts[t] += 1
    labels = [t for t in _TRAIT_ORDER for _ in range(counts[t])]
    order = np.random.default_rng(cfg.seed).permutation(n)
    return {int(user): _TRAITS[labels[i]] for i, user in enumerate(order)}


def hub_count(cfg: SynthConfig) -> int:
    return max(0, min(int(round(cfg.hub_fraction * cfg.n_towers)), cfg.n_towers - 2))


def _epoch_slice(perm: np.ndarray, epoch: int) -> tuple[np.ndarray, np.ndarray]:
    """Favorite cycle and personal excursion pool for one epoch of one user."""
    fav_n = min(FAVORITES_PER_USER, len(perm))
    exc_n = min(EXCURSION_POOL, len(perm) - fav_n)
    stride = fav_n + exc_n
    wrap = max(1, len(perm) - stride + 1)
    base = (epoch * stride) % wrap
    block = perm[base:base + stride]
    return block[:fav_n], block[fav_n:]


def _walk_user(user: int, cfg: SynthConfig, predictable: bool, mixing: bool,
               n_hubs: int, residential: np.ndarray) -> Trace:
    rng = np.random.default_rng([cfg.seed, user])
    perm = rng.permutation(residential)
    if mixing:
        p_hub = min(1.0, cfg.hub_rate * n_hubs / HUBS_AT_NOMINAL_RATE)
    else:
        p_hub = min(1.0, cfg.hub_rate * NONMIX_HUB_FACTOR * n_hubs)
    if n_hubs == 0:
        p_hub = 0.0

    epoch = 0
    favorites, excursions = _epoch_slice(perm, 0)
    pos = 0
    cur = int(favorites[0])
    t = 0
    events: list[TowerEvent] = []
    while t < cfg.duration:
        mean = cfg.mean_dwell * HUB_DWELL_FACTOR if cur < n_hubs else cfg.mean_dwell
        dwell = max(1, int(rng.exponential(mean)))
        end = min(t + dwell, cfg.duration)
        events.append(TowerEvent(cur, t, end))
        t = end
        if t >= cfg.duration:
            break
        if rng.random() < GAP_PROB:
            t += 1 + int(rng.exponential(GAP_MEAN_S))
            if t >= cfg.duration:
                break
        if not predictable:
            e = int(t // cfg.epoch_len)
            if e != epoch:
                epoch = e
                favorites, excursions = _epoch_slice(perm, e)
                pos = 0
        if rng.random() < p_hub:
            cur = int(rng.integers(n_hubs))
        elif rng.random() < cfg.home_bias:
            pos = (pos + 1) % len(favorites)
            cur = int(favorites[pos])
        elif len(excursions) == 0 or rng.random() < EXCURSION_NOVEL_SHARE:
            cur = int(rng.integers(cfg.n_towers))
        else:
            cur = int(excursions[rng.integers(len(excursions))])
    return Trace(user, tuple(events))


def generate(cfg: SynthConfig) -> Dataset:
    """Generate the configured population; byte-identical for equal configs."""
    n_hubs = hub_count(cfg)
    residential = np.arange(n_hubs, cfg.n_towers)
    traits = assign_traits(cfg)
    traces = [
        _walk_user(user, cfg, *traits[user], n_hubs=n_hubs, residential=residential)
        for user in range(cfg.n_users)
    ]
    return Dataset(tuple(traces))


def with_seed(cfg: SynthConfig, seed: int) -> SynthConfig:
    """Same population model under a different random seed."""
    return replace(cfg, seed=seed)
