"""Battery overhead of renewal cycles from measured radio association constants.

Each renewal costs one disassociation plus one association. The bundled 3G
and 4G profiles carry the measured mean power draw and duration of those
procedures; daily overhead is cycle energy times cycles per day over battery
capacity.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Union

from .errors import ParameterError


@dataclass(frozen=True)
class RadioProfile:
    """Mean power (mW) and duration (s) of one associate/disassociate pair."""

    connect_power_mw: float
    disconnect_power_mw: float
    connect_time_s: float
    disconnect_time_s: float
    label: str = "custom"

    def __post_init__(self):
        for name in ("connect_power_mw", "disconnect_power_mw", "connect_time_s", "disconnect_time_s"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class BatterySpec:
    voltage_v: float = 3.85
    capacity_mah: float = 2800.0

    def __post_init__(self):
        if self.voltage_v <= 0 or self.capacity_mah <= 0:
            raise ParameterError("battery voltage and capacity must be positive")

    @property
    def capacity_mwh(self) -> float:
        return self.voltage_v * self.capacity_mah


RADIO_3G = RadioProfile(2098.0, 1282.0, 5.0, 4.0, "3G")
RADIO_4G = RadioProfile(2006.0, 1120.0, 2.6, 3.0, "4G")
DEFAULT_BATTERY = BatterySpec()


def cycle_energy_mwh(profile: RadioProfile) -> float:
    """Energy of one associate/disassociate cycle in mWh."""
    joules_per_mw = (profile.connect_power_mw * profile.connect_time_s
                     + profile.disconnect_power_mw * profile.disconnect_time_s)
    return joules_per_mw / 3600.0


def daily_battery_fraction(cycles_per_day: float, profile: RadioProfile,
                           battery: BatterySpec = DEFAULT_BATTERY) -> float:
    """Fraction of battery capacity spent on renewals in one day, capped at 1."""
    if cycles_per_day < 0:
        raise ParameterError("cycles_per_day must be non-negative")
    return min(1.0, cycles_per_day * cycle_energy_mwh(profile) / battery.capacity_mwh)


def offline_time_per_cycle(profile: RadioProfile) -> float:
    """Reattachment latency added to each renewal's offline window, in seconds."""
    return profile.connect_time_s


def load_radio_profile(source: Union[str, Path, IO[str]], label: str = "custom") -> RadioProfile:
    """Read a profile from a flat key=value file.

    Keys: connect_power_mw, disconnect_power_mw, connect_time_s,
    disconnect_time_s, and optionally label.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"expected key=value, got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    label = values.pop("label", label)
    try:
        return RadioProfile(
            connect_power_mw=float(values.pop("connect_power_mw")),
            disconnect_power_mw=float(values.pop("disconnect_power_mw")),
            connect_time_s=float(values.pop("connect_time_s")),
            disconnect_time_s=float(values.pop("disconnect_time_s")),
            label=label,
        )
    except KeyError as missing:
        raise ParameterError(f"radio profile missing key {missing}") from None
