"""Region model: client groups, houses, meter readings and billing arithmetic.

Energy is carried as integer watt-hours everywhere inside the package;
kWh only appears when reading configs and writing reports or CSV files.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GROUP_IDS = ("A", "B", "C", "D", "E")
MONTHS = 12
WH_PER_KWH = 1000

READINGS_HEADER = ("house_id", "month", "consumed_kwh", "produced_kwh")


class ScenarioError(ValueError):
    """Invalid scenario configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class Role(enum.Enum):
    PROSUMER = "Prosumer"
    CONSUMER = "Consumer"
    BALANCED = "Balanced"


def kwh_to_wh(kwh: float) -> int:
    return int(round(float(kwh) * WH_PER_KWH))


def wh_to_kwh(wh: int) -> float:
    return wh / WH_PER_KWH


@dataclass(frozen=True)
class ClientGroup:
    id: str
    house_size: float
    house_count: int
    avg_pv_area_per_house: float
    monthly_potential_per_house: float
    monthly_consumption_per_house: float

    @property
    def total_pv_area(self) -> float:
        return self.house_count * self.avg_pv_area_per_house


@dataclass(frozen=True)
class House:
    id: int
    group: str
    pv_area: float
    base_consumption: int  # Wh / month
    base_potential: int  # Wh / month


@dataclass(frozen=True)
class MeterReading:
    house_id: int
    period: int
    consumed: int  # Wh
    produced: int  # Wh

    def __post_init__(self):
        if self.consumed < 0 or self.produced < 0:
            raise ValueError(f"negative energy in reading for house {self.house_id}")


@dataclass(frozen=True)
class ScenarioConfig:
    groups: tuple[dict, ...]
    irradiance_profile: tuple[float, ...]
    consumption_profile: tuple[float, ...]
    unit_price: float
    seed: int
    noise_amplitude: float = 0.05

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        for key in ("groups", "irradiance_profile", "unit_price", "seed"):
            if key not in raw:
                raise ScenarioError(key, "missing")
        profile = raw.get("consumption_profile")
        if profile is None:
            profile = default_config().consumption_profile
        return cls(
            groups=tuple(dict(g) for g in raw["groups"]),
            irradiance_profile=tuple(raw["irradiance_profile"]),
            consumption_profile=tuple(profile),
            unit_price=raw["unit_price"],
            seed=raw["seed"],
            noise_amplitude=raw.get("noise_amplitude", 0.05),
        )

    def to_dict(self) -> dict:
        return {
            "groups": [dict(g) for g in self.groups],
            "irradiance_profile": list(self.irradiance_profile),
            "consumption_profile": list(self.consumption_profile),
            "unit_price": self.unit_price,
            "seed": self.seed,
            "noise_amplitude": self.noise_amplitude,
        }

    def replace(self, **changes) -> "ScenarioConfig":
        data = self.to_dict()
        data.update(changes)
        return ScenarioConfig.from_dict(data)


@dataclass(frozen=True)
class Scenario:
    groups: tuple[ClientGroup, ...]
    houses: tuple[House, ...]
    irradiance_profile: tuple[float, ...]
    consumption_profile: tuple[float, ...]
    unit_price: float
    rng_seed: int
    noise_amplitude: float
    _by_id: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {h.id: h for h in self.houses})

    def group(self, group_id: str) -> ClientGroup:
        for g in self.groups:
            if g.id == group_id:
                return g
        raise KeyError(group_id)

    def house(self, house_id: int) -> House:
        return self._by_id[house_id]

    def houses_in(self, group_id: str) -> list[House]:
        return [h for h in self.houses if h.group == group_id]


def default_config() -> ScenarioConfig:
    text = resources.files("gridfed.data").joinpath("default_scenario.json").read_text()
    return ScenarioConfig.from_dict(json.loads(text))


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("config", f"not valid JSON ({exc})") from None
    return ScenarioConfig.from_dict(raw)


def _number(value, name: str, *, minimum: float = 0.0) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(name, f"expected a number, got {value!r}")
    if not math.isfinite(value) or value < minimum:
        raise ScenarioError(name, f"must be finite and >= {minimum}, got {value!r}")
    return float(value)


def _validate_profile(profile: Sequence[float], name: str, *, peaked: bool) -> tuple[float, ...]:
    if len(profile) != MONTHS:
        raise ScenarioError(name, f"needs exactly {MONTHS} entries, got {len(profile)}")
    values = tuple(_number(v, f"{name}[{i}]") for i, v in enumerate(profile))
    if not peaked:
        return values
    if any(not 0.0 < v <= 1.0 for v in values):
        raise ScenarioError(name, "entries must lie in (0, 1]")
    if values[4] != max(values):
        raise ScenarioError(name, "maximum must fall in May")
    if values[0] != min(values):
        raise ScenarioError(name, "minimum must fall in January")
    return values


def _build_group(raw: dict, idx: int) -> ClientGroup:
    where = f"groups[{idx}]"
    gid = raw.get("id")
    if gid not in GROUP_IDS:
        raise ScenarioError(f"{where}.id", f"must be one of {', '.join(GROUP_IDS)}, got {gid!r}")
    count = raw.get("house_count")
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ScenarioError(f"{where}.house_count", f"must be an integer >= 1, got {count!r}")
    size = _number(raw.get("house_size_m2"), f"{where}.house_size_m2")
    pv = _number(raw.get("avg_pv_area_m2"), f"{where}.avg_pv_area_m2")
    if pv > size:
        raise ScenarioError(f"{where}.avg_pv_area_m2", "exceeds house size")
    return ClientGroup(
        id=gid,
        house_size=size,
        house_count=count,
        avg_pv_area_per_house=pv,
        monthly_potential_per_house=_number(raw.get("monthly_potential_kwh"), f"{where}.monthly_potential_kwh"),
        monthly_consumption_per_house=_number(
            raw.get("monthly_consumption_kwh"), f"{where}.monthly_consumption_kwh"
        ),
    )


def build_scenario(config: ScenarioConfig | None = None) -> Scenario:
    """Validate ``config`` and expand its groups into individual houses.

    House ids are assigned 1.. in group order (0 is reserved for the grid
    on the ledger). Every house in a group starts from the group averages.
    """
    if config is None:
        config = default_config()
    if not config.groups:
        raise ScenarioError("groups", "at least one group required")
    groups = tuple(_build_group(g, i) for i, g in enumerate(config.groups))
    ids = [g.id for g in groups]
    if len(set(ids)) != len(ids):
        raise ScenarioError("groups", f"duplicate group ids in {ids}")
    irradiance = _validate_profile(config.irradiance_profile, "irradiance_profile", peaked=True)
    seasonal = _validate_profile(config.consumption_profile, "consumption_profile", peaked=False)
    price = _number(config.unit_price, "unit_price")
    noise = _number(config.noise_amplitude, "noise_amplitude")
    if noise >= 1.0:
        raise ScenarioError("noise_amplitude", "must be < 1")
    if isinstance(config.seed, bool) or not isinstance(config.seed, int) or config.seed < 0:
        raise ScenarioError("seed", f"must be a non-negative integer, got {config.seed!r}")

    houses = []
    next_id = 1
    for g in groups:
        for _ in range(g.house_count):
            houses.append(
                House(
                    id=next_id,
                    group=g.id,
                    pv_area=g.avg_pv_area_per_house,
                    base_consumption=kwh_to_wh(g.monthly_consumption_per_house),
                    base_potential=kwh_to_wh(g.monthly_potential_per_house),
                )
            )
            next_id += 1
    return Scenario(
        groups=groups,
        houses=tuple(houses),
        irradiance_profile=irradiance,
        consumption_profile=seasonal,
        unit_price=price,
        rng_seed=config.seed,
        noise_amplitude=noise,
    )


def monthly_watt_hours(load_watts: float, hours_per_day: float, days: float) -> float:
    return load_watts * hours_per_day * days


def units_consumed(total_watt_hours: float) -> float:
    """Billing units (kWh) for an energy total in watt-hours."""
    return total_watt_hours / WH_PER_KWH


def billing_cost(total_units: float, unit_price: float) -> float:
    return total_units * unit_price


def classify_role(reading: MeterReading) -> Role:
    if reading.produced > reading.consumed:
        return Role.PROSUMER
    if reading.produced < reading.consumed:
        return Role.CONSUMER
    return Role.BALANCED


def generate_readings(scenario: Scenario, month: int) -> list[MeterReading]:
    """One reading per house for ``month`` (1..12).

    Production follows the irradiance profile and consumption the seasonal
    profile; both get independent uniform multiplicative noise of
    ``scenario.noise_amplitude``. The stream is keyed on (seed, month) so
    each month can be regenerated on its own.
    """
    if not 1 <= month <= MONTHS:
        raise ValueError(f"month must be in 1..{MONTHS}, got {month}")
    n = len(scenario.houses)
    rng = np.random.default_rng([scenario.rng_seed, month])
    amp = scenario.noise_amplitude
    prod_noise = rng.uniform(-amp, amp, n) if amp > 0 else np.zeros(n)
    cons_noise = rng.uniform(-amp, amp, n) if amp > 0 else np.zeros(n)
    irr = scenario.irradiance_profile[month - 1]
    season = scenario.consumption_profile[month - 1]

    readings = []
    for i, h in enumerate(scenario.houses):
        produced = int(round(h.base_potential * irr * (1.0 + prod_noise[i])))
        consumed = int(round(h.base_consumption * season * (1.0 + cons_noise[i])))
        readings.append(MeterReading(h.id, month, consumed, produced))
    return readings


def _fmt_kwh(wh: int) -> str:
    return f"{wh // WH_PER_KWH}.{wh % WH_PER_KWH:03d}"


def write_readings_csv(readings: Iterable[MeterReading], dest) -> None:
    """Write readings as CSV to a path or an open text stream."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_readings_csv(readings, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(READINGS_HEADER)
    for r in readings:
        writer.writerow([r.house_id, r.period, _fmt_kwh(r.consumed), _fmt_kwh(r.produced)])


def _parse_kwh(text: str, where: str) -> int:
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise ValueError(f"{where}: not a number: {text!r}") from None
    wh = value * WH_PER_KWH
    if wh != wh.to_integral_value():
        raise ValueError(f"{where}: more than 3 fractional digits: {text!r}")
    return int(wh)


def read_readings_csv(source) -> list[MeterReading]:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_readings_csv(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != READINGS_HEADER:
        raise ValueError(f"expected header {','.join(READINGS_HEADER)}, got {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"line {lineno}: expected 4 columns, got {len(row)}")
        out.append(
            MeterReading(
                house_id=int(row[0]),
                period=int(row[1]),
                consumed=_parse_kwh(row[2], f"line {lineno} consumed_kwh"),
                produced=_parse_kwh(row[3], f"line {lineno} produced_kwh"),
            )
        )
    return out
