"""Smart-contract rules for surplus offers, demand requests and grid settlement."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .chain import GRID, EnergyTransaction, Kind, LedgerError, Leg, make_tx_id
from .grid import MeterReading, Role, classify_role, wh_to_kwh


class ContractViolation(Exception):
    pass


def price_to_milli(unit_price: float) -> int:
    if unit_price < 0:
        raise ValueError("unit price must be >= 0")
    return int(round(unit_price * 1000))


@dataclass(frozen=True)
class SmartContract:
    """Flat-price, grid-mediated rule set.

    Offers and requests are processed in ascending tx_id order, so the
    outcome never depends on the order readings arrive in.
    """

    price_milli: int

    @classmethod
    def at_price(cls, unit_price: float) -> "SmartContract":
        return cls(price_to_milli(unit_price))

    @property
    def unit_price(self) -> float:
        return self.price_milli / 1000


@dataclass(frozen=True)
class GridAccount:
    """Grid-side state carried between settlement epochs.

    ``cash`` maps actor id to a balance in micro-currency
    (Wh x milli-currency/kWh), positive meaning money received.
    """

    energy_buffer: int = 0  # Wh
    cash: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.energy_buffer < 0:
            raise LedgerError(f"negative grid buffer {self.energy_buffer}")


@dataclass(frozen=True)
class Settlement:
    transactions: list[EnergyTransaction]
    grid: GridAccount
    sales: int
    purchases: int
    imports: int
    buffer_before: int

    @property
    def buffer_delta(self) -> int:
        return self.grid.energy_buffer - self.buffer_before


@dataclass(frozen=True)
class Alert:
    period: int
    surplus: int  # Wh

    @property
    def surplus_kwh(self) -> float:
        return wh_to_kwh(self.surplus)


def announce_surplus(reading: MeterReading, price: float) -> EnergyTransaction:
    role = classify_role(reading)
    if role is not Role.PROSUMER:
        raise ContractViolation(f"house {reading.house_id} is {role.value}; only prosumers may offer")
    return EnergyTransaction(
        tx_id=make_tx_id(reading.period, Kind.OFFER, reading.house_id),
        kind=Kind.OFFER,
        actor=reading.house_id,
        counterparty=GRID,
        amount=reading.produced - reading.consumed,
        price_milli=price_to_milli(price),
        period=reading.period,
    )


def place_demand(reading: MeterReading, price: float) -> EnergyTransaction:
    role = classify_role(reading)
    if role is not Role.CONSUMER:
        raise ContractViolation(f"house {reading.house_id} is {role.value}; only consumers may request")
    return EnergyTransaction(
        tx_id=make_tx_id(reading.period, Kind.REQUEST, reading.house_id),
        kind=Kind.REQUEST,
        actor=reading.house_id,
        counterparty=GRID,
        amount=reading.consumed - reading.produced,
        price_milli=price_to_milli(price),
        period=reading.period,
    )


def _check_unique(txs: Iterable[EnergyTransaction]) -> None:
    seen = set()
    for tx in txs:
        if tx.tx_id in seen:
            raise LedgerError(f"duplicate tx_id {tx.tx_id}")
        seen.add(tx.tx_id)


def settle(
    offers: Sequence[EnergyTransaction],
    requests: Sequence[EnergyTransaction],
    grid: GridAccount,
    contract: SmartContract,
) -> Settlement:
    """Route every offer and request through the grid.

    The grid buys each offer in full. Requests are served from the pooled
    surplus (carried buffer plus this period's sales) and any shortfall is
    imported. Whatever surplus is left stays in the buffer.
    """
    _check_unique([*offers, *requests])
    periods = {tx.period for tx in [*offers, *requests]}
    if len(periods) > 1:
        raise ContractViolation(f"settlement spans several periods: {sorted(periods)}")
    for tx in offers:
        if tx.kind is not Kind.OFFER:
            raise ContractViolation(f"tx {tx.tx_id} is not an offer")
    for tx in requests:
        if tx.kind is not Kind.REQUEST:
            raise ContractViolation(f"tx {tx.tx_id} is not a request")

    price = contract.price_milli
    cash = dict(grid.cash)
    out: list[EnergyTransaction] = []
    pool = grid.energy_buffer
    sales = purchases = imports = 0

    for tx in sorted(offers, key=lambda t: t.tx_id):
        out.append(
            EnergyTransaction(
                make_tx_id(tx.period, Kind.SETTLEMENT, tx.actor, Leg.SALE),
                Kind.SETTLEMENT, tx.actor, GRID, tx.amount, price, tx.period,
            )
        )
        pool += tx.amount
        sales += tx.amount
        cash[tx.actor] = cash.get(tx.actor, 0) + tx.amount * price
        cash[GRID] = cash.get(GRID, 0) - tx.amount * price

    for tx in sorted(requests, key=lambda t: t.tx_id):
        from_pool = min(pool, tx.amount)
        shortfall = tx.amount - from_pool
        if from_pool:
            out.append(
                EnergyTransaction(
                    make_tx_id(tx.period, Kind.SETTLEMENT, tx.actor, Leg.DELIVERY),
                    Kind.SETTLEMENT, GRID, tx.actor, from_pool, price, tx.period,
                )
            )
        if shortfall:
            out.append(
                EnergyTransaction(
                    make_tx_id(tx.period, Kind.SETTLEMENT, tx.actor, Leg.IMPORT),
                    Kind.SETTLEMENT, GRID, tx.actor, shortfall, price, tx.period,
                )
            )
        pool -= from_pool
        purchases += tx.amount
        imports += shortfall
        cash[tx.actor] = cash.get(tx.actor, 0) - tx.amount * price
        cash[GRID] = cash.get(GRID, 0) + tx.amount * price

    new_grid = replace(grid, energy_buffer=pool, cash=cash)
    return Settlement(out, new_grid, sales, purchases, imports, grid.energy_buffer)


def surplus_alert(period: int, produced: int, consumed: int) -> Alert | None:
    if produced < 0 or consumed < 0:
        raise ValueError("period totals must be >= 0")
    if produced > consumed:
        return Alert(period, produced - consumed)
    return None


@dataclass(frozen=True)
class PeriodOutcome:
    transactions: list[EnergyTransaction]
    settlement: Settlement
    alert: Alert | None


def run_period(
    period: int,
    readings: Sequence[MeterReading],
    grid: GridAccount,
    contract: SmartContract,
) -> PeriodOutcome:
    """Classify every reading, emit offers/requests, settle, and raise the surplus alert.

    Balanced houses produce no transaction.
    """
    offers, requests = [], []
    for r in readings:
        if r.period != period:
            raise ContractViolation(f"reading for house {r.house_id} is for period {r.period}, not {period}")
        role = classify_role(r)
        if role is Role.PROSUMER:
            offers.append(announce_surplus(r, contract.unit_price))
        elif role is Role.CONSUMER:
            requests.append(place_demand(r, contract.unit_price))
    offers.sort(key=lambda t: t.tx_id)
    requests.sort(key=lambda t: t.tx_id)
    settlement = settle(offers, requests, grid, contract)
    alert = surplus_alert(
        period, sum(r.produced for r in readings), sum(r.consumed for r in readings)
    )
    return PeriodOutcome([*offers, *requests, *settlement.transactions], settlement, alert)


def check_roles(
    transactions: Iterable[EnergyTransaction], readings: Mapping[tuple[int, int], MeterReading]
) -> list[str]:
    """Cross-check offers/requests against the readings they claim to come from.

    ``readings`` is keyed by (house_id, period). Returns a list of problems.
    """
    problems = []
    for tx in transactions:
        if tx.kind is Kind.SETTLEMENT:
            continue
        r = readings.get((tx.actor, tx.period))
        if r is None:
            problems.append(f"tx {tx.tx_id}: no reading for house {tx.actor} period {tx.period}")
            continue
        if tx.kind is Kind.OFFER and not (r.produced > r.consumed and tx.amount == r.produced - r.consumed):
            problems.append(f"tx {tx.tx_id}: offer inconsistent with reading")
        if tx.kind is Kind.REQUEST and not (r.consumed > r.produced and tx.amount == r.consumed - r.produced):
            problems.append(f"tx {tx.tx_id}: request inconsistent with reading")
    return problems


def ledger_balance(transactions: Iterable[EnergyTransaction]) -> tuple[int, int, int]:
    """(sales, purchases, imports) in Wh recovered from settlement transactions alone."""
    sales = purchases = imports = 0
    for tx in transactions:
        if tx.kind is not Kind.SETTLEMENT:
            continue
        if tx.leg is Leg.SALE:
            sales += tx.amount
        else:
            purchases += tx.amount
            if tx.leg is Leg.IMPORT:
                imports += tx.amount
    return sales, purchases, imports
