import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfed import chain, contract, grid
from gridfed.chain import GRID, Kind, LedgerError, Leg
from gridfed.contract import ContractViolation, GridAccount, SmartContract
from gridfed.grid import MeterReading

KWH = 1000
SC = SmartContract.at_price(20.0)


def test_offer_from_table5_house():
    r = MeterReading(house_id=1200, period=5, consumed=188 * KWH, produced=1187 * KWH)
    tx = contract.announce_surplus(r, 20.0)
    assert tx.kind is Kind.OFFER
    assert tx.amount == 999 * KWH
    assert tx.actor == 1200 and tx.counterparty == GRID
    assert tx.price_milli == 20000


def test_offer_small_difference():
    assert contract.announce_surplus(MeterReading(1, 1, 7, 10), 1.0).amount == 3


@pytest.mark.parametrize("produced, consumed", [(7, 7), (5, 7)])
def test_non_prosumer_cannot_offer(produced, consumed):
    with pytest.raises(ContractViolation):
        contract.announce_surplus(MeterReading(1, 1, consumed, produced), 1.0)


@pytest.mark.parametrize("produced, consumed, amount", [(0, 188 * KWH, 188 * KWH), (100 * KWH, 270 * KWH, 170 * KWH)])
def test_requests(produced, consumed, amount):
    tx = contract.place_demand(MeterReading(3, 2, consumed, produced), 20.0)
    assert tx.kind is Kind.REQUEST and tx.amount == amount


def test_prosumer_cannot_request():
    with pytest.raises(ContractViolation):
        contract.place_demand(MeterReading(1, 1, 5, 7), 1.0)


def _offer(h, wh, period=1):
    return contract.announce_surplus(MeterReading(h, period, 0, wh), SC.unit_price)


def _request(h, wh, period=1):
    return contract.place_demand(MeterReading(h, period, wh, 0), SC.unit_price)


def test_settle_surplus_goes_to_buffer():
    s = contract.settle([_offer(1, 2 * KWH), _offer(2, 1 * KWH)], [_request(3, 2 * KWH)], GridAccount(), SC)
    sales = [t for t in s.transactions if t.leg is Leg.SALE]
    deliveries = [t for t in s.transactions if t.leg is Leg.DELIVERY]
    assert sum(t.amount for t in sales) == 3 * KWH
    assert all(t.counterparty == GRID for t in sales)
    assert sum(t.amount for t in deliveries) == 2 * KWH
    assert all(t.actor == GRID and t.counterparty == 3 for t in deliveries)
    assert s.imports == 0
    assert s.grid.energy_buffer == 1 * KWH


def test_settle_empty():
    s = contract.settle([], [], GridAccount(), SC)
    assert s.transactions == []
    assert s.grid.energy_buffer == 0


def test_settle_import_when_no_surplus():
    s = contract.settle([], [_request(4, 5 * KWH)], GridAccount(), SC)
    assert [(t.leg, t.amount) for t in s.transactions] == [(Leg.IMPORT, 5 * KWH)]
    assert s.imports == 5 * KWH
    assert s.grid.energy_buffer == 0


def test_settle_partial_import_splits_request():
    s = contract.settle([_offer(1, 3 * KWH)], [_request(2, 5 * KWH)], GridAccount(), SC)
    legs = {t.leg: t.amount for t in s.transactions if t.actor == GRID}
    assert legs == {Leg.DELIVERY: 3 * KWH, Leg.IMPORT: 2 * KWH}


def test_settle_uses_carried_buffer_first():
    s = contract.settle([], [_request(2, 4 * KWH)], GridAccount(energy_buffer=3 * KWH), SC)
    assert s.imports == 1 * KWH
    assert s.grid.energy_buffer == 0
    assert s.buffer_delta == -3 * KWH


def test_settle_cash_flows():
    s = contract.settle([_offer(1, 3 * KWH)], [_request(2, 2 * KWH)], GridAccount(), SC)
    # micro-currency: Wh x milli-currency/kWh
    assert s.grid.cash[1] == 3 * KWH * 20000
    assert s.grid.cash[2] == -2 * KWH * 20000
    assert s.grid.cash[GRID] == (-3 + 2) * KWH * 20000
    assert sum(s.grid.cash.values()) == 0


def test_settle_rejects_duplicates():
    with pytest.raises(LedgerError):
        contract.settle([_offer(1, 5), _offer(1, 5)], [], GridAccount(), SC)


def test_settle_rejects_mixed_periods():
    with pytest.raises(ContractViolation):
        contract.settle([_offer(1, 5, period=1)], [_request(2, 5, period=2)], GridAccount(), SC)


def test_settle_order_independent():
    offers = [_offer(h, h * 100) for h in (5, 2, 9)]
    requests = [_request(h, h * 150) for h in (7, 1, 4)]
    a = contract.settle(offers, requests, GridAccount(), SC)
    b = contract.settle(offers[::-1], requests[::-1], GridAccount(), SC)
    assert a.transactions == b.transactions
    ids = [t.tx_id for t in a.transactions]
    assert ids == sorted(ids)


def _brute_force(offers_wh, requests_wh, buffer0):
    """Serve requests in tx_id order from pool then import, one Wh at a time."""
    pool = buffer0 + sum(offers_wh)
    imports = 0
    for need in requests_wh:
        for _ in range(need):
            if pool:
                pool -= 1
            else:
                imports += 1
    return pool, imports


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(1, 300), max_size=6),
    st.lists(st.integers(1, 300), max_size=6),
    st.integers(0, 500),
)
def test_settle_conservation(offers_wh, requests_wh, buffer0):
    offers = [_offer(i + 1, w) for i, w in enumerate(offers_wh)]
    requests = [_request(100 + i, w) for i, w in enumerate(requests_wh)]
    s = contract.settle(offers, requests, GridAccount(energy_buffer=buffer0), SC)
    pool, imports = _brute_force(offers_wh, requests_wh, buffer0)
    assert s.grid.energy_buffer == pool >= 0
    assert s.imports == imports
    assert s.sales == sum(offers_wh)
    assert s.purchases == sum(requests_wh)
    assert s.sales == s.buffer_delta + s.purchases - s.imports
    assert contract.ledger_balance(s.transactions) == (s.sales, s.purchases, s.imports)


def test_surplus_alert_from_survey_totals():
    a = contract.surplus_alert(1, 3867502 * KWH, 354144 * KWH)
    assert a is not None
    assert a.surplus_kwh == 3513358
    assert a.period == 1


@pytest.mark.parametrize("produced, consumed", [(5, 5), (4, 9)])
def test_no_alert_without_surplus(produced, consumed):
    assert contract.surplus_alert(1, produced, consumed) is None


def test_run_period_default_scenario_consistent():
    sc = grid.build_scenario()
    readings = grid.generate_readings(sc, 6)
    out = contract.run_period(6, readings, GridAccount(), SmartContract.at_price(sc.unit_price))
    by_key = {(r.house_id, r.period): r for r in readings}
    assert contract.check_roles(out.transactions, by_key) == []
    n_traders = sum(1 for r in readings if r.produced != r.consumed)
    assert sum(1 for t in out.transactions if t.kind is not Kind.SETTLEMENT) == n_traders
    assert out.alert is not None


def test_check_roles_flags_forged_offer():
    r = MeterReading(1, 1, 10, 5)
    forged = chain.EnergyTransaction(chain.make_tx_id(1, Kind.OFFER, 1), Kind.OFFER, 1, GRID, 5, 1, 1)
    assert contract.check_roles([forged], {(1, 1): r})


def test_run_period_is_deterministic():
    sc = grid.build_scenario()
    readings = grid.generate_readings(sc, 2)
    shuffled = list(readings)
    np.random.default_rng(0).shuffle(shuffled)
    a = contract.run_period(2, readings, GridAccount(), SC)
    b = contract.run_period(2, shuffled, GridAccount(), SC)
    assert a.transactions == b.transactions


def test_balanced_house_emits_nothing():
    out = contract.run_period(1, [MeterReading(1, 1, 50, 50)], GridAccount(), SC)
    assert out.transactions == []
