"""Report tables derived from readings and reference data.

Sums are taken in integer watt-hours and converted to kWh last, so every
totals row is exactly the sum of the rows above it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

from . import reference
from .grid import MONTHS, MeterReading, Scenario, wh_to_kwh


class ReportError(ValueError):
    pass


def consumption_share(consumed: float, potential: float, digits: int | None = 0) -> float:
    """Percent of ``potential`` that was consumed, half-up rounded to ``digits`` places.

    ``digits=None`` returns the unrounded percentage.
    """
    if potential <= 0:
        raise ReportError("share undefined for non-positive potential")
    if consumed < 0:
        raise ReportError("consumption must be >= 0")
    pct = Decimal(consumed) * 100 / Decimal(potential)
    if digits is None:
        return float(pct)
    return float(pct.quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_UP))


def format_share(value: float, digits: int) -> str:
    return f"{value:.{digits}f}%"


def yearly_potential(monthly):
    return 12 * monthly


def co2_reduction(energy_kwh: float, factor: float = reference.CO2_FACTOR_T_PER_KWH) -> float:
    if energy_kwh < 0 or factor < 0:
        raise ReportError("energy and factor must be >= 0")
    return energy_kwh * factor


@dataclass(frozen=True)
class ShareRow:
    client: str
    consumption_kwh: float
    potential_kwh: float
    share: float
    share_text: str


@dataclass(frozen=True)
class ConsumptionShareReport:
    rows: tuple[ShareRow, ...]
    total: ShareRow


def share_report(
    per_group_wh: Mapping[str, tuple[int, int]],
    *,
    group_digits: int = 0,
    total_digits: int = 1,
    divisor: int = 1,
) -> ConsumptionShareReport:
    """Build the consumption-share table.

    ``per_group_wh`` maps client id to (consumed_wh, potential_wh). Groups
    with no potential are skipped. ``divisor`` turns annual sums into
    monthly means.
    """
    rows = []
    tot_c = tot_p = 0
    for gid, (cons, pot) in per_group_wh.items():
        if pot <= 0:
            continue
        tot_c += cons
        tot_p += pot
        share = consumption_share(cons, pot, group_digits)
        rows.append(
            ShareRow(gid, wh_to_kwh(cons) / divisor, wh_to_kwh(pot) / divisor, share,
                     format_share(share, group_digits))
        )
    if tot_p <= 0:
        raise ReportError("no group has positive potential")
    share = consumption_share(tot_c, tot_p, total_digits)
    total = ShareRow("Total", wh_to_kwh(tot_c) / divisor, wh_to_kwh(tot_p) / divisor, share,
                     format_share(share, total_digits))
    return ConsumptionShareReport(tuple(rows), total)


@dataclass(frozen=True)
class ProfitRow:
    month: int
    production_wh: int
    consumption_wh: int
    gain_wh: int
    profit: float

    @property
    def production_kwh(self) -> float:
        return wh_to_kwh(self.production_wh)

    @property
    def consumption_kwh(self) -> float:
        return wh_to_kwh(self.consumption_wh)

    @property
    def gain_kwh(self) -> float:
        return wh_to_kwh(self.gain_wh)


@dataclass(frozen=True)
class ProfitSeries:
    rows: tuple[ProfitRow, ...]
    unit_price: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["month", "production_kwh", "consumption_kwh", "gain_kwh", "profit"])
        for r in self.rows:
            w.writerow([r.month, f"{r.production_kwh:.3f}", f"{r.consumption_kwh:.3f}",
                        f"{r.gain_kwh:.3f}", f"{r.profit:.3f}"])
        return buf.getvalue()


def profit_series(
    monthly_totals: Mapping[int, tuple[int, int]],
    unit_price: float,
    months: Sequence[int] = tuple(range(1, MONTHS + 1)),
) -> ProfitSeries:
    """Per-month gain and profit from (production_wh, consumption_wh) totals."""
    missing = [m for m in months if m not in monthly_totals]
    if missing:
        raise ReportError(f"missing months: {missing}")
    rows = []
    for m in months:
        prod, cons = monthly_totals[m]
        gain = prod - cons
        rows.append(ProfitRow(m, prod, cons, gain, wh_to_kwh(gain) * unit_price))
    return ProfitSeries(tuple(rows), unit_price)


@dataclass(frozen=True)
class CO2Report:
    energy_kwh: float
    factor: float
    reduction_t: float
    note: str = ""


def co2_report(energy_kwh: float, factor: float = reference.CO2_FACTOR_T_PER_KWH) -> CO2Report:
    note = ""
    if energy_kwh == reference.PRINTED_CO2_ENERGY_KWH:
        implied = reference.PRINTED_CO2_TONNES / energy_kwh
        note = (
            f"published figure {reference.PRINTED_CO2_TONNES} t implies a factor of "
            f"{implied:.1e} t/kWh, not the stated {factor:.1e}; this report uses the stated factor"
        )
    return CO2Report(energy_kwh, factor, co2_reduction(energy_kwh, factor), note)


# ---- region reports from readings ---------------------------------------


def monthly_totals(readings: Sequence[MeterReading]) -> dict[int, tuple[int, int]]:
    out: dict[int, list[int]] = {}
    for r in readings:
        acc = out.setdefault(r.period, [0, 0])
        acc[0] += r.produced
        acc[1] += r.consumed
    return {m: (p, c) for m, (p, c) in sorted(out.items())}


def group_totals(scenario: Scenario, readings: Sequence[MeterReading]) -> dict[str, tuple[int, int]]:
    """(consumed_wh, produced_wh) per group, in scenario group order."""
    acc = {g.id: [0, 0] for g in scenario.groups}
    for r in readings:
        g = scenario.house(r.house_id).group
        acc[g][0] += r.consumed
        acc[g][1] += r.produced
    return {g: (c, p) for g, (c, p) in acc.items()}


def run_report(
    scenario: Scenario,
    readings: Sequence[MeterReading],
    *,
    alerts: Sequence = (),
    forecast: Mapping | None = None,
    ledger_head: str = "",
) -> dict:
    """Machine-readable report for a finished run (pure function of its inputs)."""
    months = sorted({r.period for r in readings})
    totals = monthly_totals(readings)
    shares = share_report(group_totals(scenario, readings), divisor=len(months))
    profit = profit_series(totals, scenario.unit_price, months)
    annual_prod = sum(p for p, _ in totals.values())
    co2 = co2_report(wh_to_kwh(annual_prod))
    return {
        "months": months,
        "ledger_head": ledger_head,
        "consumption_share": {
            "rows": [asdict(r) for r in shares.rows],
            "total": asdict(shares.total),
        },
        "profit": [
            {"month": r.month, "production_kwh": r.production_kwh, "consumption_kwh": r.consumption_kwh,
             "gain_kwh": r.gain_kwh, "profit": r.profit}
            for r in profit.rows
        ],
        "co2": asdict(co2),
        "alerts": [{"period": a.period, "surplus_kwh": a.surplus_kwh} for a in alerts],
        "forecast": dict(forecast or {}),
    }


# ---- reference tables ----------------------------------------------------


def table4() -> dict:
    rows = [
        {"client": r.client, "house_size": r.house_size, "roof_area_m2": r.roof_area_m2,
         "monthly_kwh": r.monthly_kwh, "yearly_kwh": yearly_potential(r.monthly_kwh)}
        for r in reference.TABLE4_ROWS
    ]
    total = {
        "client": "Total",
        "roof_area_m2": sum(r["roof_area_m2"] for r in rows),
        "monthly_kwh": sum(r["monthly_kwh"] for r in rows),
        "yearly_kwh": sum(r["yearly_kwh"] for r in rows),
    }
    return {"rows": rows, "total": total}


def table5() -> dict:
    rows = [
        {"client": r.client, "house_size_m2": r.house_size_m2, "consumption_kwh": r.consumption_kwh,
         "potential_kwh": r.potential_kwh, "surplus_kwh": r.potential_kwh - r.consumption_kwh}
        for r in reference.TABLE5_ROWS
    ]
    return {"rows": rows}


def table6(group_digits: int = 0, total_digits: int = 1) -> dict:
    rep = share_report(
        {r.client: (r.consumption_kwh * 1000, r.potential_kwh * 1000) for r in reference.TABLE6_ROWS},
        group_digits=group_digits,
        total_digits=total_digits,
    )
    return {"rows": [asdict(r) for r in rep.rows], "total": asdict(rep.total)}


@dataclass(frozen=True)
class Check:
    table: str
    item: str
    published: str
    computed: str
    informational: bool = False

    @property
    def match(self) -> bool:
        return self.published == self.computed


def survey_check() -> list[Check]:
    """Recompute the bundled tables and compare with the printed values.

    Informational checks compare two tables with each other; they are
    known to disagree in the source and do not count as failures.
    """
    checks = []
    t4 = table4()
    for printed, row in zip(reference.TABLE4_ROWS, t4["rows"]):
        checks.append(Check("table4", f"{row['client']} yearly", str(printed.yearly_kwh), str(row["yearly_kwh"])))
    tot = reference.TABLE4_TOTAL
    checks.append(Check("table4", "total monthly", str(tot.monthly_kwh), str(t4["total"]["monthly_kwh"])))
    checks.append(Check("table4", "total yearly", str(tot.yearly_kwh), str(t4["total"]["yearly_kwh"])))
    checks.append(Check("table4", "total roof area", str(tot.roof_area_m2), str(t4["total"]["roof_area_m2"])))

    t6 = table6()
    for printed, row in zip(reference.TABLE6_ROWS, t6["rows"]):
        checks.append(Check("table6", f"{row['client']} share", printed.printed_share, row["share_text"]))
    tot6 = reference.TABLE6_TOTAL
    checks.append(Check("table6", "total share", tot6.printed_share,
                        format_share(consumption_share(tot6.consumption_kwh, tot6.potential_kwh, 1), 1)))
    checks.append(Check("table6", "total consumption (column sum)", str(tot6.consumption_kwh),
                        str(sum(r.consumption_kwh for r in reference.TABLE6_ROWS))))
    checks.append(Check("table6", "total potential (column sum)", str(tot6.potential_kwh),
                        str(sum(r.potential_kwh for r in reference.TABLE6_ROWS))))

    co2 = co2_report(reference.PRINTED_CO2_ENERGY_KWH)
    checks.append(Check("co2", "reduction (t)", f"{reference.PRINTED_CO2_TONNES:.4f}", f"{co2.reduction_t:.4f}"))

    t4_monthly = {r.client: r.monthly_kwh for r in reference.TABLE4_ROWS}
    for r in reference.TABLE5_ROWS:
        checks.append(Check(
            "table5 vs table4", f"{r.client} houses x per-house potential",
            str(t4_monthly[r.client]), str(reference.HOUSE_COUNTS[r.client] * r.potential_kwh), True,
        ))
    checks.append(Check("table6 vs table4", "monthly potential total", str(tot.monthly_kwh),
                        str(tot6.potential_kwh), True))
    return checks


# ---- rendering -----------------------------------------------------------


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def render_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(c.rjust(w) if n and _numeric(c) else c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _numeric(text: str) -> bool:
    return text.replace(",", "").replace(".", "").replace("%", "").replace("-", "").isdigit()


def render_run_text(report: dict) -> str:
    parts = ["Consumption share (monthly means)\n"]
    cs = report["consumption_share"]
    parts.append(render_table(
        ["client", "consumption_kwh", "potential_kwh", "share"],
        [[r["client"], f"{r['consumption_kwh']:,.3f}", f"{r['potential_kwh']:,.3f}", r["share_text"]]
         for r in [*cs["rows"], cs["total"]]],
    ))
    parts.append("\nProduction vs consumption\n")
    parts.append(render_table(
        ["month", "production_kwh", "consumption_kwh", "gain_kwh", "profit"],
        [[r["month"], f"{r['production_kwh']:,.3f}", f"{r['consumption_kwh']:,.3f}",
          f"{r['gain_kwh']:,.3f}", f"{r['profit']:,.3f}"] for r in report["profit"]],
    ))
    co2 = report["co2"]
    parts.append(f"\nCO2 reduction: {co2['energy_kwh']:,.3f} kWh x {co2['factor']:.1e} t/kWh = "
                 f"{co2['reduction_t']:,.6f} t\n")
    if co2["note"]:
        parts.append(f"  note: {co2['note']}\n")
    if report["forecast"]:
        parts.append("\nNext-year forecast (kWh)\n")
        fc = report["forecast"]
        parts.append(render_table(
            ["month", "demand_kwh", "production_kwh"],
            [[m, f"{d:,.3f}", f"{p:,.3f}"] for m, d, p in zip(range(1, 13), fc["demand_kwh"], fc["production_kwh"])],
        ))
    parts.append(f"\nSurplus alerts: {len(report['alerts'])}\n")
    parts.append(f"Ledger head: {report['ledger_head']}\n")
    return "".join(parts)


def render_table4_text(t4: dict) -> str:
    rows = [[r["client"], r["house_size"], r["roof_area_m2"], f"{r['monthly_kwh']:,}", f"{r['yearly_kwh']:,}"]
            for r in t4["rows"]]
    tot = t4["total"]
    rows.append(["Total", "", tot["roof_area_m2"], f"{tot['monthly_kwh']:,}", f"{tot['yearly_kwh']:,}"])
    return render_table(["client", "house_size_m2", "roof_area_m2", "monthly_kwh", "yearly_kwh"], rows)


def render_table5_text(t5: dict) -> str:
    return render_table(
        ["client", "house_size_m2", "consumption_kwh", "potential_kwh", "surplus_kwh"],
        [[r["client"], r["house_size_m2"], r["consumption_kwh"], r["potential_kwh"], r["surplus_kwh"]]
         for r in t5["rows"]],
    )


def render_table6_text(t6: dict) -> str:
    return render_table(
        ["client", "consumption_kwh", "potential_kwh", "share"],
        [[r["client"], f"{r['consumption_kwh']:,.0f}", f"{r['potential_kwh']:,.0f}", r["share_text"]]
         for r in [*t6["rows"], t6["total"]]],
    )


def render_checks_text(checks: Sequence[Check]) -> str:
    rows = []
    for c in checks:
        status = "match" if c.match else ("differs (info)" if c.informational else "MISMATCH")
        rows.append([c.table, c.item, c.published, c.computed, status])
    return render_table(["table", "item", "published", "computed", "status"], rows)


def rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
