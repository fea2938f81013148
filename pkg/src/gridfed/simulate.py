"""End-to-end run: readings -> contract -> ledger -> federated training -> reports."""

from __future__ import annotations

import json
import logging
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
import numpy as np

from . import accounting, chain, contract, fedlearn, grid

log = logging.getLogger(__name__)

FORMATS = ("json", "text", "csv")


class SimulationError(Exception):
    def __init__(self, phase: str, message: str):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase


@dataclass(frozen=True)
class RunConfig:
    out_dir: Path
    scenario_path: Path | None = None
    fed: fedlearn.FedConfig = field(default_factory=fedlearn.FedConfig)
    months: int = grid.MONTHS
    seed: int | None = None
    formats: tuple[str, ...] = FORMATS
    readings_path: Path | None = None

    def __post_init__(self):
        if not 1 <= self.months <= grid.MONTHS:
            raise SimulationError("config", f"months must be in 1..{grid.MONTHS}, got {self.months}")
        for path in (self.scenario_path, self.readings_path):
            if path is not None and not Path(path).exists():
                raise SimulationError("config", f"no such file: {path}")
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise SimulationError("config", f"unknown report formats {sorted(bad)}")


@dataclass
class RunSummary:
    demand_model: fedlearn.ModelState | None
    production_model: fedlearn.ModelState | None
    ledger_head: str
    alerts: list[contract.Alert]
    report_paths: list[Path]
    wall_clock_seconds: float
    simulated_seconds: float
    blocks: int


def load_run_inputs(cfg: RunConfig) -> tuple[grid.ScenarioConfig, fedlearn.FedConfig]:
    """Scenario config plus the optional ``fed`` section from the same file."""
    if cfg.scenario_path is None:
        scen_cfg, fed_raw = grid.default_config(), {}
    else:
        try:
            raw = json.loads(Path(cfg.scenario_path).read_text())
        except json.JSONDecodeError as exc:
            raise grid.ScenarioError("config", f"not valid JSON ({exc})") from None
        scen_cfg, fed_raw = grid.ScenarioConfig.from_dict(raw), raw.get("fed", {})
    if cfg.seed is not None:
        scen_cfg = scen_cfg.replace(seed=cfg.seed)
    fed = fedlearn.FedConfig.from_dict(fed_raw) if fed_raw else cfg.fed
    return scen_cfg, fed


def _ingest(scenario: grid.Scenario, path: Path, months: int) -> dict[int, list[grid.MeterReading]]:
    by_month: dict[int, list[grid.MeterReading]] = {m: [] for m in range(1, months + 1)}
    for r in grid.read_readings_csv(path):
        try:
            scenario.house(r.house_id)
        except KeyError:
            raise ValueError(f"reading for unknown house {r.house_id}") from None
        if r.period in by_month:
            by_month[r.period].append(r)
    empty = [m for m, rs in by_month.items() if not rs]
    if empty:
        raise ValueError(f"no readings for months {empty}")
    return by_month


def _train(scenario, readings_by_month, quantity, fed_cfg, seed, stream):
    groups = [
        g.id for g in scenario.groups
        if (g.monthly_consumption_per_house if quantity == "consumed" else g.monthly_potential_per_house) > 0
    ]
    datasets = fedlearn.build_client_datasets(scenario, readings_by_month, quantity, groups)
    cfg = replace(fed_cfg, total_clients=len(datasets))
    pooled = fedlearn.ClientDataset.pool(datasets)
    design = pooled.design()

    def evaluate(state):
        return fedlearn.mse(state.weights, design, pooled.y)

    run = fedlearn.run_rounds(cfg, datasets, np.random.default_rng([seed, stream]), evaluate=evaluate)

    last = max(readings_by_month)
    forecast = np.zeros(grid.MONTHS)
    for gid in groups:
        houses = {h.id for h in scenario.houses_in(gid)}
        vals = [getattr(r, quantity) for r in readings_by_month[last] if r.house_id in houses]
        per_house = fedlearn.forecast_year(
            run.model, grid.wh_to_kwh(sum(vals) / len(vals)), fedlearn.LAG_SCALE_KWH[quantity]
        )
        forecast += len(houses) * np.array(per_house)
    return run, [round(float(v), 3) for v in forecast]


def _write(stage: Path, name: str, text: str, written: list[str]) -> None:
    (stage / name).write_text(text)
    written.append(name)


def simulate(cfg: RunConfig) -> RunSummary:
    """Run the full pipeline and write every artifact under ``cfg.out_dir``.

    Files are staged in a temporary directory and moved into place only
    after every phase has succeeded.
    """
    started = time.perf_counter()
    phase = "config"
    out_dir = Path(cfg.out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}-", dir=out_dir.parent))
    try:
        scen_cfg, fed_cfg = load_run_inputs(cfg)
        scenario = grid.build_scenario(scen_cfg)

        phase = "readings"
        if cfg.readings_path is not None:
            by_month = _ingest(scenario, Path(cfg.readings_path), cfg.months)
        else:
            by_month = {m: grid.generate_readings(scenario, m) for m in range(1, cfg.months + 1)}

        phase = "ledger"
        ledger = [chain.genesis()]
        account = contract.GridAccount()
        sc = contract.SmartContract.at_price(scenario.unit_price)
        alerts = []
        for month, readings in by_month.items():
            outcome = contract.run_period(month, readings, account, sc)
            s = outcome.settlement
            if s.sales != s.buffer_delta + s.purchases - s.imports:
                raise chain.LedgerError(f"energy not conserved in period {month}")
            ledger = chain.append_block(ledger, outcome.transactions, month)
            account = s.grid
            if outcome.alert is not None:
                alerts.append(outcome.alert)
        report = chain.validate_chain(ledger)
        if not report:
            raise chain.LedgerError(str(report))

        phase = "training"
        written: list[str] = []
        demand_run = production_run = None
        forecast = {}
        if len(by_month) >= 2:
            demand_run, demand_fc = _train(scenario, by_month, "consumed", fed_cfg, scenario.rng_seed, 1)
            production_run, prod_fc = _train(scenario, by_month, "produced", fed_cfg, scenario.rng_seed, 2)
            forecast = {"demand_kwh": demand_fc, "production_kwh": prod_fc}
            for name, run in (("demand", demand_run), ("production", production_run)):
                lines = [json.dumps(rec.to_dict(), sort_keys=True) for rec in run.history]
                _write(stage, f"training_{name}.jsonl", "\n".join(lines) + "\n", written)
            models = {"demand": demand_run.model.to_dict(), "production": production_run.model.to_dict()}
            _write(stage, "models.json", accounting.to_json(models), written)
        else:
            log.warning("fewer than two months simulated; skipping federated training")

        phase = "report"
        all_readings = [r for rs in by_month.values() for r in rs]
        head = ledger[-1].hash.hex()
        chain.dump_jsonl(ledger, stage / "ledger.jsonl")
        written.append("ledger.jsonl")
        with open(stage / "readings.csv", "w", newline="") as fh:
            grid.write_readings_csv(all_readings, fh)
        written.append("readings.csv")
        rep = accounting.run_report(scenario, all_readings, alerts=alerts, forecast=forecast, ledger_head=head)
        if "json" in cfg.formats:
            _write(stage, "report.json", accounting.to_json(rep), written)
        if "text" in cfg.formats:
            _write(stage, "report.txt", accounting.render_run_text(rep), written)
        if "csv" in cfg.formats:
            profit = accounting.profit_series(
                accounting.monthly_totals(all_readings), scenario.unit_price, sorted(by_month)
            )
            _write(stage, "profit.csv", profit.to_csv(), written)

        simulated = sum(
            t.t_global for run in (demand_run, production_run) if run is not None for t in run.timings
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in written:
            os.replace(stage / name, out_dir / name)
    except SimulationError:
        raise
    except (ValueError, KeyError, chain.LedgerError, contract.ContractViolation, OSError) as exc:
        raise SimulationError(phase, str(exc)) from exc
    finally:
        shutil.rmtree(stage, ignore_errors=True)

    return RunSummary(
        demand_model=demand_run.model if demand_run else None,
        production_model=production_run.model if production_run else None,
        ledger_head=head,
        alerts=alerts,
        report_paths=[out_dir / n for n in written],
        wall_clock_seconds=time.perf_counter() - started,
        simulated_seconds=simulated,
        blocks=len(ledger),
    )


def verify(path: str | Path, stderr=None) -> int:
    """0 if the ledger validates, 1 on an integrity violation, 2 if unreadable."""
    stderr = stderr or sys.stderr
    try:
        blocks = chain.load_jsonl(path)
    except (OSError, chain.LedgerError) as exc:
        print(f"cannot parse ledger {path}: {exc}", file=stderr)
        return 2
    report = chain.validate_chain(blocks)
    if report:
        return 0
    print(f"ledger invalid: {report}", file=stderr)
    return 1


REFERENCE_TABLES = ("table4", "table5", "table6", "survey-check")
RUN_TABLES = ("shares", "profit", "co2", "forecast", "alerts")


def report(run_dir: str | Path | None, name: str, fmt: str = "text") -> tuple[str, Path | None]:
    """Render one named table. Returns the text and, when ``run_dir`` is given, the file written."""
    if name not in REFERENCE_TABLES + RUN_TABLES:
        raise ValueError(f"unknown table {name!r}; available: {', '.join(REFERENCE_TABLES + RUN_TABLES)}")
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")

    if name in REFERENCE_TABLES:
        text = _reference_table(name, fmt)
    else:
        if run_dir is None:
            raise ValueError(f"table {name!r} needs a run directory (--out)")
        path = Path(run_dir) / "report.json"
        if not path.exists():
            raise ValueError(f"{path} not found; run simulate with --format json first")
        text = _run_table(json.loads(path.read_text()), name, fmt)

    dest = None
    if run_dir is not None:
        ext = {"json": "json", "text": "txt", "csv": "csv"}[fmt]
        dest = Path(run_dir) / f"{name}.{ext}"
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(text)
    return text, dest


def _reference_table(name: str, fmt: str) -> str:
    if name == "survey-check":
        checks = accounting.survey_check()
        rows = [
            {"table": c.table, "item": c.item, "published": c.published, "computed": c.computed,
             "match": c.match, "informational": c.informational}
            for c in checks
        ]
        if fmt == "json":
            return accounting.to_json(rows)
        if fmt == "csv":
            return accounting.rows_to_csv(rows)
        text = accounting.render_checks_text(checks)
        note = accounting.co2_report(accounting.reference.PRINTED_CO2_ENERGY_KWH).note
        return text + f"\nnote: {note}\n"

    data = {"table4": accounting.table4, "table5": accounting.table5, "table6": accounting.table6}[name]()
    if fmt == "json":
        return accounting.to_json(data)
    if fmt == "csv":
        rows = list(data["rows"]) + ([data["total"]] if "total" in data else [])
        return accounting.rows_to_csv([{k: row.get(k, "") for k in data["rows"][0]} for row in rows])
    render = {
        "table4": accounting.render_table4_text,
        "table5": accounting.render_table5_text,
        "table6": accounting.render_table6_text,
    }[name]
    return render(data)


# report.json is written with sorted keys, so column order is restored here
RUN_COLUMNS = {
    "shares": ("client", "consumption_kwh", "potential_kwh", "share", "share_text"),
    "profit": ("month", "production_kwh", "consumption_kwh", "gain_kwh", "profit"),
    "co2": ("energy_kwh", "factor", "reduction_t", "note"),
    "alerts": ("period", "surplus_kwh"),
}


def _run_table(rep: dict, name: str, fmt: str) -> str:
    if name == "shares":
        rows = [*rep["consumption_share"]["rows"], rep["consumption_share"]["total"]]
    elif name == "profit":
        # same text as the profit.csv written by simulate
        rows = [{k: (f"{v:.3f}" if isinstance(v, float) else v) for k, v in r.items()} for r in rep["profit"]]
    elif name == "co2":
        rows = [rep["co2"]]
    elif name == "alerts":
        rows = rep["alerts"]
    else:
        fc = rep["forecast"]
        if not fc:
            raise ValueError("run has no forecast (fewer than two months simulated)")
        rows = [
            {"month": m, "demand_kwh": d, "production_kwh": p}
            for m, d, p in zip(range(1, grid.MONTHS + 1), fc["demand_kwh"], fc["production_kwh"])
        ]
    if name in RUN_COLUMNS:
        rows = [{k: r[k] for k in RUN_COLUMNS[name]} for r in rows]
    if fmt == "json":
        return accounting.to_json(rows)
    if fmt == "csv":
        return accounting.rows_to_csv(rows)
    if not rows:
        return "(none)\n"
    headers = list(rows[0])
    return accounting.render_table(headers, [[_fmt(r[h]) for h in headers] for r in rows])


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:,.3f}"
    return str(value)
