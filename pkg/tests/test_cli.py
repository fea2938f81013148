import json
from collections import Counter

import pytest

from gridfed import grid, reference
from gridfed.cli import main
from gridfed.simulate import RunConfig, SimulationError, simulate

OUTPUTS = {
    "ledger.jsonl", "readings.csv", "report.json", "report.txt", "profit.csv",
    "models.json", "training_demand.jsonl", "training_production.jsonl",
}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    assert main(["simulate", "--out", str(out), "--seed", "42"]) == 0
    return out


def _blocks(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_simulate_writes_all_outputs(run_dir):
    assert {p.name for p in run_dir.iterdir()} == OUTPUTS


def test_default_run_has_genesis_plus_twelve_blocks(run_dir):
    blocks = _blocks(run_dir / "ledger.jsonl")
    assert len(blocks) == 13
    assert [b["index"] for b in blocks] == list(range(13))
    assert blocks[0]["transactions"] == []


def test_simulate_twice_is_byte_identical(run_dir, tmp_path):
    again = tmp_path / "again"
    assert main(["simulate", "--out", str(again), "--seed", "42"]) == 0
    for name in OUTPUTS:
        assert (again / name).read_bytes() == (run_dir / name).read_bytes(), name


def test_different_seed_changes_ledger(run_dir, tmp_path):
    other = tmp_path / "other"
    assert main(["simulate", "--out", str(other), "--seed", "7", "--months", "2"]) == 0
    assert _blocks(other / "ledger.jsonl")[1] != _blocks(run_dir / "ledger.jsonl")[1]


def test_single_month_flat_profiles_match_table5(tmp_path):
    cfg = grid.default_config().replace(
        noise_amplitude=0.0, irradiance_profile=[1.0] * 12, consumption_profile=[1.0] * 12
    )
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg.to_dict()))
    out = tmp_path / "one"
    assert main(["simulate", "--config", str(path), "--out", str(out), "--months", "1"]) == 0
    blocks = _blocks(out / "ledger.jsonl")
    assert len(blocks) == 2
    offers = [t for t in blocks[1]["transactions"] if t["kind"] == "offer"]
    assert not [t for t in blocks[1]["transactions"] if t["kind"] == "request"]
    sc = grid.build_scenario(cfg)
    expected = {r.client: (r.potential_kwh - r.consumption_kwh) * 1000 for r in reference.TABLE5_ROWS}
    expected["E"] = 9544167
    by_group = Counter()
    for t in offers:
        group = sc.house(t["actor"]).group
        assert t["amount_wh"] == expected[group]
        by_group[group] += 1
    assert dict(by_group) == reference.HOUSE_COUNTS
    # training needs at least two months
    assert not (out / "models.json").exists()


def test_verify_valid(run_dir, capsys):
    assert main(["verify", str(run_dir / "ledger.jsonl")]) == 0
    assert "valid" in capsys.readouterr().out


def test_verify_detects_edited_amount(run_dir, tmp_path, capsys):
    lines = (run_dir / "ledger.jsonl").read_text().splitlines()
    block = json.loads(lines[5])
    block["transactions"][0]["amount_wh"] += 1
    lines[5] = json.dumps(block, sort_keys=True, separators=(",", ":"))
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(bad)]) == 1
    assert "block 5" in capsys.readouterr().err


def test_verify_detects_corrupted_hash_byte(run_dir, tmp_path, capsys):
    lines = (run_dir / "ledger.jsonl").read_text().splitlines()
    block = json.loads(lines[3])
    h = block["hash"]
    block["hash"] = ("0" if h[0] != "0" else "1") + h[1:]
    lines[3] = json.dumps(block, sort_keys=True, separators=(",", ":"))
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(bad)]) == 1
    assert "block 3" in capsys.readouterr().err


@pytest.mark.parametrize("content", ["", "garbage\n"])
def test_verify_parse_error_exit_code(tmp_path, content, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(content)
    assert main(["verify", str(bad)]) == 2
    assert capsys.readouterr().err


def test_report_table4(capsys):
    assert main(["report", "table4"]) == 0
    out = capsys.readouterr().out
    assert "3,099,044" in out and "37,188,528" in out
    assert "8,618,700" in out


def test_report_table6(capsys):
    assert main(["report", "table6"]) == 0
    out = capsys.readouterr().out
    for share in ("14%", "13%", "16%", "3%", "9.2%"):
        assert share in out


def test_report_survey_check_mentions_co2_note(capsys):
    assert main(["report", "survey-check"]) == 0
    out = capsys.readouterr().out
    assert "MISMATCH" in out and "2320.5012" in out


def test_report_unknown_table_lists_names(capsys):
    assert main(["report", "nonsense"]) == 1
    err = capsys.readouterr().err
    assert "table4" in err and "survey-check" in err


def test_report_run_table_writes_file(run_dir, capsys):
    before = (run_dir / "profit.csv").read_bytes()
    assert main(["report", "profit", "--out", str(run_dir), "--format", "csv"]) == 0
    text = (run_dir / "profit.csv").read_text()
    assert text.encode() == before
    assert text.splitlines()[0] == "month,production_kwh,consumption_kwh,gain_kwh,profit"
    assert len(text.splitlines()) == 13
    assert capsys.readouterr().out == text
    month1 = text.splitlines()[1].split(",")
    assert all(len(v.split(".")[1]) <= 3 for v in month1[1:])


def test_readings_ingest_roundtrip(run_dir, tmp_path):
    out = tmp_path / "ingested"
    rc = main(["simulate", "--out", str(out), "--seed", "42", "--readings", str(run_dir / "readings.csv")])
    assert rc == 0
    assert (out / "ledger.jsonl").read_bytes() == (run_dir / "ledger.jsonl").read_bytes()


def test_training_failure_leaves_no_outputs(tmp_path):
    cfg_path = tmp_path / "fed.json"
    cfg_path.write_text(json.dumps({"learning_rate": 1e6}))
    out = tmp_path / "fail"
    assert main(["simulate", "--out", str(out), "--fed-config", str(cfg_path), "--months", "3"]) == 1
    assert not out.exists() or not any(out.iterdir())
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".fail")]


def test_training_failure_is_phase_tagged(tmp_path):
    from gridfed.fedlearn import FedConfig

    with pytest.raises(SimulationError) as exc:
        simulate(RunConfig(out_dir=tmp_path / "x", fed=FedConfig(learning_rate=1e6), months=2))
    assert exc.value.phase == "training"


def test_bad_config_rejected(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "[config]" in capsys.readouterr().err


def test_months_out_of_range(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "o"), "--months", "0"]) == 1
