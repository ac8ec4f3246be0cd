import json

import numpy as np
import pytest

from lpsharpen.base_measure import EmpiricalCounts
from lpsharpen.cli import main
from lpsharpen.io import (
    InputError,
    canonical,
    emit_report,
    fixture_path,
    load_fixture,
    parse_counts,
    write_counts,
)


def test_fixture_sizes():
    assert load_fixture("gambler_die.csv").n == 60
    r = load_fixture("rutherford.csv")
    assert r.n == 2608 and r.values.size == 14
    assert load_fixture("earthquakes.txt").n == 107


def test_parse_samples_and_duplicates(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("3\n1\n3\n\n# comment\n2\n")
    e = parse_counts(p)
    assert e.values.tolist() == [1, 2, 3] and e.counts.tolist() == [1, 1, 2]
    q = tmp_path / "c.csv"
    q.write_text("value,count\n1,2\n2,5\n1,3\n")
    e = parse_counts(q)
    assert e.counts.tolist() == [5, 5]


@pytest.mark.parametrize(
    "text,line",
    [("value,count\n1,2\n2,x\n", 3), ("value,count\n1,-1\n", 2), ("value,count\n1,2,3\n", 2), ("1\n2 3\n", 2)],
)
def test_malformed_rows_report_line(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError) as exc:
        parse_counts(p)
    assert exc.value.line == line


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("\n")
    with pytest.raises(InputError, match="empty"):
        parse_counts(p)


def test_roundtrip_counts(tmp_path):
    e = EmpiricalCounts(np.array([0, 3, 7]), np.array([4, 0, 2]))
    write_counts(e, tmp_path / "o.csv")
    f = parse_counts(tmp_path / "o.csv")
    assert dict(zip(f.values.tolist(), f.counts.tolist())) == {0: 4, 3: 0, 7: 2}


def test_canonical_rounding():
    assert canonical(np.float64(1 / 3)) == 0.333333333333
    assert canonical(float("inf")) == "inf"


def test_emit_report_deterministic(tmp_path):
    rep = {"method": "x", "statistic": np.float64(2 / 3), "df": 1, "p_value": 0.5, "coefficients": []}
    emit_report(rep, "json", tmp_path / "a.json", {"k": 1}, seed=3)
    emit_report(rep, "json", tmp_path / "b.json", {"k": 1}, seed=3)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    d = json.loads((tmp_path / "a.json").read_text())
    assert d["meta"]["provenance"]["seed"] == 3


def test_cli_usage_and_runtime_errors(tmp_path, capsys):
    assert main(["bogus"]) == 2
    assert main(["gof", "--data", str(tmp_path / "missing.csv"), "--family", "poisson"]) == 1
    assert main(["gof", "--data", str(fixture_path("rutherford.csv"))]) == 2


def test_cli_pipeline_rutherford(tmp_path):
    out = tmp_path / "r.json"
    assert main(["pipeline", "--data", str(fixture_path("rutherford.csv")), "--family", "poisson",
                 "--out", str(out), "--plot"]) == 0
    d = json.loads(out.read_text())
    assert d["meta"]["active"] == [2, 3]
    lp = {c["order"]: c["lp"] for c in d["coefficients"]}
    assert lp[2] < 0 and lp[3] < 0
    assert d["statistic"] == pytest.approx(6.82, abs=0.15)
    assert (tmp_path / "r_density.png").exists()
    assert (tmp_path / "r_pmf.png").exists()


def test_cli_pipeline_spiegel_accepted(tmp_path):
    out = tmp_path / "s.json"
    assert main(["pipeline", "--data", str(fixture_path("spiegel.csv")), "--family", "binomial",
                 "--trials", "5", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["meta"]["decision"] == "model accepted"
    assert d["meta"]["null"]["params"]["prob"] == pytest.approx(0.4625)


def test_cli_gof_bootstrap_seed_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LP_SHARPEN_SEED", "17")
    args = ["gof", "--data", str(fixture_path("rutherford.csv")), "--family", "poisson", "--boot", "99"]
    assert main(args + ["--out", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.json")]) == 0
    a, b = (tmp_path / "a.json").read_bytes(), (tmp_path / "b.json").read_bytes()
    # only the echoed output path differs
    da, db = json.loads(a), json.loads(b)
    assert da["meta"]["bootstrap"] == db["meta"]["bootstrap"]
    assert da["meta"]["provenance"]["seed"] == 17
    assert main(args + ["--out", str(tmp_path / "a2.json")]) == 0
    assert json.loads((tmp_path / "a2.json").read_text())["statistic"] == da["statistic"]


def test_cli_rerun_same_path_identical(tmp_path):
    out = tmp_path / "f.json"
    args = ["fit", "--data", str(fixture_path("gambler_die.csv")), "--family", "discrete_uniform",
            "--param", "k=6", "--form", "maxent", "--out", str(out), "--curve", str(tmp_path / "d.csv")]
    assert main(args) == 0
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first
    rows = [ln for ln in (tmp_path / "d.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "u,d" and rows[1].startswith("0,") and rows[-1].startswith("1,")


def test_cli_basis_and_simulate(tmp_path):
    assert main(["basis", "--family", "poisson", "--param", "lam=1", "--order", "3",
                 "--out", str(tmp_path / "b.csv")]) == 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"k_list": [150], "n": 100, "B": 3}))
    assert main(["simulate", "card", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "c.csv")]) == 0
    cfg.write_text(json.dumps({"k": 50, "n_grid": [50], "B_null": 50, "B_alt": 50,
                               "alternative": {"kind": "step", "params": {"alpha": 0.5}}}))
    assert main(["simulate", "power", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "p.csv")]) == 0
    assert "lpgof" in (tmp_path / "p.csv").read_text()


def test_cli_dss(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    rng = np.random.default_rng(0)
    for i in range(4):
        c = rng.multinomial(100, np.full(20, 1 / 20))
        (src / f"s{i}.csv").write_text("value,count\n" + "".join(f"{v},{n}\n" for v, n in zip(range(1, 21), c)))
    assert main(["dss", "--sources", str(src), "--family", "discrete_uniform", "--param", "k=20", "--m", "4",
                 "--out", str(tmp_path / "d.csv")]) == 0
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[1] == "source,coord1,coord2,discovery_index" and len(lines) == 6


def test_cli_output_format_follows_suffix(tmp_path):
    base = ["basis", "--family", "poisson", "--param", "lam=2", "--order", "3", "--out"]
    assert main(base + [str(tmp_path / "b.csv")]) == 0
    assert main(base + [str(tmp_path / "b.json")]) == 0
    rec = json.loads((tmp_path / "b.json").read_text())
    assert rec["header"][:3] == ["x", "pmf", "cdf"]
    csv_rows = (tmp_path / "b.csv").read_text().splitlines()[2:]
    assert len(rec["rows"]) == len(csv_rows)
