import argparse
import json

import pytest

from cfnoma import bench, cli
from cfnoma.bench import ExperimentSpec, ResultRow, regime, rows_to_csv, run_experiment, summarize
from cfnoma.system import SystemConfig


def _spec(tmp_path=None, **kw):
    base = SystemConfig(num_users=3, rng_seed=11)
    kw.setdefault("methods", ("sdma", "bb-noma"))
    kw.setdefault("corrs", (0.6,))
    kw.setdefault("ks", (3,))
    kw.setdefault("realizations", 2)
    return ExperimentSpec(base=base, out_dir=str(tmp_path) if tmp_path else None, **kw)


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown methods"):
        ExperimentSpec(methods=("zf",))
    with pytest.raises(ValueError):
        ExperimentSpec(methods=())
    with pytest.raises(ValueError):
        ExperimentSpec(realizations=0)
    assert ExperimentSpec(methods=(" SDMA ",)).methods == ("sdma",)


@pytest.mark.parametrize("K,expected", [(3, "underloaded"), (4, "underloaded"), (6, "overloaded"),
                                        (8, "overloaded"), (10, "severely-overloaded")])
def test_regime_thresholds(K, expected):
    assert regime(K, 4, 0.9) == ("high", expected)
    assert regime(K, 4, 0.3)[0] == "low"


def test_instance_seeds_are_distinct():
    seeds = {bench.instance_seed(0, c, k, r) for c in range(3) for k in range(3) for r in range(10)}
    assert len(seeds) == 90


def test_rows_and_outputs(tmp_path):
    res = run_experiment(_spec(tmp_path, trace=True, methods=("sdma", "matching-sca")), workers=1)
    assert len(res.rows) == 4
    assert all(r.status == "ok" and r.feasible for r in res.rows)
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"rows.csv", "timing.csv", "summary.json", "config.json", "traces"}
    lines = (tmp_path / "rows.csv").read_text().splitlines()
    assert lines[0] == f"# schema={bench.SCHEMA}"
    assert lines[1].split(",") == list(bench.CSV_HEADER)
    assert json.loads((tmp_path / "config.json").read_text())["realizations"] == 2
    traces = sorted(p.name for p in (tmp_path / "traces").iterdir())
    assert traces == ["trace_matching-sca_K3_c0_r0.csv", "trace_matching-sca_K3_c0_r1.csv"]


def test_csv_is_reproducible(tmp_path):
    a = run_experiment(_spec(tmp_path / "a"), workers=1)
    b = run_experiment(_spec(tmp_path / "b"), workers=2)
    assert (tmp_path / "a" / "rows.csv").read_bytes() == (tmp_path / "b" / "rows.csv").read_bytes()
    assert rows_to_csv(a.rows) == rows_to_csv(b.rows)


def _row(method, value, r=0, K=6, corr=0.9):
    return ResultRow(0, K, 4, corr, r, method, value, 0.0, 0, 1, True, None)


def test_summary_ranks_and_ties():
    rows = []
    for r, (a, b, c) in enumerate([(10.0, 9.95, 5.0), (12.0, 12.1, 6.0), (11.0, 11.0, 5.5)]):
        rows += [_row("matching-sca", a, r), _row("bb-noma", b, r), _row("sdma", c, r)]
    cell = summarize(rows)["cells"][0]
    m = cell["methods"]
    assert m["proposed"]["mean"] == pytest.approx(11.0)
    assert m["matching-sca"]["label"] == m["bb-noma"]["label"] == "Best"
    assert m["sdma"]["label"] == "High"
    assert cell["regime"] == ["high", "overloaded"]
    pair = next(p for p in cell["expected"]["pairs"] if {p["a"], p["b"]} == {"sdma", "bb-noma"})
    assert pair["match"]


def test_summary_counts_errors_and_skips_them():
    rows = [_row("sdma", 3.0), ResultRow(0, 6, 4, 0.9, 1, "sdma", float("nan"), float("nan"),
                                         0, 0, False, None, "error:RuntimeError: x")]
    cell = summarize(rows)["cells"][0]
    assert cell["errors"] == 1
    assert cell["methods"]["sdma"]["n"] == 1


def test_parse_range():
    assert cli.parse_range("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert cli.parse_range("0.6,0.9") == (0.6, 0.9)
    with pytest.raises(argparse.ArgumentTypeError):
        cli.parse_range("1:0:0.1")
    with pytest.raises(argparse.ArgumentTypeError):
        cli.parse_methods("sdma,zf")


def test_cli_run(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"num_antennas": 2, "snr_db": 10, "ks": [2], "methods": ["sdma"]}))
    code = cli.main(["--config", str(cfg), "--sweep-corr", "0.5", "--realizations", "1",
                     "--seed", "3", "--out", str(tmp_path / "out")])
    assert code == 0
    assert "K=2 M=2 corr=0.5" in capsys.readouterr().out
    assert (tmp_path / "out" / "rows.csv").exists()


def test_cli_rejects_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"antennas": 2}))
    with pytest.raises(SystemExit):
        cli.main(["--config", str(cfg)])


def test_cli_exit_code_on_error(monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(bench, "solve_sdma", boom)
    code = cli.main(["--method", "sdma,bb-noma", "--sweep-k", "2", "--realizations", "1"])
    assert code == 2
    assert "solver exploded" in capsys.readouterr().err
