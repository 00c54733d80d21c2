import csv
import dataclasses
import random

import pytest

from aggsim.cli import main
from aggsim.core import ConfigError
from aggsim.experiments import (
    CURVES_HEADER,
    SUMMARY_HEADER,
    ExperimentConfig,
    build_crash_schedule,
    derive_seed,
    parse_config,
    parse_crash_spec,
    run_experiment,
    run_trials,
    write_results,
)

SMALL = dict(n=60, avg_degree=4.0, trials=3, budget=40, eps=[0.1, 0.01])


def test_config_file_with_override():
    cfg = parse_config("protocol = ppow\nloss_prob = 0.0  # no loss\n", {"loss_prob": "0.05"})
    assert cfg.protocol == "ppow"
    assert cfg.loss_prob == 0.05


def test_unknown_protocol_lists_valid_values():
    with pytest.raises(ConfigError) as err:
        parse_config("protocol = xyz")
    msg = str(err.value)
    assert msg.startswith("protocol")
    for name in ("psp", "ppg", "ppbc", "ppow", "drg"):
        assert name in msg


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert (cfg.n, cfg.avg_degree, cfg.trials, cfg.budget) == (1000, 5.0, 50, 500)
    assert cfg.eps == [1e-1, 1e-2, 1e-3, 1e-4]


@pytest.mark.parametrize(
    "text",
    ["n = ten", "bogus = 1", "loss_prob = 2", "fifo = maybe", "mode = psync", "just words", "crash_spec = round:x"],
)
def test_malformed_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_sum_needs_push_sum():
    with pytest.raises(ConfigError, match="aggregate"):
        parse_config("protocol = ppow\naggregate = sum")


def test_seed_derivation_is_stable():
    assert derive_seed(1, 0) == derive_seed(1, 0)
    assert derive_seed(1, 0) != derive_seed(1, 1)
    assert derive_seed(1, 0) != derive_seed(2, 0)
    assert 0 <= derive_seed(7, 3) < 2**64


def test_crash_spec_grammar():
    assert parse_crash_spec("round:10 nodes:5%; at:3:7") == [("random", 10.0, ("pct", 5.0)), ("at", 3.0, 7)]
    sched = build_crash_schedule("round:10 nodes:10%", 100, random.Random(0))
    assert len(sched) == 10
    assert len({u for _, u in sched}) == 10
    assert all(t == 10 for t, _ in sched)
    # explicit ids are not drawn twice
    sched = build_crash_schedule("at:1:0; round:2 nodes:3", 4, random.Random(0))
    assert sorted(u for _, u in sched) == [0, 1, 2, 3]


def test_write_results_shapes(tmp_path):
    cfg = parse_config("", dict(SMALL, protocol="psp", budget=150))
    results, summary = run_experiment(cfg)
    curves, summ = write_results(cfg, results, summary, tmp_path)
    with curves.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CURVES_HEADER
    assert len(rows) == 1 + cfg.trials * (cfg.budget + 1)
    with summ.open() as fh:
        srows = list(csv.DictReader(fh))
    assert list(srows[0]) == SUMMARY_HEADER
    assert len(srows) == len(cfg.eps)
    assert all(float(r["reach_rate"]) == 1.0 for r in srows)
    # nine significant digits at most
    assert all(v == f"{float(v):.9g}" for v in rows[5][4:9])


def test_unreached_target_reported(tmp_path):
    cfg = parse_config("", dict(SMALL, protocol="ppow", budget=5, eps=[1e-9]))
    results, summary = run_experiment(cfg)
    assert summary[0].reach_rate == 0
    _, summ = write_results(cfg, results, summary, tmp_path)
    row = next(csv.DictReader(summ.open()))
    assert row["mean_time"] == "NOT_REACHED"
    assert row["reach_rate"] == "0"


def test_reach_rate_counts_trials():
    cfg = parse_config("", dict(SMALL, protocol="drg", aggregate="average", trials=4, budget=30, eps=[0.5, 1e-6]))
    _, summary = run_experiment(cfg)
    assert summary[0].reach_rate == 1.0 and summary[0].trials == 4
    assert summary[1].reach_rate == 0.0


@pytest.mark.parametrize("protocol", ["psp", "ppg", "ppbc", "ppow", "drg"])
def test_rerun_is_byte_identical(tmp_path, protocol):
    cfg = parse_config("", dict(SMALL, protocol=protocol, loss_prob=0.05))
    a = write_results(cfg, *run_experiment(cfg), tmp_path / "a")
    b = write_results(cfg, *run_experiment(cfg), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_parallel_matches_serial():
    cfg = parse_config("", dict(SMALL, protocol="ppbc", mode="async", trials=4))
    serial = run_trials(cfg)
    parallel = run_trials(dataclasses.replace(cfg, workers=2))
    assert [r.rows for r in serial] == [r.rows for r in parallel]


def test_crash_run_reports_fewer_nodes():
    cfg = parse_config("", dict(SMALL, protocol="psp", crash_spec="round:10 nodes:10%", trials=1))
    (res,), _ = run_experiment(cfg)
    assert res.rows[9].nodes_alive == res.component_size
    assert res.rows[10].nodes_alive == res.component_size - round(res.component_size / 10)
    assert res.audit.lost[0] > 0


def test_cli_run_and_topology_dump(tmp_path, capsys):
    conf = tmp_path / "exp.conf"
    conf.write_text("protocol = psp\nn = 50\navg_degree = 4\ntrials = 2\nbudget = 20\n")
    topo = tmp_path / "topo.txt"
    code = main(["run", "--config", str(conf), "--protocol", "ppow", "--eps", "0.1,0.01",
                 "--out", str(tmp_path / "out"), "--topology-out", str(topo)])
    assert code == 0
    assert (tmp_path / "out" / "curves.csv").exists()
    summary = list(csv.DictReader((tmp_path / "out" / "summary.csv").open()))
    assert {r["protocol"] for r in summary} == {"ppow"}
    assert topo.read_text().startswith("# n=50 seed=")


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["run", "--protocol", "xyz", "--out", str(tmp_path)]) == 2
    assert "protocol" in capsys.readouterr().err


def test_cli_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.conf")]) != 0


def test_cli_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["run", "--nodes", "30", "--degree", "3", "--trials", "1", "--budget", "3",
                 "--out", str(blocker / "sub")])
    assert code == 1


def test_cli_sweep(capsys):
    code = main(["sweep", "--protocol", "drg", "--nodes", "40", "--degree", "4", "--trials", "1",
                 "--budget", "10", "--eps", "0.5", "--grid", "drg_leader_prob=0.1,0.3"])
    assert code == 0
    out = capsys.readouterr().out
    assert "drg_leader_prob=0.1" in out and "drg_leader_prob=0.3" in out
