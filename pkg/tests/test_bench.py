import math

import pytest

from mcrepar.bench import cli, config, svg
from mcrepar.bench.report import ExperimentReport, read_csv
from mcrepar.errors import ConfigError

QUICK = {
    "graph-size": "m_grid = 1, 3, 10, 10000\ng = w^2, w^3\nfamily = normal\n",
    "kl-error": ("sigma_grid = 0.1, 1.0\nm_grid = 10, 100, 1000\nreplications = 8\n"
                 "d_grid = 10, 1000\nd_m = 5\nd_replications = 4\n"),
    "timing": "m_grid = 10, 100\nrepeats = 3\n",
    "train-demo": ("m_kl = 1, 5\nseeds = 0, 1\nepochs = 2\nhidden = 4\nn_train = 40\nn_val = 20\n"
                   "batch_size = 10\nn_predictive = 10\n"),
}


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(tmp_path, command, text, *extra, out="out"):
    path = _cfg(tmp_path, text)
    return cli.main([command, "--config", str(path), "--out", str(tmp_path / out), *extra])


def _data(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


# -- config ------------------------------------------------------------------

def test_parse_defaults_and_values():
    cfg = config.parse_config("# comment\nseed = 7\nm_grid = 1, 2,3  # trailing\n\n", "graph-size")
    assert cfg.seed == 7
    assert cfg["m_grid"] == [1, 2, 3]
    assert cfg["g"] == ["w^2"]


@pytest.mark.parametrize("text,line,fragment", [
    ("seed = 1\nbogus = 3\n", 2, "unknown key"),
    ("seed = 1\nseed = 2\n", 2, "duplicate"),
    ("\n\nm_grid = 1, x\n", 3, "m_grid"),
    ("seed\n", 1, "key = value"),
])
def test_config_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        config.parse_config(text, "graph-size")
    assert info.value.line == line
    assert fragment in str(info.value)


def test_echo_round_trips():
    cfg = config.parse_config("sigma_grid = 0.1, 0.5\nmu = 1.5\n", "kl-error")
    again = config.parse_config("\n".join(cfg.echo()), "kl-error")
    assert again.values == cfg.values


# -- exit codes --------------------------------------------------------------

def test_exit_code_config_error(tmp_path, capsys):
    assert _run(tmp_path, "graph-size", "frobnicate = 1\n") == 2
    assert "line 1" in capsys.readouterr().err
    assert cli.main(["graph-size", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["no-such-command", "--config", "x"]) == 2


def test_exit_code_divergence(tmp_path, capsys):
    text = QUICK["train-demo"].replace("epochs = 2", "epochs = 3") + "lr = 1e300\n"
    assert _run(tmp_path, "train-demo", text) == 3
    assert "divergence" in capsys.readouterr().err


# -- golden headers and rows -------------------------------------------------

GOLDEN = {
    "graph-size": {
        "graph_size.csv": ("method,family,g,m,total_nodes,grad_nodes,param_nodes,interaction_nodes,"
                           "interaction_per_m,value", 2 * 2 * 4),
    },
    "kl-error": {
        "kl_error_sigma_0.1.csv": ("m,replication,error,rmse,grad_nodes,interaction_nodes,wall_time_ns", 24),
        "kl_error_sigma_1.csv": ("m,replication,error,rmse,grad_nodes,interaction_nodes,wall_time_ns", 24),
        "kl_error_size.csv": ("d,m,replication,error,rmse,grad_nodes,interaction_nodes,wall_time_ns", 8),
        "kl_error_summary.csv": ("sweep,sigma,d,m,median_error,rmse,grad_nodes", 8),
    },
    "timing": {
        "timing.csv": ("method,m,repeat,grad_nodes,interaction_nodes,wall_time_ns", 3 * 2 * 3),
        "timing_summary.csv": ("method,m,grad_nodes,interaction_nodes,median_ns", 6),
    },
    "train-demo": {
        "train_report.csv": ("m_kl,seed,epoch,elbo,nll,kl", 2 * 2 * 2),
        "confidence.csv": ("m_kl,seed,threshold,size,accuracy", 2 * 2 * 6),
        "runs.csv": ("m_kl,seed,val_accuracy,size_at_0.9,step_grad_nodes,wall_time_ns", 4),
        "accuracy_table.csv": ("row," + ",".join(f"acc_{t / 10:.1f}" for t in range(5, 11)) + ","
                               + ",".join(f"size_std_{t / 10:.1f}" for t in range(5, 11)), 3),
    },
}

TIMING_COLS = {"wall_time_ns", "median_ns"}


def _non_timing(path):
    _, header, rows = read_csv(path)
    return [[r[c] for c in header if c not in TIMING_COLS] for r in rows]


@pytest.mark.parametrize("command", sorted(GOLDEN))
def test_golden_headers_rows_and_reproducibility(tmp_path, command):
    assert _run(tmp_path, command, QUICK[command], "--seed", "3", out="a") == 0
    assert _run(tmp_path, command, QUICK[command], "--seed", "3", "--no-plots", out="b") == 0
    for name, (header, n_rows) in GOLDEN[command].items():
        a, b = tmp_path / "a" / name, tmp_path / "b" / name
        body = _data(a)
        assert body[0] == header
        assert len(body) - 1 == n_rows
        assert _non_timing(a) == _non_timing(b)
        meta = [ln for ln in a.read_text().splitlines() if ln.startswith("#")]
        assert meta[1] == f"# command: {command}" and meta[2] == "# seed: 3"
        assert b"\r" not in a.read_bytes()
    assert list((tmp_path / "a").glob("*.svg"))
    assert not list((tmp_path / "b").glob("*.svg"))


def test_no_plots_leaves_csv_identical(tmp_path):
    assert _run(tmp_path, "graph-size", QUICK["graph-size"], out="a") == 0
    assert _run(tmp_path, "graph-size", QUICK["graph-size"], "--no-plots", out="b") == 0
    assert (tmp_path / "a" / "graph_size.csv").read_bytes() == (tmp_path / "b" / "graph_size.csv").read_bytes()


def test_seed_override_changes_numbers(tmp_path):
    _run(tmp_path, "kl-error", QUICK["kl-error"], "--seed", "1", out="a")
    _run(tmp_path, "kl-error", QUICK["kl-error"], "--seed", "2", out="b")
    name = "kl_error_sigma_1.csv"
    assert _non_timing(tmp_path / "a" / name) != _non_timing(tmp_path / "b" / name)


# -- command semantics -------------------------------------------------------

def test_graph_size_counts(tmp_path):
    _run(tmp_path, "graph-size", "m_grid = 1, 3, 100, 10000\n")
    _, _, rows = read_csv(tmp_path / "out" / "graph_size.csv")
    direct = [r for r in rows if r["method"] == "direct"]
    repar = [r for r in rows if r["method"] == "repar"]
    assert all(float(r["interaction_per_m"]) == 3.0 for r in direct)
    assert [int(r["interaction_nodes"]) for r in direct if r["m"] == "3"] == [9]
    assert {r["interaction_nodes"] for r in repar} == {"3"}
    assert len({r["grad_nodes"] for r in repar}) == 1


def test_kl_error_trends(tmp_path):
    text = ("sigma_grid = 0.1, 1.0\nm_grid = 100, 1000, 10000\nreplications = 30\n"
            "d_grid = 10, 1000, 100000\nd_m = 10\nd_replications = 10\n")
    assert _run(tmp_path, "kl-error", text) == 0
    _, _, rows = read_csv(tmp_path / "out" / "kl_error_summary.csv")
    for sigma in ("0.1", "1.0"):
        med = [float(r["median_error"]) for r in rows if r["sweep"] == "sigma" and r["sigma"] == sigma]
        assert med == sorted(med, reverse=True)
    small = [float(r["rmse"]) for r in rows if r["sweep"] == "sigma" and r["sigma"] == "0.1"]
    big = [float(r["rmse"]) for r in rows if r["sweep"] == "sigma" and r["sigma"] == "1.0"]
    assert all(s < b for s, b in zip(small, big))
    size = [float(r["median_error"]) for r in rows if r["sweep"] == "size"]
    assert size == sorted(size)


def test_timing_accumulate_not_faster_than_direct(tmp_path):
    assert _run(tmp_path, "timing", "m_grid = 100\nrepeats = 5\n") == 0
    _, _, rows = read_csv(tmp_path / "out" / "timing_summary.csv")
    t = {r["method"]: int(r["median_ns"]) for r in rows}
    assert t["accumulate"] >= t["direct"]


def test_report_csv_format():
    rep = ExperimentReport(["a", "b"], metadata=["x: 1"])
    rep.add(a=1, b=float("nan"))
    rep.add(a=0.1)
    assert rep.to_csv() == "# x: 1\na,b\n1,nan\n0.1,\n"


def test_svg_is_well_formed():
    import xml.etree.ElementTree as ET

    text = svg.line_chart({"s": [(1, 1.0), (10, 0.1)]}, "t", "x", "y", logx=True, logy=True)
    assert ET.fromstring(text).tag.endswith("svg")
    text = svg.bar_chart({"direct": {1: 3.0, 10: 30.0}, "repar": {1: 3.0, 10: math.pi}}, "t", "M", "y")
    assert ET.fromstring(text).tag.endswith("svg")
