from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirsnet import exact_markov as em
from sirsnet.cli import main
from sirsnet.experiments import (
    FIGURES,
    SIGMA_LIST_FIG2,
    ConfigError,
    ExperimentConfig,
    figure_config,
    load_config,
    reproduce,
    run,
    threshold_cmd,
)
from sirsnet.graph_core import build_graph
from sirsnet.io import read_csv
from sirsnet.params import EpidemicParams


def _cfg(**kw):
    base = dict(graph={"kind": "path", "n": 3}, params=dict(beta=0.1, delta=0.4, gamma=0.2), method="exact",
                t_max=5.0, grid=10)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


rates = st.floats(0.01, 5, allow_nan=False)


@st.composite
def configs(draw):
    method = draw(st.sampled_from(["exact", "simulate", "meanfield", "quotient"]))
    graph = draw(st.sampled_from([{"kind": "path", "n": 3}, {"kind": "complete", "n": 6},
                                  {"kind": "circulant_regular", "n": 8, "degree": 4},
                                  {"kind": "edge_list", "n": 3, "edges": [[0, 1], [1, 2]]}]))
    sweep = draw(st.dictionaries(st.sampled_from(["beta", "gamma", "sigma"]),
                                 st.lists(rates, min_size=1, max_size=3), max_size=2))
    initial = draw(st.sampled_from([{"one_infected": 0}, {"cell_equal": {"I": 0.1, "R": 0.0}}]))
    return ExperimentConfig.from_dict(dict(
        graph=graph, params=dict(beta=draw(rates), delta=draw(rates), gamma=draw(rates),
                                 sigma=draw(st.floats(0, 3)), epsilon=draw(rates)),
        method=method, t_max=draw(st.floats(0.1, 100)), grid=draw(st.integers(1, 500)),
        paths=draw(st.integers(1, 10**6)), base_seed=draw(st.integers(0, 2**64 - 1)), sweep=sweep,
        initial=initial, workers=draw(st.integers(1, 4))))


@settings(max_examples=100, deadline=None)
@given(configs())
def test_config_roundtrip(cfg):
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert ExperimentConfig.from_json(cfg.to_json()).hash() == cfg.hash()


def test_config_errors():
    with pytest.raises(ConfigError, match="sweep axis"):
        _cfg(sweep={"kappa": [1.0]})
    with pytest.raises(ConfigError, match="method"):
        _cfg(method="ode")
    with pytest.raises(ConfigError, match="schema_version"):
        _cfg(schema_version=99)
    with pytest.raises(ConfigError, match="unknown config keys"):
        _cfg(colour="red")
    with pytest.raises(ConfigError, match="params"):
        _cfg(params=dict(beta=-1, delta=0.4, gamma=0.2))
    with pytest.raises(ConfigError, match="not valid JSON"):
        ExperimentConfig.from_json("{")


def test_exact_over_cap_rejected_before_work(tmp_path):
    cfg = _cfg(graph={"kind": "complete", "n": 13})
    with pytest.raises(ConfigError, match="N <= 12"):
        run(cfg, tmp_path / "x")
    assert not (tmp_path / "x").exists()


def test_run_exact_path3(tmp_path):
    m = run(_cfg(t_max=10.0, grid=20), tmp_path)
    assert set(m.files) == {"exact.csv", "exact_report.txt", "config.json"}
    header, data, _ = read_csv(tmp_path / "exact.csv")
    assert header[:3] == ["t", "P_not_final", "P_not_absorbed"] and data.shape == (21, 6)
    report = dict(line.split("=", 1) for line in (tmp_path / "exact_report.txt").read_text().splitlines())
    exact = em.expected_hitting_time_final_set(em.build_generator(build_graph("path", n=3),
                                                                  EpidemicParams(0.1, 0.4, 0.2)), [1, 0, 0])
    assert float(report["expected_hitting_time_final_set"]) == exact
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["files"] == m.files and manifest["seed"] is None


def test_run_meanfield_dfe_constant(tmp_path):
    p = EpidemicParams(0.1, 0.4, 0.2, 0.45)  # below threshold on K10
    r0 = 0.45 / 0.65
    cfg = _cfg(graph={"kind": "complete", "n": 10}, params=p.as_dict(), method="meanfield", t_max=20.0,
               initial={"I": [0.0] * 10, "R": [r0] * 10})
    run(cfg, tmp_path)
    _, data, _ = read_csv(tmp_path / "meanfield.csv")
    assert np.max(np.abs(data[:, 1:] - data[0, 1:])) <= 1e-12
    assert "kind=DFE" in (tmp_path / "equilibrium.txt").read_text()


def test_run_quotient_matches_meanfield(tmp_path):
    p = dict(beta=0.25, delta=0.4, gamma=0.2, sigma=0.3)
    common = dict(graph={"kind": "circulant_regular", "n": 20, "degree": 4}, params=p, t_max=30.0,
                  initial={"cell_equal": {"I": 0.1, "R": 0.05}})
    run(_cfg(method="quotient", **common), tmp_path / "q")
    run(_cfg(method="meanfield", **common), tmp_path / "m")
    _, q, _ = read_csv(tmp_path / "q" / "quotient.csv")
    _, m, _ = read_csv(tmp_path / "m" / "meanfield.csv")
    assert np.max(np.abs(m[:, 21:41] - q[:, [2]])) <= 1e-7


def test_fig2_recipe_one_csv_per_sigma(tmp_path):
    cfg = figure_config("fig2", paths=20, t_max=5.0)[0]
    assert cfg.params == EpidemicParams(0.25, 0.4, 0.2, 0.0)
    m = run(cfg, tmp_path)
    prev = sorted(f for f in m.files if f.startswith("prevalence"))
    assert len(prev) == len(SIGMA_LIST_FIG2)
    assert all("_seed0" in f for f in prev)
    header, _, footer = read_csv(tmp_path / prev[0])
    assert header == ["t", "mean_prevalence", "stderr", "n_paths"]
    assert footer["seed"] == "0" and "fraction_censored" in footer


def test_manifest_determinism(tmp_path):
    cfg = _cfg(graph={"kind": "complete", "n": 12}, method="simulate", paths=300, base_seed=99, t_max=10.0,
               params=dict(beta=0.3, delta=0.4, gamma=0.2, sigma=0.1), sweep={"gamma": [0.1, 0.3]})
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    assert a.files == b.files and a.config_hash == b.config_hash and a.seed == 99
    w = run(cfg.replace(workers=2), tmp_path / "w")
    assert w.config_hash == a.config_hash
    assert {k: v for k, v in w.files.items() if k != "config.json"} == \
           {k: v for k, v in a.files.items() if k != "config.json"}
    c = run(cfg.replace(base_seed=100), tmp_path / "c")
    assert {k: v for k, v in c.files.items() if k.startswith("prev")} != \
           {k: v for k, v in a.files.items() if k.startswith("prev")}


def test_threshold_cmd_output():
    text = threshold_cmd({"kind": "circulant_regular", "n": 50, "degree": 10}, EpidemicParams(0.1, 0.4, 0.2, 0.45))
    kv = dict(line.split("=", 1) for line in text.splitlines())
    assert kv["regime"] == "extinction"
    assert float(kv["tau_c"]) == pytest.approx(0.325)
    text = threshold_cmd({"kind": "complete", "n": 50}, EpidemicParams(0.005, 0.4, 0.2))
    kv = dict(line.split("=", 1) for line in text.splitlines())
    assert float(kv["mean_extinction_time_bound"]) == pytest.approx((np.log(50) + 1) / 0.155)


def test_reproduce_unknown_figure(tmp_path):
    with pytest.raises(ConfigError, match="unknown figure"):
        reproduce("fig9", tmp_path)
    assert len(FIGURES) == 11


def test_reproduce_fig3_shape(tmp_path):
    reproduce("fig3", tmp_path)
    header, data, _ = read_csv(tmp_path / "fig3_equilibrium_grid.csv")
    assert data.shape == (20, len(header))
    assert data[0, 0] == pytest.approx(0.05) and data[-1, 0] == pytest.approx(1.0)


def test_reproduce_eqpart_files(tmp_path):
    m = reproduce("figEqPart", tmp_path, t_max=20.0)
    assert {"quotient.csv", "figEqPart_full_ic1.csv", "figEqPart_full_ic2.csv", "figEqPart_selected.csv"} <= set(m.files)
    header, data, _ = read_csv(tmp_path / "figEqPart_selected.csv")
    assert header[0] == "t" and data.shape[1] == 7
    # distinct starts, common limit
    assert data[0, 1] != data[0, 3]


def test_reproduce_fig4_bundle(tmp_path):
    m = reproduce("fig4b", tmp_path, paths=30, t_max=5.0, seed=3)
    assert m.seed == 3
    assert {"meanfield.csv", "prevalence_seed3.csv", "comparison_seed3.csv"} <= set(m.files)


# --- command line ----------------------------------------------------------

def test_cli_graph_spectral(capsys):
    assert main(["graph", "spectral", "--graph", "path", "--n", "3"]) == 0
    out = capsys.readouterr().out
    assert "lambda1=1.414213562" in out


def test_cli_partition(capsys, tmp_path):
    assert main(["partition", "quotient", "--graph", "edge_list", "--n", "4", "--edges", _star(tmp_path),
                 "--beta", "1", "--epsilon", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "quotient_matrix=[[0.0, 1.5], [0.5, 0.0]]" in out


def _star(tmp_path):
    f = tmp_path / "star.txt"
    f.write_text("1 2\n1 3\n1 4\n")
    return str(f)


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["exact", "--graph", "complete", "--n", "13", "--beta", "0.1", "--delta", "0.4",
                 "--gamma", "0.2"]) == 2
    assert "N <= 12" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"graph": {"kind": "path", "n": 3}}')
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["graph", "build", "--graph", "edge_list", "--edges", _disconnected(tmp_path)]) == 2


def _disconnected(tmp_path):
    f = tmp_path / "dis.txt"
    f.write_text("1 2\n3 4\n")
    return str(f)


def test_cli_numerical_error_exit_code(capsys):
    args = ["meanfield", "lyapunov", "--graph", "circulant_regular", "--n", "50", "--degree", "10",
            "--beta", "0.1", "--delta", "0.4", "--gamma", "0.2", "--sigma", "0.45"]
    assert main(args) == 3
    assert "below threshold" in capsys.readouterr().err


def test_cli_config_file_and_overrides(tmp_path, capsys):
    cfg = _cfg(method="simulate", paths=50, t_max=4.0)
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert load_config(path) == cfg
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(path), "--seed", "5", "--paths", "40", "--tmax", "3",
                 "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 5 and "prevalence_seed5.csv" in m["files"]
    written = load_config(out / "config.json")
    assert written.paths == 40 and written.t_max == 3.0


def test_cli_meanfield_actions(capsys):
    base = ["--graph", "circulant_regular", "--n", "50", "--degree", "10", "--beta", "0.25", "--delta", "0.4",
            "--gamma", "0.2", "--sigma", "0.3"]
    assert main(["meanfield", "threshold", *base]) == 0
    assert "regime=endemic" in capsys.readouterr().out
    assert main(["meanfield", "equilibrium", *base]) == 0
    assert "kind=endemic" in capsys.readouterr().out
    assert main(["meanfield", "lyapunov", *base, "--tmax", "100"]) == 0
    assert "non_increasing=True" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sirsnet", "graph", "validate", "--graph", "complete", "--n", "5"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "n=5" in res.stdout


def test_cli_infected_flag(tmp_path, capsys):
    base = ["exact", "--graph", "path", "--n", "3", "--beta", "0.1", "--delta", "0.4", "--gamma", "0.2",
            "--tmax", "1"]
    assert main(base + ["--infected", "2", "--out", str(tmp_path / "mid")]) == 0
    cfg = json.loads((tmp_path / "mid" / "config.json").read_text())
    assert cfg["initial"] == {"one_infected": 1}
    header, rows, _ = read_csv(tmp_path / "mid" / "exact.csv")
    assert header[3:6] == ["I_marginal_1", "I_marginal_2", "I_marginal_3"]
    assert rows[0, 3:6].tolist() == [0.0, 1.0, 0.0]
    assert main(base + ["--infected", "0"]) == 2
    assert main(base + ["--infected", "4"]) == 2
