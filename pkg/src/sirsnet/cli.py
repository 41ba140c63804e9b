"""Command-line front end (``sirsnet``).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import exact_markov as em
from . import meanfield as mf
from .experiments import (
    FIGURES,
    NUMERICAL_ERRORS,
    ConfigError,
    ExperimentConfig,
    load_config,
    reproduce,
    resolve_graph,
    run,
    threshold_cmd,
)
from .graph_core import GraphError, spectral_radius, write_edge_list
from .io import format_keyvalue, write_keyvalue
from .params import EpidemicParams
from .partitions import (
    NotEquitableError,
    coarsest_equitable_partition,
    quotient_matrix,
    read_partition,
    verify_equitable,
    write_partition,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("sirsnet")


def _add_common(p: argparse.ArgumentParser, params: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    p.add_argument("--tmax", type=float, help="end of the time window")
    p.add_argument("--infected", type=int, metavar="NODE",
                   help="start with this single node infected (1-based; default 1)")
    g = p.add_argument_group("graph (used when no --config is given)")
    g.add_argument("--graph", dest="kind", help="complete | circulant_regular | ring | path | edge_list")
    g.add_argument("--n", type=int)
    g.add_argument("--degree", type=int)
    g.add_argument("--edges", type=Path, help="edge-list file (1-based ids)")
    if params:
        q = p.add_argument_group("rates (override the config)")
        for name in ("beta", "delta", "gamma", "sigma", "epsilon"):
            q.add_argument(f"--{name}", type=float)


def build_parser() -> argparse.ArgumentParser:
    # argparse itself exits with 2 on bad usage, matching EXIT_CONFIG
    parser = argparse.ArgumentParser(prog="sirsnet", description="SIRS epidemics with vaccination on networks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="build, validate and measure a graph")
    p.add_argument("action", choices=["build", "validate", "spectral"])
    p.add_argument("--write", type=Path, help="write the graph as an edge list")
    _add_common(p, params=False)

    p = sub.add_parser("partition", help="equitable partitions and quotient matrices")
    p.add_argument("action", choices=["detect", "verify", "quotient"])
    p.add_argument("--cells", type=Path, help="partition file (one cell per line, 1-based)")
    p.add_argument("--write", type=Path, help="write the partition")
    _add_common(p)

    for name, help_ in (("exact", "master equation, hitting times and bounds"),
                        ("simulate", "Monte Carlo prevalence")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)

    p = sub.add_parser("meanfield", help="mean-field integration and analysis")
    p.add_argument("action", choices=["integrate", "threshold", "equilibrium", "lyapunov"])
    p.add_argument("--quotient", action="store_true", help="integrate the cell-level system")
    _add_common(p)

    p = sub.add_parser("reproduce", help="write the CSVs behind a figure")
    p.add_argument("figure", choices=FIGURES)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.add_argument("--paths", type=int)
    p.add_argument("--tmax", type=float)
    return parser


def _graph_spec(args) -> dict:
    if args.config is not None:
        return load_config(args.config).to_dict()["graph"]
    if args.kind is None and args.edges is None:
        raise ConfigError("give --config or a graph (--graph KIND --n N ...)")
    spec = {"kind": args.kind or "edge_list"}
    for key in ("n", "degree"):
        if getattr(args, key) is not None:
            spec[key] = getattr(args, key)
    if args.edges is not None:
        spec["path"] = str(args.edges)
    return spec


def _params(args, base: EpidemicParams | None = None) -> EpidemicParams:
    given = {k: getattr(args, k) for k in ("beta", "delta", "gamma", "sigma", "epsilon")
             if getattr(args, k, None) is not None}
    try:
        if base is not None:
            return base.replace(**given)
        return EpidemicParams(**given)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"rates: {exc}") from None


def _config(args, method: str) -> ExperimentConfig:
    """Config from --config (or the graph/rate flags), with flag overrides."""
    if args.config is not None:
        cfg = load_config(args.config)
        d = cfg.to_dict()
        d["params"] = _params(args, cfg.params).as_dict()
    else:
        d = {"graph": _graph_spec(args), "params": _params(args).as_dict(), "t_max": 10.0}
    d["method"] = method
    for flag, key in (("seed", "base_seed"), ("paths", "paths"), ("tmax", "t_max"), ("out", "out_dir")):
        if getattr(args, flag, None) is not None:
            d[key] = str(getattr(args, flag)) if key == "out_dir" else getattr(args, flag)
    if getattr(args, "infected", None) is not None:
        if args.infected < 1:
            raise ConfigError(f"--infected takes a 1-based node id, got {args.infected}")
        d["initial"] = {"one_infected": args.infected - 1}
    return ExperimentConfig.from_dict(d)


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _manifest_summary(m, out) -> str:
    lines = [f"out_dir={out}", f"config_hash={m.config_hash}", f"wall_clock={m.wall_clock}"]
    if m.seed is not None:
        lines.append(f"seed={m.seed}")
    lines += [f"file={name} sha256={h}" for name, h in m.files.items()]
    return "\n".join(lines)


def cmd_graph(args) -> int:
    g = resolve_graph(_graph_spec(args))
    info = {"n": g.n, "edges": len(g.edges), "regular": g.is_regular(), "connected": True}
    if args.action == "spectral":
        sr = spectral_radius(g)
        info.update(lambda1=sr.lambda1, iterations=sr.iterations, residual=sr.residual)
    if args.write is not None:
        write_edge_list(g, args.write)
    _emit(format_keyvalue(info))
    return EXIT_OK


def cmd_partition(args) -> int:
    g = resolve_graph(_graph_spec(args))
    if args.action == "verify" or args.cells is not None:
        if args.cells is None:
            raise ConfigError("verify needs --cells")
        part = verify_equitable(g, read_partition(args.cells))
    else:
        part = coarsest_equitable_partition(g)
    if args.write is not None:
        write_partition(part, args.write)
    lines = [f"n_cells={part.n_cells}"]
    lines += [f"cell_{h + 1}=" + " ".join(str(v + 1) for v in c) for h, c in enumerate(part.cells)]
    lines.append("degree_matrix=" + json.dumps(part.degree_matrix.tolist()))
    if args.action == "quotient":
        p = _params(args, EpidemicParams(1.0, 1.0, 1.0))
        qm = quotient_matrix(part, p.beta, p.epsilon)
        lines.append("quotient_matrix=" + json.dumps(qm.matrix.tolist()))
    _emit("\n".join(lines))
    return EXIT_OK


def _run_and_report(cfg: ExperimentConfig) -> int:
    m = run(cfg)
    _emit(_manifest_summary(m, cfg.out_dir))
    return EXIT_OK


def cmd_exact(args) -> int:
    return _run_and_report(_config(args, "exact"))


def cmd_simulate(args) -> int:
    return _run_and_report(_config(args, "simulate"))


def cmd_meanfield(args) -> int:
    if args.action == "integrate":
        return _run_and_report(_config(args, "quotient" if args.quotient else "meanfield"))
    cfg = _config(args, "meanfield")
    g = resolve_graph(cfg.graph)
    p = cfg.params
    if args.action == "threshold":
        _emit(threshold_cmd(g, p))
        return EXIT_OK
    if args.action == "equilibrium":
        try:
            eq = mf.endemic_equilibrium(g, p)
        except mf.BelowThresholdError as exc:
            log.info("%s", exc)
            eq = mf.disease_free_equilibrium(g.n, p)
        report = eq.as_dict()
        if args.out is not None:
            write_keyvalue(Path(args.out) / "equilibrium.txt", report)
        _emit(format_keyvalue(report))
        return EXIT_OK
    # lyapunov: two-variable regular-graph system from the config's start
    if not g.is_regular():
        raise ConfigError("lyapunov needs a regular graph")
    d = int(g.degrees[0])
    eq = mf.endemic_equilibrium(g, p)
    initial = cfg.to_dict()["initial"]
    i0 = float(np.mean(initial["I"])) if "I" in initial else 1.0 / g.n
    r0 = float(np.mean(initial["R"])) if "R" in initial else 0.0
    traj = mf.integrate("regular2d", [i0, r0], cfg.t_grid, p, d)
    V = mf.lyapunov_V(traj.I[:, 0], traj.R[:, 0], eq, p, d)
    report = {"I_star": float(eq.I[0]), "R_star": float(eq.R[0]), "V_start": float(V[0]), "V_end": float(V[-1]),
              "max_V_increase": float(np.max(np.diff(V), initial=0.0)),
              "non_increasing": bool(np.all(np.diff(V) <= mf.LYAPUNOV_ROUNDOFF))}
    _emit(format_keyvalue(report))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = args.out if args.out is not None else Path("out") / args.figure
    m = reproduce(args.figure, out, paths=args.paths, seed=args.seed, t_max=args.tmax, workers=args.workers)
    _emit(_manifest_summary(m, out))
    return EXIT_OK


COMMANDS = {"graph": cmd_graph, "partition": cmd_partition, "exact": cmd_exact, "simulate": cmd_simulate,
            "meanfield": cmd_meanfield, "reproduce": cmd_reproduce}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GraphError, NotEquitableError, em.StateSpaceTooLarge) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
