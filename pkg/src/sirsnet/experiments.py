"""Experiment configuration, orchestration and figure recipes.

A run is described by an :class:`ExperimentConfig` (stored as JSON with a
``schema_version`` field).  :func:`run` dispatches it to the owning module,
writes CSV and ``key=value`` outputs, and finishes with ``manifest.json``
holding SHA-256 checksums of every file it wrote.

Output layout (``<suffix>`` is empty for unswept runs, otherwise e.g.
``_sigma-0.45``):

* ``exact<suffix>.csv``: t, P_not_final, P_not_absorbed, I_marginal_1..N
* ``exact<suffix>_report.txt``: hitting time and bounds
* ``prevalence<suffix>_seed<S>.csv``: t, mean_prevalence, stderr, n_paths,
  with the seed, rates and extinction-time summary as a ``# key=value`` footer
* ``meanfield<suffix>.csv`` / ``quotient<suffix>.csv``: trajectories
* ``equilibrium<suffix>.txt``: threshold report plus the equilibrium
"""
from __future__ import annotations

import hashlib
import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from . import exact_markov as em
from . import meanfield as mf
from .graph_core import ConvergenceError, Graph, GraphError, apply_epsilon_weights, build_graph, spectral_radius
from .io import format_keyvalue, read_csv, sha256_file, write_csv, write_keyvalue
from .params import EpidemicParams
from .partitions import (
    EquitablePartition,
    NotEquitableError,
    coarsest_equitable_partition,
    quotient_matrix,
    verify_equitable,
)
from .stochastic_sim import empirical_extinction_stats, simulate_ensemble

__all__ = [
    "SCHEMA_VERSION",
    "METHODS",
    "FIGURES",
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "load_config",
    "resolve_graph",
    "run",
    "reproduce",
    "threshold_cmd",
    "figure_config",
]

SCHEMA_VERSION = 1
METHODS = ("exact", "simulate", "meanfield", "quotient")
PARAM_NAMES = tuple(f.name for f in fields(EpidemicParams))
FIGURES = ("fig1a", "fig1b", "fig2", "fig3", "fig4a", "fig4b", "fig4c",
           "fig5a", "fig5b", "fig5c", "figEqPart")

# Sweep grids and time windows for the figure recipes.
GAMMA_GRID_FIG1 = tuple(float(x) for x in np.logspace(-2, 0, 20))
GAMMA_GRID_FIG3 = tuple(float(x) for x in np.logspace(np.log10(0.05), 0, 20))
SIGMA_LIST_FIG2 = (0.0, 0.5, 1.0, 2.0, 3.0, 4.0)
SIGMA_LIST_FIG3 = (0.0, 0.1, 0.2, 0.3, 0.45)
WINDOW_FIG12 = 100.0
WINDOW_FIG45 = 100.0
WINDOW_EQPART = 100.0


class ConfigError(ValueError):
    """Invalid experiment configuration; raised before any computation."""


def _freeze(x):
    if isinstance(x, Mapping):
        return tuple((str(k), _freeze(v)) for k, v in sorted(x.items()))
    if isinstance(x, (list, tuple)):
        return tuple(_freeze(v) for v in x)
    return x


def _thaw(x):
    # inverse of _freeze for the JSON-facing dict form
    if isinstance(x, tuple) and x and all(isinstance(e, tuple) and len(e) == 2 and isinstance(e[0], str) for e in x):
        return {k: _thaw(v) for k, v in x}
    if isinstance(x, tuple):
        return [_thaw(v) for v in x]
    return x


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.  Mappings are stored as sorted key/value tuples so the
    config is hashable; :meth:`to_dict` and :meth:`from_dict` convert.

    graph
        ``{"kind": ..., **params}`` accepted by :func:`graph_core.build_graph`
        (``edges`` are 0-based pairs; ``path`` files use 1-based ids).
    initial
        ``{"one_infected": node}``, ``{"states": [0|1|2, ...]}``,
        ``{"S": [...], "I": [...], "R": [...]}`` or
        ``{"cell_equal": {"I": x, "R": y}}`` (scalars or one value per cell).
    grid
        Number of output intervals on ``[0, t_max]``.
    sweep
        Parameter name to list of values; the Cartesian product is run.
    partition
        Optional cells (0-based) for ``quotient`` runs and epsilon weighting;
        defaults to the coarsest equitable partition.
    """

    graph: tuple
    params: EpidemicParams
    method: str
    t_max: float
    initial: tuple = (("one_infected", 0),)
    grid: int = 100
    paths: int = 1000
    base_seed: int = 0
    sweep: tuple = ()
    out_dir: str = "out"
    workers: int = 1
    partition: tuple | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (isinstance(self.t_max, (int, float)) and self.t_max > 0):
            raise ConfigError("t_max must be positive")
        if int(self.grid) < 1:
            raise ConfigError("grid must be >= 1")
        if int(self.paths) < 1:
            raise ConfigError("paths must be >= 1")
        if not 0 <= int(self.base_seed) < 2**64:
            raise ConfigError("base_seed must fit in an unsigned 64-bit integer")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        for name, values in self.sweep:
            if name not in PARAM_NAMES:
                raise ConfigError(f"sweep axis {name!r} is not a parameter; pick from {PARAM_NAMES}")
            if not values:
                raise ConfigError(f"sweep axis {name!r} has no values")
            for v in values:
                try:
                    self.params.replace(**{name: float(v)})
                except ValueError as exc:
                    raise ConfigError(f"sweep {name}={v!r}: {exc}") from None
        if "kind" not in dict(self.graph):
            raise ConfigError("graph spec needs a 'kind'")

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "graph": _thaw(self.graph),
            "params": self.params.as_dict(),
            "method": self.method,
            "t_max": self.t_max,
            "initial": _thaw(self.initial),
            "grid": self.grid,
            "paths": self.paths,
            "base_seed": self.base_seed,
            "sweep": {k: list(v) for k, v in self.sweep},
            "out_dir": self.out_dir,
            "workers": self.workers,
            "partition": None if self.partition is None else [list(c) for c in self.partition],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("graph", "params", "method", "t_max"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        try:
            params = EpidemicParams(**d.pop("params"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"params: {exc}") from None
        sweep = d.pop("sweep", None) or {}
        if not isinstance(sweep, Mapping):
            raise ConfigError("sweep must map parameter names to value lists")
        part = d.pop("partition", None)
        try:
            return cls(
                graph=_freeze(d.pop("graph")),
                params=params,
                initial=_freeze(d.pop("initial", {"one_infected": 0})),
                sweep=tuple((str(k), tuple(float(v) for v in vals)) for k, vals in sweep.items()),
                partition=None if part is None else tuple(tuple(int(v) for v in c) for c in part),
                **d,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self) -> str:
        # key order is fixed by to_dict; sweep axes keep their given order
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None

    def hash(self) -> str:
        """SHA-256 of the canonical JSON, ignoring where the output goes."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d).encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        if isinstance(d.get("params"), EpidemicParams):
            d["params"] = d["params"].as_dict()
        return ExperimentConfig.from_dict(d)

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, float(self.t_max), int(self.grid) + 1)

    def sweep_cells(self) -> list[tuple[EpidemicParams, str]]:
        """Parameter set and filename suffix for every sweep cell."""
        if not self.sweep:
            return [(self.params, "")]
        names = [k for k, _ in self.sweep]
        cells = []
        for combo in itertools.product(*(v for _, v in self.sweep)):
            p = self.params.replace(**dict(zip(names, combo)))
            cells.append((p, "".join(f"_{k}-{v:.6g}" for k, v in zip(names, combo))))
        return cells


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return ExperimentConfig.from_json(text)


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    version: str
    wall_clock: float
    files: dict[str, str] = field(repr=False)
    seed: int | None = None
    label: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(self.to_json() + "\n")
        return path


# ---------------------------------------------------------------------------
# resolution helpers

def resolve_graph(spec) -> Graph:
    spec = dict(_thaw(spec)) if isinstance(spec, tuple) else dict(spec)
    kind = spec.pop("kind", None)
    if kind is None:
        raise ConfigError("graph spec needs a 'kind'")
    if "edges" in spec:
        spec["edges"] = [tuple(e) for e in spec["edges"]]
    try:
        return build_graph(kind, **spec)
    except GraphError as exc:
        raise ConfigError(f"graph: {exc}") from None
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"graph: bad parameters for kind {kind!r}: {exc}") from None


def _partition(cfg: ExperimentConfig, g: Graph) -> EquitablePartition:
    if cfg.partition is None:
        return coarsest_equitable_partition(g)
    try:
        return verify_equitable(g, cfg.partition)
    except (NotEquitableError, ValueError) as exc:
        raise ConfigError(f"partition: {exc}") from None


def _discrete_initial(initial: dict, n: int) -> np.ndarray:
    if "one_infected" in initial:
        node = int(initial["one_infected"])
        if not 0 <= node < n:
            raise ConfigError(f"one_infected node {node} outside 0..{n - 1}")
        x = np.zeros(n, dtype=np.int8)
        x[node] = 1
        return x
    if "states" in initial:
        states = initial["states"]
        if isinstance(states, str):
            states = ["SIR".index(c) for c in states.upper()]
        x = np.asarray(states, dtype=np.int64)
        if x.shape != (n,) or np.any((x < 0) | (x > 2)):
            raise ConfigError(f"initial states must be {n} values in {{0, 1, 2}}")
        return x.astype(np.int8)
    raise ConfigError("exact and simulate runs need 'one_infected' or 'states' as initial condition")


def _continuous_initial(initial: dict, n: int, partition: EquitablePartition | None, cells: bool):
    """Initial mean-field state per node, or per cell when ``cells``."""
    if "cell_equal" in initial:
        if partition is None:
            raise ConfigError("cell_equal initial condition needs a partition")
        ce = dict(initial["cell_equal"])
        k = partition.n_cells
        I = np.broadcast_to(np.asarray(ce.get("I", 0.0), dtype=float), (k,)).copy()
        R = np.broadcast_to(np.asarray(ce.get("R", 0.0), dtype=float), (k,)).copy()
        state = mf.MeanFieldState(1.0 - I - R, I, R)
        if not cells:
            state = mf.MeanFieldState(partition.expand(state.S), partition.expand(I), partition.expand(R))
    elif cells:
        raise ConfigError("quotient runs need a 'cell_equal' initial condition")
    elif "S" in initial or "I" in initial:
        try:
            I = np.asarray(initial["I"], dtype=float)
            R = np.asarray(initial.get("R", np.zeros(n)), dtype=float)
            S = np.asarray(initial.get("S", 1.0 - I - R), dtype=float)
        except KeyError:
            raise ConfigError("explicit initial arrays need at least 'I'") from None
        if not (S.shape == I.shape == R.shape == (n,)):
            raise ConfigError(f"initial arrays must have length {n}")
        state = mf.MeanFieldState(S, I, R)
    else:
        x = _discrete_initial(initial, n)
        state = mf.MeanFieldState((x == 0).astype(float), (x == 1).astype(float), (x == 2).astype(float))
    if state.region_violation() > 1e-12:
        raise ConfigError("initial probabilities must be non-negative and sum to one per node")
    return state


def validate(cfg: ExperimentConfig) -> Graph:
    """Resolve and cross-check everything that does not require computing."""
    g = resolve_graph(cfg.graph)
    initial = dict(_thaw(cfg.initial)) if cfg.initial else {}
    if cfg.method == "exact" and g.n > em.MAX_EXACT_NODES:
        raise ConfigError(f"method=exact needs N <= {em.MAX_EXACT_NODES}, graph has N={g.n}")
    if cfg.method in ("exact", "simulate"):
        _discrete_initial(initial, g.n)
    else:
        part = _partition(cfg, g) if (cfg.method == "quotient" or "cell_equal" in initial) else None
        _continuous_initial(initial, g.n, part, cells=cfg.method == "quotient")
    return g


# ---------------------------------------------------------------------------
# per-method runners; each returns the list of files written

def _run_exact(cfg, g, p, suffix, out: Path) -> list[Path]:
    x0 = _discrete_initial(dict(_thaw(cfg.initial)), g.n)
    Q = em.build_generator(g, p)
    v0 = np.zeros(Q.n_states)
    v0[em.encode(x0)] = 1.0
    t = cfg.t_grid
    V = em.solve_master_equation(Q, v0, t)
    csv = out / f"exact{suffix}.csv"
    em.write_master_csv(csv, Q, t, V)
    lam = spectral_radius(g).lambda1
    report: dict[str, Any] = {"n": g.n, "lambda1": lam, **p.as_dict(), "initial": "".join("SIR"[s] for s in x0)}
    if x0.any() and np.any(x0 == em.I):
        report["expected_hitting_time_final_set"] = em.expected_hitting_time_final_set(Q, x0)
        n_inf = int(np.sum(x0 == em.I))
        report["bound_not_in_final_set_at_t_max"] = em.bound_not_in_final_set(cfg.t_max, g.n, n_inf, p.beta, p.delta, lam)
        if p.beta * lam < p.delta:
            report["bound_mean_extinction_time"] = em.bound_mean_extinction_time(g.n, p.beta, p.delta, lam)
    report["P_not_final_at_t_max"] = float(em.prob_not_in_final_set(Q, V[-1]))
    rep = write_keyvalue(out / f"exact{suffix}_report.txt", report)
    return [csv, rep]


def _run_simulate(cfg, g, p, suffix, out: Path) -> list[Path]:
    x0 = _discrete_initial(dict(_thaw(cfg.initial)), g.n)
    seed = int(cfg.base_seed)
    ens = simulate_ensemble(g, p, x0, int(cfg.paths), cfg.t_grid, seed)
    stats = empirical_extinction_stats(ens).as_dict()
    footer = {"seed": seed, **p.as_dict(), "t_max": cfg.t_max, **stats}
    csv = write_csv(out / f"prevalence{suffix}_seed{seed}.csv", ["t", "mean_prevalence", "stderr", "n_paths"],
                    ens.curve.rows(), footer=footer)
    return [csv]


def _equilibrium_report(structure, p: EpidemicParams, lam: float, n: int) -> dict[str, Any]:
    thr = mf.threshold_report(p, lam)
    report: dict[str, Any] = dict(thr.as_dict())
    try:
        eq = mf.endemic_equilibrium(structure, p)
    except mf.BelowThresholdError:
        eq = mf.disease_free_equilibrium(n, p)
    report.update(eq.as_dict())
    return report


def _run_meanfield(cfg, g, p, suffix, out: Path) -> list[Path]:
    initial = dict(_thaw(cfg.initial))
    part = None
    if p.epsilon != 1.0 or "cell_equal" in initial or cfg.partition is not None:
        part = _partition(cfg, g)
    structure = g if p.epsilon == 1.0 else apply_epsilon_weights(g, part, p.epsilon)
    y0 = _continuous_initial(initial, g.n, part, cells=False)
    traj = mf.integrate("full", y0, cfg.t_grid, p, structure)
    csv = out / f"meanfield{suffix}.csv"
    mf.write_trajectory_csv(csv, traj)
    lam = spectral_radius(structure).lambda1
    report = _equilibrium_report(structure, p, lam, g.n)
    report.update({"n_clamped": traj.n_clamped, "region_violation": traj.region_violation,
                   "steady_time": traj.steady_time})
    rep = write_keyvalue(out / f"equilibrium{suffix}.txt", report)
    return [csv, rep]


def _run_quotient(cfg, g, p, suffix, out: Path) -> list[Path]:
    part = _partition(cfg, g)
    qm = quotient_matrix(part, p.beta, p.epsilon)
    y0 = _continuous_initial(dict(_thaw(cfg.initial)), g.n, part, cells=True)
    traj = mf.integrate("quotient", y0, cfg.t_grid, p, qm)
    csv = out / f"quotient{suffix}.csv"
    mf.write_trajectory_csv(csv, traj)
    lam = spectral_radius(qm).lambda1 / p.beta
    report = _equilibrium_report(qm, p, lam, part.n_cells)
    report["cells"] = ";".join(" ".join(str(v + 1) for v in c) for c in part.cells)
    rep = write_keyvalue(out / f"equilibrium{suffix}.txt", report)
    return [csv, rep]


_RUNNERS = {"exact": _run_exact, "simulate": _run_simulate, "meanfield": _run_meanfield, "quotient": _run_quotient}


def _execute(cfg: ExperimentConfig, out: Path) -> list[Path]:
    g = validate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    runner = _RUNNERS[cfg.method]
    cells = cfg.sweep_cells()
    if cfg.workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.workers)) as pool:
            groups = list(pool.map(lambda c: runner(cfg, g, c[0], c[1], out), cells))
    else:
        groups = [runner(cfg, g, p, suffix, out) for p, suffix in cells]
    return [f for grp in groups for f in grp]


def _manifest(out: Path, files: list[Path], config_hash: str, start: float, seed, label: str) -> RunManifest:
    sums = {str(Path(f).relative_to(out)): sha256_file(f) for f in sorted(set(files))}
    m = RunManifest(config_hash, __version__, round(time.perf_counter() - start, 3), sums, seed, label)
    m.write(out)
    return m


def run(config: ExperimentConfig, out_dir=None) -> RunManifest:
    """Execute ``config``; returns the manifest (also written as ``manifest.json``).

    Raises
    ------
    ConfigError
        Before any computation, for invalid graphs, initial conditions,
        partitions, or exact runs above the node cap.
    """
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else config.out_dir)
    files = _execute(config, out)
    (out / "config.json").write_text(config.to_json() + "\n")
    seed = int(config.base_seed) if config.method == "simulate" else None
    return _manifest(out, files + [out / "config.json"], config.hash(), start, seed, config.method)


def threshold_cmd(graph, params: EpidemicParams) -> str:
    """Threshold report as ``key=value`` text, plus the fast-extinction bound when it applies."""
    g = graph if isinstance(graph, Graph) else resolve_graph(graph)
    lam = spectral_radius(g).lambda1
    report: dict[str, Any] = dict(mf.threshold_report(params, lam).as_dict())
    if params.beta * lam < params.delta:
        report["mean_extinction_time_bound"] = em.bound_mean_extinction_time(g.n, params.beta, params.delta, lam)
        report["final_set_decay_rate"] = params.beta * lam - params.delta
    return format_keyvalue(report)


# ---------------------------------------------------------------------------
# figure recipes

_K50 = {"kind": "complete", "n": 50}
_R50 = {"kind": "circulant_regular", "n": 50, "degree": 10}

_FIG45 = {
    "fig4a": (_K50, dict(beta=0.1, delta=0.9, gamma=0.1, sigma=0.4)),
    "fig4b": (_K50, dict(beta=1.0, delta=0.45, gamma=0.2, sigma=0.4)),
    "fig4c": (_K50, dict(beta=1.0, delta=0.45, gamma=0.06, sigma=0.4)),
    "fig5a": (_R50, dict(beta=0.1, delta=0.4, gamma=0.2, sigma=0.45)),
    "fig5b": (_R50, dict(beta=1.0, delta=0.4, gamma=0.2, sigma=0.45)),
    "fig5c": (_R50, dict(beta=1.0, delta=0.4, gamma=0.06, sigma=0.45)),
}


def figure_config(figure: str, paths: int | None = None, seed: int = 0, t_max: float | None = None,
                  workers: int = 1) -> list[ExperimentConfig]:
    """The experiment configs behind a figure (fig3 and figEqPart are
    computed directly by :func:`reproduce` and return their base config)."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; known: {', '.join(FIGURES)}")
    common = dict(base_seed=seed, workers=workers, schema_version=SCHEMA_VERSION)
    if figure in ("fig1a", "fig1b", "fig2"):
        tm = WINDOW_FIG12 if t_max is None else t_max
        sigma = {"fig1a": 0.0, "fig1b": 0.45, "fig2": 0.0}[figure]
        gamma = 0.2 if figure == "fig2" else 1.0
        sweep = {"sigma": list(SIGMA_LIST_FIG2)} if figure == "fig2" else {"gamma": list(GAMMA_GRID_FIG1)}
        return [ExperimentConfig.from_dict(dict(
            graph=_K50, params=dict(beta=0.25, delta=0.4, gamma=gamma, sigma=sigma), method="simulate",
            t_max=tm, grid=int(round(2 * tm)), paths=1000 if paths is None else paths, sweep=sweep, **common))]
    if figure == "fig3":
        return [ExperimentConfig.from_dict(dict(
            graph=_K50, params=dict(beta=0.25, delta=0.9, gamma=1.0, sigma=0.0), method="meanfield",
            t_max=1.0, sweep={"gamma": list(GAMMA_GRID_FIG3), "sigma": list(SIGMA_LIST_FIG3)}, **common))]
    if figure == "figEqPart":
        tm = WINDOW_EQPART if t_max is None else t_max
        return [ExperimentConfig.from_dict(dict(
            graph=_R50, params=dict(beta=0.25, delta=0.4, gamma=0.2, sigma=0.3), method="quotient",
            t_max=tm, grid=int(round(10 * tm)), initial={"cell_equal": {"I": 0.1, "R": 0.0}}, **common))]
    graph, prm = _FIG45[figure]
    tm = WINDOW_FIG45 if t_max is None else t_max
    base = dict(graph=graph, params=prm, t_max=tm, grid=int(round(2 * tm)), initial={"one_infected": 0},
                paths=20000 if paths is None else paths, **common)
    return [ExperimentConfig.from_dict(dict(base, method="meanfield")),
            ExperimentConfig.from_dict(dict(base, method="simulate"))]


def _steady(t: np.ndarray, y: np.ndarray) -> float:
    """Time average over the second half of the window."""
    return float(y[t >= t[-1] / 2].mean())


def _fig3(cfg: ExperimentConfig, out: Path) -> list[Path]:
    g = resolve_graph(cfg.graph)
    gammas = dict(cfg.sweep)["gamma"]
    sigmas = dict(cfg.sweep)["sigma"]

    def cell(args):
        gm, sg = args
        p = cfg.params.replace(gamma=gm, sigma=sg)
        try:
            return mf.endemic_equilibrium(g, p).mean_infected()
        except mf.BelowThresholdError:
            return 0.0

    combos = list(itertools.product(gammas, sigmas))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.workers)) as pool:
            vals = list(pool.map(cell, combos))
    else:
        vals = [cell(c) for c in combos]
    table = np.array(vals).reshape(len(gammas), len(sigmas))
    header = ["gamma"] + [f"Ibar_sigma-{s:.6g}" for s in sigmas]
    return [write_csv(out / "fig3_equilibrium_grid.csv", header, np.column_stack([gammas, table]),
                      footer={"beta": cfg.params.beta, "delta": cfg.params.delta, "n": g.n})]


def _eqpart_initials(n: int) -> tuple[mf.MeanFieldState, mf.MeanFieldState]:
    # two fixed, node-dependent starts (deterministic, not cell-equal)
    frac = np.arange(n) / (n - 1)
    I1, R1 = 0.05 + 0.85 * frac, 0.1 * (1 - frac)
    I2, R2 = 0.9 - 0.85 * frac, 0.05 + 0.05 * frac
    return mf.MeanFieldState.from_IR(I1, R1), mf.MeanFieldState.from_IR(I2, R2)


EQPART_NODES = (0, 25)


def _figeqpart(cfg: ExperimentConfig, out: Path) -> list[Path]:
    g = resolve_graph(cfg.graph)
    files = _execute(cfg, out)  # quotient trajectory and its equilibrium
    t = cfg.t_grid
    cols, header = [t], ["t"]
    for k, y0 in enumerate(_eqpart_initials(g.n), 1):
        traj = mf.integrate("full", y0, t, cfg.params, g)
        path = out / f"figEqPart_full_ic{k}.csv"
        mf.write_trajectory_csv(path, traj)
        files.append(path)
        node = EQPART_NODES[k - 1]
        cols += [traj.I[:, node], traj.R[:, node]]
        header += [f"I_node{node + 1}_ic{k}", f"R_node{node + 1}_ic{k}"]
    _, q, _ = read_csv(out / "quotient.csv")
    cols += [q[:, 2], q[:, 3]]
    header += ["I_cell_1", "R_cell_1"]
    files.append(write_csv(out / "figEqPart_selected.csv", header, np.column_stack(cols)))
    return files


def _fig45(cfgs: list[ExperimentConfig], out: Path) -> list[Path]:
    mf_cfg, mc_cfg = cfgs
    files = _execute(mf_cfg, out) + _execute(mc_cfg, out)
    _, traj, _ = read_csv(out / "meanfield.csv")
    n = (traj.shape[1] - 1) // 3
    _, prev, _ = read_csv(out / f"prevalence_seed{mc_cfg.base_seed}.csv")
    rows = np.column_stack([traj[:, 0], traj[:, 1 + n:1 + 2 * n].mean(axis=1), prev[:, 1], prev[:, 2]])
    files.append(write_csv(out / f"comparison_seed{mc_cfg.base_seed}.csv",
                           ["t", "meanfield_prevalence", "mc_mean", "mc_stderr"], rows,
                           footer={"paths": mc_cfg.paths, "seed": mc_cfg.base_seed}))
    return files


def _sweep_summary(cfg: ExperimentConfig, out: Path) -> list[Path]:
    (axis, values), = cfg.sweep
    long_rows, steady_rows = [], []
    for p, suffix in cfg.sweep_cells():
        _, d, _ = read_csv(out / f"prevalence{suffix}_seed{cfg.base_seed}.csv")
        v = getattr(p, axis)
        long_rows += [[v, *r[:3]] for r in d]
        steady_rows.append([v, _steady(d[:, 0], d[:, 1])])
    return [
        write_csv(out / f"surface_seed{cfg.base_seed}.csv", [axis, "t", "mean_prevalence", "stderr"], long_rows),
        write_csv(out / f"steady_seed{cfg.base_seed}.csv", [axis, "steady_prevalence"], steady_rows),
    ]


def reproduce(figure: str, out_dir, paths: int | None = None, seed: int = 0, t_max: float | None = None,
              workers: int = 1) -> RunManifest:
    """Write the plot-ready CSVs for one figure under ``out_dir``.

    Stochastic figures default to 1e3 paths (Figs. 1-2) or 2e4 paths
    (Figs. 4-5); ``paths`` overrides.
    """
    start = time.perf_counter()
    cfgs = figure_config(figure, paths=paths, seed=seed, t_max=t_max, workers=workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if figure == "fig3":
        files = _fig3(cfgs[0], out)
    elif figure == "figEqPart":
        files = _figeqpart(cfgs[0], out)
    elif figure in _FIG45:
        files = _fig45(cfgs, out)
    else:
        files = _execute(cfgs[0], out) + _sweep_summary(cfgs[0], out)
    for c in cfgs:
        path = out / (f"config_{c.method}.json" if len(cfgs) > 1 else "config.json")
        path.write_text(c.to_json() + "\n")
        files.append(path)
    h = hashlib.sha256("".join(c.hash() for c in cfgs).encode()).hexdigest()
    stochastic = any(c.method == "simulate" for c in cfgs)
    return _manifest(out, files, h, start, seed if stochastic else None, figure)


NUMERICAL_ERRORS = (ConvergenceError, mf.IntegrationError, mf.BelowThresholdError, em.AboveThresholdError,
                    em.SpectrumCollisionError, FloatingPointError, np.linalg.LinAlgError)
