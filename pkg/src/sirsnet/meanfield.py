"""First-order mean-field (independence closure) of the network SIRS process.

Four vector fields share one integrator:

``full``
    3N equations in (S, I, R).
``reduced``
    2N equations in (I, R) with S = 1 - I - R.
``quotient``
    3n equations on the cells of an equitable partition.
``regular2d``
    2 equations for a d-regular graph started with equal node values.

Each system's infection term is ``S * (M @ I)`` where ``M`` is the
"infection operator": ``beta * A`` (or ``beta`` times the epsilon-weighted
adjacency) for per-node systems, the quotient matrix for cell systems.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .graph_core import ConvergenceError, as_matrix, spectral_radius
from .params import EpidemicParams
from .partitions import EquitablePartition, QuotientMatrix, quotient_matrix

__all__ = [
    "MeanFieldState",
    "EquilibriumPoint",
    "ThresholdReport",
    "Trajectory",
    "GlobalConditionReport",
    "BelowThresholdError",
    "IntegrationError",
    "SYSTEMS",
    "infection_operator",
    "rhs_full",
    "rhs_reduced_IR",
    "rhs_quotient",
    "rhs_regular2d",
    "vector_field",
    "integrate",
    "threshold_report",
    "disease_free_equilibrium",
    "endemic_equilibrium",
    "lyapunov_V",
    "lyapunov_dVdt",
    "check_global_condition_a",
    "correlation_gap",
    "write_trajectory_csv",
]

SYSTEMS = ("full", "reduced", "quotient", "regular2d")
NEG_CLAMP = 1e-12
# V sums O(1) terms that cancel near the equilibrium, so evaluated
# differences below this are rounding noise, not increases.
LYAPUNOV_ROUNDOFF = 1e-15


class BelowThresholdError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    """Per-node (or per-cell) probabilities of being S, I and R."""

    S: np.ndarray
    I: np.ndarray
    R: np.ndarray

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "MeanFieldState":
        y = np.asarray(y, dtype=float)
        n = y.size // 3
        return cls(y[:n].copy(), y[n:2 * n].copy(), y[2 * n:].copy())

    @classmethod
    def from_IR(cls, I, R) -> "MeanFieldState":
        I, R = np.atleast_1d(np.asarray(I, dtype=float)), np.atleast_1d(np.asarray(R, dtype=float))
        return cls(1.0 - I - R, I, R)

    @classmethod
    def one_infected(cls, n: int, node: int = 0) -> "MeanFieldState":
        I = np.zeros(n)
        I[node] = 1.0
        return cls(1.0 - I, I, np.zeros(n))

    @property
    def n(self) -> int:
        return self.S.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.S, self.I, self.R])

    def region_violation(self) -> float:
        """Distance from the simplex slices (0 when the state is admissible)."""
        v = self.as_vector()
        return max(float(np.max(np.abs(self.S + self.I + self.R - 1.0))), float(max(0.0, -v.min())))


def infection_operator(structure, p: EpidemicParams):
    """``M`` with infection pressure ``M @ I``; dense or CSR for node systems."""
    if isinstance(structure, QuotientMatrix):
        return structure.matrix
    if isinstance(structure, EquitablePartition):
        return quotient_matrix(structure, p.beta, p.epsilon).matrix
    return p.beta * as_matrix(structure)


def rhs_full(state: MeanFieldState, g, p: EpidemicParams):
    """(dS, dI, dR) of the 3N-dimensional system."""
    x = infection_operator(g, p) @ state.I
    new_inf = state.S * x
    dS = -new_inf + p.gamma * state.R - p.sigma * state.S
    dI = new_inf - p.delta * state.I
    dR = p.delta * state.I - p.gamma * state.R + p.sigma * state.S
    return dS, dI, dR


def rhs_reduced_IR(I, R, g, p: EpidemicParams):
    """(dI, dR) of the 2N-dimensional system with S eliminated."""
    I, R = np.asarray(I, dtype=float), np.asarray(R, dtype=float)
    x = infection_operator(g, p) @ I
    dI = (1.0 - I - R) * x - p.delta * I
    dR = (p.delta - p.sigma) * I - (p.gamma + p.sigma) * R + p.sigma
    return dI, dR


def rhs_quotient(S, I, R, partition, p: EpidemicParams):
    """Cell-level (dS, dI, dR); ``partition`` is an EquitablePartition or QuotientMatrix."""
    state = MeanFieldState(np.asarray(S, float), np.asarray(I, float), np.asarray(R, float))
    return rhs_full(state, partition, p)


def rhs_regular2d(I: float, R: float, degree: int, p: EpidemicParams):
    dI = p.beta * degree * (1.0 - I - R) * I - p.delta * I
    dR = p.delta * I - p.gamma * R + p.sigma * (1.0 - I - R)
    return dI, dR


def vector_field(system: str, structure, p: EpidemicParams):
    """Flat ``f(t, y)`` for ``system`` (see module docstring for layouts)."""
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; pick one of {SYSTEMS}")
    b, d, gm, s = p.beta, p.delta, p.gamma, p.sigma
    if system == "regular2d":
        k = float(structure)

        def f(t, y):
            i, r = y
            return np.array([b * k * (1 - i - r) * i - d * i, d * i - gm * r + s * (1 - i - r)])
        return f
    M = infection_operator(structure, p)
    if system == "reduced":
        def f(t, y):
            n = y.size // 2
            i, r = y[:n], y[n:]
            return np.concatenate([(1 - i - r) * (M @ i) - d * i, (d - s) * i - (gm + s) * r + s])
        return f

    def f(t, y):
        n = y.size // 3
        S_, i, r = y[:n], y[n:2 * n], y[2 * n:]
        inf = S_ * (M @ i)
        return np.concatenate([-inf + gm * r - s * S_, inf - d * i, d * i - gm * r + s * S_])
    return f


@dataclass(frozen=True, eq=False)
class Trajectory:
    system: str
    t: np.ndarray
    y: np.ndarray = field(repr=False)  # shape (len(t), dim)
    n_clamped: int
    region_violation: float
    steady_time: float | None  # first output time with max|rhs| < 1e-10

    @property
    def n(self) -> int:
        return self.y.shape[1] // (2 if self.system in ("reduced", "regular2d") else 3)

    @property
    def I(self) -> np.ndarray:
        k = self.n
        return self.y[:, :k] if self.system in ("reduced", "regular2d") else self.y[:, k:2 * k]

    @property
    def R(self) -> np.ndarray:
        k = self.n
        return self.y[:, k:2 * k] if self.system in ("reduced", "regular2d") else self.y[:, 2 * k:]

    @property
    def S(self) -> np.ndarray:
        if self.system in ("reduced", "regular2d"):
            return 1.0 - self.I - self.R
        return self.y[:, :self.n]

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]

    def prevalence(self, weights: np.ndarray | None = None) -> np.ndarray:
        """Mean infection probability per time (cell systems need cell sizes as weights)."""
        if weights is None:
            return self.I.mean(axis=1)
        w = np.asarray(weights, dtype=float)
        return self.I @ w / w.sum()


def _region_violation(system: str, Y: np.ndarray) -> float:
    worst = max(0.0, -float(Y.min()))
    k = Y.shape[1] // (2 if system in ("reduced", "regular2d") else 3)
    if system in ("reduced", "regular2d"):
        worst = max(worst, float(np.max(Y[:, :k] + Y[:, k:] - 1.0, initial=0.0)))
    else:
        worst = max(worst, float(np.max(np.abs(Y[:, :k] + Y[:, k:2 * k] + Y[:, 2 * k:] - 1.0))))
    return worst


def integrate(system: str, y0, t_grid: Sequence[float], p: EpidemicParams, structure,
              tol: float = 1e-9, method: str = "RK45") -> Trajectory:
    """Integrate a mean-field system and sample it on ``t_grid``.

    Parameters
    ----------
    system : {"full", "reduced", "quotient", "regular2d"}
    y0 : array or MeanFieldState
        Flat initial vector in the system's layout.  A MeanFieldState is
        accepted for ``full``/``quotient`` (and converted to (I, R) for the
        two-variable systems).
    structure
        Graph / WeightedAdjacency for node systems, EquitablePartition or
        QuotientMatrix for ``quotient``, the degree for ``regular2d``.
    tol : float
        Both ``rtol`` and ``atol`` of the embedded Runge-Kutta 4(5) pair.

    Raises
    ------
    IntegrationError
        If the step size underflows.
    """
    if isinstance(y0, MeanFieldState):
        y0 = np.concatenate([y0.I, y0.R]) if system in ("reduced", "regular2d") else y0.as_vector()
    y0 = np.asarray(y0, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    f = vector_field(system, structure, p)
    sol = solve_ivp(f, (t_grid[0], t_grid[-1]), y0, method=method, t_eval=t_grid, rtol=tol, atol=tol)
    if sol.status < 0:
        raise IntegrationError(f"integration failed at t={sol.t[-1] if sol.t.size else t_grid[0]:g}: {sol.message}")
    Y = sol.y.T.copy()
    tiny = (Y < 0) & (Y >= -NEG_CLAMP)
    n_clamped = int(tiny.sum())
    Y[tiny] = 0.0
    viol = _region_violation(system, Y)
    steady = None
    for k in range(t_grid.size):
        if np.max(np.abs(f(t_grid[k], Y[k]))) < 1e-10:
            steady = float(t_grid[k])
            break
    return Trajectory(system, t_grid, Y, n_clamped, viol, steady)


@dataclass(frozen=True)
class ThresholdReport:
    tau: float
    tau_c: float
    rho: float
    lambda1: float
    regime: str

    def as_dict(self) -> dict[str, object]:
        return {"tau": self.tau, "tau_c": self.tau_c, "rho": self.rho, "lambda1": self.lambda1,
                "regime": self.regime}


def threshold_report(p: EpidemicParams, lambda1: float) -> ThresholdReport:
    """Mean-field epidemic threshold (gamma+sigma)/(gamma lambda1) against tau = beta/delta."""
    if not lambda1 > 0:
        raise ValueError("lambda1 must be positive")
    tau_c = (p.gamma + p.sigma) / p.gamma / lambda1
    rho = p.beta * p.gamma / (p.delta * (p.gamma + p.sigma))
    regime = "endemic" if p.tau > tau_c else "extinction"
    return ThresholdReport(p.tau, tau_c, rho, float(lambda1), regime)


@dataclass(frozen=True, eq=False)
class EquilibriumPoint:
    kind: str  # "DFE" or "endemic"
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    residual: float
    iterations: int = 0

    @property
    def state(self) -> MeanFieldState:
        return MeanFieldState(self.S, self.I, self.R)

    def mean_infected(self, weights: np.ndarray | None = None) -> float:
        if weights is None:
            return float(self.I.mean())
        w = np.asarray(weights, dtype=float)
        return float(self.I @ w / w.sum())

    def as_dict(self) -> dict[str, object]:
        return {"kind": self.kind, "mean_S": float(self.S.mean()), "mean_I": float(self.I.mean()),
                "mean_R": float(self.R.mean()), "min_I": float(self.I.min()), "max_I": float(self.I.max()),
                "residual": self.residual, "iterations": self.iterations}


def _residual(M, S, I, R, p: EpidemicParams) -> float:
    x = M @ I
    dS = -S * x + p.gamma * R - p.sigma * S
    dI = S * x - p.delta * I
    dR = p.delta * I - p.gamma * R + p.sigma * S
    return float(max(np.abs(dS).max(), np.abs(dI).max(), np.abs(dR).max()))


def disease_free_equilibrium(n: int, p: EpidemicParams) -> EquilibriumPoint:
    r0 = p.sigma / (p.gamma + p.sigma)
    return EquilibriumPoint("DFE", np.full(n, 1.0 - r0), np.zeros(n), np.full(n, r0), 0.0)


def endemic_equilibrium(structure, p: EpidemicParams, tol: float = 1e-12, omega: float = 0.5,
                        max_iter: int = 1_000_000) -> EquilibriumPoint:
    """Positive equilibrium by damped fixed-point iteration.

    With ``x = M I`` the equilibrium satisfies
    ``I = gamma x / (delta (x (1 + gamma/delta) + gamma + sigma))``; S and R
    follow in closed form.  The iteration ``I <- (1-omega) I + omega map(I)``
    halves ``omega`` when successive updates point in opposite directions
    and stops once
    ``max|map(I) - I| < tol``.  At that point the vector-field residual is at
    most ``(delta + gamma) * tol``.

    Raises
    ------
    BelowThresholdError
        If ``gamma/(gamma+sigma) * lambda1(M) <= delta``; the DFE is then the
        only equilibrium.
    ConvergenceError
        After ``max_iter`` iterations.
    """
    M = infection_operator(structure, p)
    lam = spectral_radius(M).lambda1
    if not p.gamma / (p.gamma + p.sigma) * lam > p.delta:
        raise BelowThresholdError("below threshold; unique equilibrium is DFE")
    n = M.shape[0]
    g_, d_, s_ = p.gamma, p.delta, p.sigma

    def fp_map(I):
        x = M @ I
        return g_ * x / (d_ * (x * (1.0 + g_ / d_) + g_ + s_))

    I = np.full(n, min(1.0 - s_ / (g_ + s_), 0.5) * 0.1)
    prev = np.zeros(n)
    step = np.inf
    for it in range(1, max_iter + 1):
        update = fp_map(I) - I
        step = float(np.max(np.abs(update)))
        if step < tol:
            I = I + update
            break
        if float(update @ prev) < 0:
            omega = max(omega / 2.0, 1e-6)
        prev = update
        I = I + omega * update
    else:
        raise ConvergenceError(f"fixed-point iteration stalled (last update {step:.3e})", step, max_iter)
    x = M @ I
    S = g_ / (x * (1.0 + g_ / d_) + g_ + s_)
    R = 1.0 - I - S
    return EquilibriumPoint("endemic", S, I, R, _residual(M, S, I, R, p), it)


def _eq_scalars(eq) -> tuple[float, float]:
    if isinstance(eq, EquilibriumPoint):
        return float(eq.I[0]), float(eq.R[0])
    i, r = eq
    return float(i), float(r)


def lyapunov_V(I, R, eq, p: EpidemicParams, degree: int):
    """c (I - I* - I* ln(I/I*)) + (R - R*)^2 / 2 with c = (delta - sigma)/(beta d).

    For the two-variable regular-graph system; ``eq`` is the endemic
    EquilibriumPoint or an ``(I*, R*)`` pair.
    """
    if not p.delta > p.sigma:
        raise ValueError("needs delta > sigma")
    I = np.asarray(I, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.any(I <= 0):
        raise ValueError("V is defined only for I > 0")
    i_s, r_s = _eq_scalars(eq)
    c = (p.delta - p.sigma) / (p.beta * degree)
    V = c * (I - i_s - i_s * np.log(I / i_s)) + 0.5 * (R - r_s) ** 2
    return float(V) if V.ndim == 0 else V


def lyapunov_dVdt(I, R, eq, p: EpidemicParams):
    """Closed-form derivative of V along the flow: -(delta-sigma)(I-I*)^2 - (gamma+sigma)(R-R*)^2."""
    i_s, r_s = _eq_scalars(eq)
    I, R = np.asarray(I, dtype=float), np.asarray(R, dtype=float)
    out = -(p.delta - p.sigma) * (I - i_s) ** 2 - (p.gamma + p.sigma) * (R - r_s) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GlobalConditionReport:
    holds: bool
    lhs: float
    rhs: float
    branch: str | None  # "a", "b", or None when delta < sigma


def check_global_condition_a(eq: EquilibriumPoint, p: EpidemicParams, lambda1: float) -> GlobalConditionReport:
    """Sufficient condition for global stability of the endemic point.

    Branch ``a`` (delta > sigma) compares ``lambda1`` with
    ``(1/beta) min(delta I*/S*^2) min(S*/(1-S*))``.  With delta == sigma the
    ``b`` branch applies and holds unconditionally.
    """
    S, I = eq.S, eq.I
    rhs = float((1.0 / p.beta) * np.min(p.delta * I / S**2) * np.min(S / (1.0 - S)))
    if p.delta == p.sigma:
        return GlobalConditionReport(True, float(lambda1), rhs, "b")
    if p.delta < p.sigma:
        return GlobalConditionReport(False, float(lambda1), rhs, None)
    return GlobalConditionReport(bool(lambda1 < rhs), float(lambda1), rhs, "a")


def correlation_gap(g, p: EpidemicParams, x0, t_grid: Sequence[float]) -> np.ndarray:
    """Exact P(X_i=I) minus mean-field I_i on ``t_grid`` (small graphs only).

    Positive entries are violations of the conjectured upper-bound property
    of the mean-field approximation; they are reported, not treated as errors.
    """
    from . import exact_markov as em

    x0 = np.asarray(getattr(x0, "states", x0), dtype=np.int64)
    Q = em.build_generator(g, p)
    v0 = np.zeros(Q.n_states)
    v0[em.encode(x0)] = 1.0
    exact = em.marginal_infection_probabilities(em.solve_master_equation(Q, v0, t_grid), x0.size)
    y0 = MeanFieldState((x0 == 0).astype(float), (x0 == 1).astype(float), (x0 == 2).astype(float))
    traj = integrate("full", y0, np.concatenate([[0.0], np.asarray(t_grid, float)])
                     if t_grid[0] > 0 else t_grid, p, g)
    mf = traj.I[-len(t_grid):]
    return exact - mf


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Columns t, S_1..S_n, I_1..I_n, R_1..R_n (cell-indexed for quotient runs)."""
    from .io import write_csv

    k = traj.n
    prefix = "cell_" if traj.system == "quotient" else ""
    header = ["t"] + [f"{prefix}{c}_{i + 1}" for c in "SIR" for i in range(k)]
    write_csv(path, header, np.column_stack([traj.t, traj.S, traj.I, traj.R]))
