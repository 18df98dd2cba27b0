"""Martingale measures on the lattice: cone, no-arbitrage certificate, superhedging."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import linprog
from .exceptions import ArbitrageError, ConfigurationError, SolverError
from .lattice import PathLattice, payoff_vector

NA_TOL = 1e-9
Q_BOX_MULTIPLE = 1e3
BOUND_ACTIVE_TOL = 1e-9


class BoundActiveWarning(UserWarning):
    """A strategy box bound is tight at the LP optimum."""


def hedge_matrix(lattice: PathLattice) -> np.ndarray:
    """``G[path, node]`` = price increment taken at ``node`` along ``path`` (zero off the path)."""
    G = np.zeros((lattice.n_paths, len(lattice.nodes)))
    inc = lattice.increments
    for j, node in enumerate(lattice.nodes):
        sl = lattice.node_span(node)
        G[sl, j] = inc[sl, node[0]]
    return G


@dataclass
class MartingaleCone:
    """Homogeneous rows ``rows @ mu = 0`` over measures on the supported paths.

    ``columns`` are the supported path indices; ``node_ids`` the nodes owning a
    martingale row.  Option rows follow the node rows.
    """

    lattice: PathLattice
    support: np.ndarray
    columns: np.ndarray
    node_ids: np.ndarray
    node_rows: np.ndarray
    option_rows: np.ndarray
    option_payoffs: np.ndarray
    prices: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        return np.vstack([self.node_rows, self.option_rows])

    @property
    def n_support(self) -> int:
        return self.columns.size

    @property
    def n_options(self) -> int:
        return self.option_rows.shape[0]

    @cached_property
    def certificate(self) -> "NACertificate":
        return certify_na(self)

    def restrict(self, f) -> np.ndarray:
        """Values of a full-lattice vector on the supported paths."""
        return np.asarray(f, dtype=float)[self.columns]

    def without_options(self) -> "MartingaleCone":
        return MartingaleCone(self.lattice, self.support, self.columns, self.node_ids, self.node_rows,
                              np.zeros((0, self.n_support)), np.zeros((0, self.lattice.n_paths)),
                              np.zeros(0))

    def residual(self, mu) -> float:
        mu = np.asarray(mu, dtype=float)
        return float(np.max(np.abs(self.rows @ mu), initial=0.0))


@dataclass(frozen=True)
class NACertificate:
    certified: bool
    measure: np.ndarray | None
    epsilon: float

    def __bool__(self):
        return self.certified


@dataclass
class Strategy:
    """Semi-static strategy: capital, per-node stock holdings and static option positions."""

    capital: float
    holdings: np.ndarray
    options: np.ndarray
    lattice: PathLattice = field(repr=False)
    active_bounds: tuple = ()

    def holding(self, node) -> float:
        return float(self.holdings[self.lattice.nodes.index(node)])

    def gains(self) -> np.ndarray:
        """``(H.S)_T`` on every lattice path."""
        return hedge_matrix(self.lattice) @ self.holdings

    def terminal_wealth(self, option_payoffs: np.ndarray, prices: np.ndarray) -> np.ndarray:
        w = self.capital + self.gains()
        if self.options.size:
            w = w + (option_payoffs.T - prices) @ self.options
        return w


def build_cone(lattice: PathLattice, options=(), prices=(), support=None) -> MartingaleCone:
    """Martingale and option-consistency rows restricted to ``support``."""
    N = lattice.n_paths
    support = np.ones(N, dtype=bool) if support is None else np.asarray(support, dtype=bool)
    if support.shape != (N,) or not support.any():
        raise ConfigurationError("support mask must be a non-empty boolean vector over the lattice paths")
    if len(options) != len(prices):
        raise ConfigurationError("one price per option is required")
    cols = np.flatnonzero(support)
    G = hedge_matrix(lattice)[cols]
    keep = []
    for j, node in enumerate(lattice.nodes):
        sl = lattice.node_span(node)
        if support[sl].any():
            keep.append(j)
    keep = np.array(keep, dtype=np.int64)
    node_rows = G[:, keep].T
    payoffs = np.array([payoff_vector(o, lattice) for o in options]).reshape(len(options), N)
    p = np.asarray(prices, dtype=float).reshape(len(options))
    option_rows = payoffs[:, cols] - p[:, None]
    return MartingaleCone(lattice, support, cols, keep, node_rows, option_rows, payoffs, p)


def certify_na(cone: MartingaleCone) -> NACertificate:
    """Largest uniform lower bound on a normalised martingale measure in the cone."""
    m, k = cone.rows.shape
    rows = cone.rows
    # Q = eps + r with eps free, r >= 0
    A_eq = np.vstack([np.hstack([rows.sum(axis=1, keepdims=True), rows]),
                      np.hstack([[k], np.ones(k)])[None, :]])
    b_eq = np.append(np.zeros(m), 1.0)
    c = np.zeros(k + 1)
    c[0] = -1.0
    lb = np.zeros(k + 1)
    lb[0] = -np.inf
    sol = linprog.solve(linprog.LinearProgram(c, A_eq=A_eq, b_eq=b_eq, lb=lb))
    if sol.status == linprog.INFEASIBLE:
        return NACertificate(False, None, -np.inf)
    if not sol.optimal:
        raise SolverError(f"no-arbitrage LP ended {sol.status}")
    eps = float(sol.x[0])
    Q = eps + sol.x[1:]
    return NACertificate(eps > NA_TOL, Q, eps)


def _require_certified(cone: MartingaleCone):
    cert = cone.certificate
    if not cert.certified:
        raise ArbitrageError(
            "the lattice market is not arbitrage-free: no strictly positive martingale measure "
            f"consistent with the option prices (max-min weight {cert.epsilon:.3g})")


def superhedge_measure(f, cone: MartingaleCone) -> tuple[float, np.ndarray]:
    """``max E_Q[f]`` over the closed set of normalised measures in the cone, with a maximiser."""
    _require_certified(cone)
    fs = cone.restrict(f)
    k = cone.n_support
    A_eq = np.vstack([cone.rows, np.ones((1, k))])
    b_eq = np.append(np.zeros(cone.rows.shape[0]), 1.0)
    sol = linprog.solve(linprog.LinearProgram(-fs, A_eq=A_eq, b_eq=b_eq))
    if not sol.optimal:
        raise SolverError(f"superhedging LP ended {sol.status}")
    return -sol.fun, sol.x


def superhedge_price(f, cone: MartingaleCone) -> float:
    return superhedge_measure(f, cone)[0]


def market_min_move(lattice: PathLattice, support=None) -> float:
    """Smallest of the largest up and down moves over nodes with a non-trivial supported continuation."""
    support = np.ones(lattice.n_paths, dtype=bool) if support is None else np.asarray(support, bool)
    inc = lattice.increments
    best = np.inf
    for node in lattice.nodes:
        sl = lattice.node_span(node)
        moves = inc[sl, node[0]][support[sl]]
        if moves.size == 0 or np.all(moves == 0):
            continue
        best = min(best, max(moves.max(), 0.0), max(-moves.min(), 0.0))
    return float(best)


def period_ranges(lattice: PathLattice) -> np.ndarray:
    inc = lattice.increments
    return np.abs(inc).max(axis=0) if inc.size else np.zeros(0)


def strategy_box_bounds(D: float, c: float, T: int, ranges=None, option_spread: float | None = None,
                        q_multiple: float = Q_BOX_MULTIPLE,
                        option_exposure: float = 0.0) -> tuple[np.ndarray, float]:
    """Per-period stock bounds and a common option bound.

    ``H_box[t] = D_t / c`` with ``D_t = D' + sum_{s<t} H_box[s] * ranges[s]``.
    The option bound ``q_multiple * D / option_spread`` is a heuristic; ``D'``
    adds ``q_box * option_exposure`` (the largest static-position swing per
    unit of ``q``) to ``D``.
    """
    if not c > 0:
        raise ConfigurationError(f"minimum move c must be positive, got {c}")
    if D < 0:
        raise ConfigurationError("claim bound D must be non-negative")
    ranges = np.zeros(T) if ranges is None else np.broadcast_to(np.asarray(ranges, float), (T,))
    H = np.zeros(T)
    q_box = 0.0 if not option_spread else q_multiple * D / option_spread
    Dt = float(D) + q_box * option_exposure
    for t in range(T):
        H[t] = Dt / c
        Dt += H[t] * ranges[t]
    return H, q_box


def default_boxes(f, cone: MartingaleCone) -> tuple[np.ndarray, float]:
    lat = cone.lattice
    D = float(np.max(np.abs(cone.restrict(f)), initial=0.0))
    c = market_min_move(lat, cone.support)
    if not np.isfinite(c):
        return np.zeros(lat.horizon), 0.0
    spread, exposure = None, 0.0
    if cone.n_options:
        phi = cone.option_payoffs[:, cone.columns]
        spreads = phi.max(axis=1) - phi.min(axis=1)
        spread = float(spreads[spreads > 0].min()) if np.any(spreads > 0) else None
        exposure = float(np.abs(cone.option_rows).max(axis=1).sum())
    return strategy_box_bounds(D, c, lat.horizon, period_ranges(lat), spread, option_exposure=exposure)


def superhedge_strategy(f, cone: MartingaleCone, H_box=None, q_box=None) -> Strategy:
    """Cheapest semi-static superhedge of ``f`` on the supported paths, within box bounds."""
    _require_certified(cone)
    lat = cone.lattice
    fs = cone.restrict(f)
    if H_box is None or q_box is None:
        dH, dq = default_boxes(f, cone)
        H_box = dH if H_box is None else H_box
        q_box = dq if q_box is None else q_box
    H_box = np.broadcast_to(np.asarray(H_box, dtype=float), (lat.horizon,))
    n_nodes = len(lat.nodes)
    G = hedge_matrix(lat)[cone.columns]
    k = cone.n_options
    Phi = cone.option_rows.T  # (paths, options)
    node_box = np.array([H_box[t] for t, _ in lat.nodes])
    owned = np.zeros(n_nodes, dtype=bool)
    owned[cone.node_ids] = True
    node_box = np.where(owned, node_box, 0.0)
    # variables: x, H (n_nodes), q (k);  -(x + G H + Phi q) <= -f
    A_ub = -np.hstack([np.ones((fs.size, 1)), G, Phi])
    c = np.zeros(1 + n_nodes + k)
    c[0] = 1.0
    lb = np.concatenate([[-np.inf], -node_box, np.full(k, -q_box)])
    ub = np.concatenate([[np.inf], node_box, np.full(k, q_box)])
    sol = linprog.solve(linprog.LinearProgram(c, A_ub=A_ub, b_ub=-fs, lb=lb, ub=ub))
    if not sol.optimal:
        raise SolverError(f"superhedging strategy LP ended {sol.status}")
    H = sol.x[1:1 + n_nodes]
    q = sol.x[1 + n_nodes:]
    active = []
    for j in np.flatnonzero(owned):
        if node_box[j] > 0 and abs(abs(H[j]) - node_box[j]) <= BOUND_ACTIVE_TOL * max(1.0, node_box[j]):
            active.append(("H", lat.nodes[j]))
    for i in range(k):
        if q_box > 0 and abs(abs(q[i]) - q_box) <= BOUND_ACTIVE_TOL * max(1.0, q_box):
            active.append(("q", i))
    if active:
        warnings.warn(f"{len(active)} strategy bound(s) active at the optimum; the box may be binding",
                      BoundActiveWarning, stacklevel=2)
    return Strategy(float(sol.x[0]), H, q, lat, tuple(active))


def hedge_residual(strategy: Strategy, f, cone: MartingaleCone) -> float:
    """Smallest surplus of terminal wealth over ``f`` on the supported paths."""
    w = strategy.terminal_wealth(cone.option_payoffs, cone.prices)
    return float(np.min(cone.restrict(w) - cone.restrict(f)))
