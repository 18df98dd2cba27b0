"""From the lattice back to the continuum: strategy extension, error slack and evaluation."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DomainError
from .lattice import PathLattice, PayoffSpec, evaluate_paths, snap_numerators
from .pricing import MartingaleCone, Strategy
from .quantile import success_ratio


def target_adjust(alpha: float, lam: float, T: int) -> float:
    """Lattice target needed so the continuum ratio still reaches ``alpha`` after the lambda-modification."""
    if not 0 <= alpha <= 1:
        raise DomainError(f"target ratio must lie in [0, 1], got {alpha}")
    if not lam > 0:
        raise ConfigurationError(f"lam must be positive, got {lam}")
    adj = alpha + 1.0 - (1.0 / (1.0 + lam)) ** T
    if adj > 1.0 + 1e-15:
        raise ConfigurationError(
            f"adjusted target {adj:.6g} exceeds 1; lower lam or the target ratio")
    return min(adj, 1.0)


@dataclass(frozen=True)
class ErrorBudget:
    C1: float
    C2: float
    C3: float
    T: int
    k: int
    n: int
    two_sided: bool = False
    alpha_prime: float | None = None
    d: int = 1

    @property
    def M(self) -> float:
        return self.C1 * (self.T * self.d + self.C2 * self.k) + self.C3

    @property
    def slack(self) -> float:
        return self.M / 2.0 ** self.n


def error_budget(C3: float, C2: float, C1: float, T: int, k: int, n: int,
                 two_sided: bool = False, alpha_prime: float | None = None) -> ErrorBudget:
    """Slack ``M / 2^n``; ``two_sided`` records the caller's assertion that moves of ``c`` are always possible."""
    for name, v in (("C1", C1), ("C2", C2), ("C3", C3)):
        if v < 0:
            raise ConfigurationError(f"{name} must be non-negative, got {v}")
    return ErrorBudget(float(C1), float(C2), float(C3), int(T), int(k), int(n), two_sided, alpha_prime)


def strategy_bound(strategy: Strategy) -> float:
    """Joint bound on the stock and option positions of a solved strategy."""
    vals = np.concatenate([np.abs(strategy.holdings), np.abs(strategy.options)])
    return float(vals.max(initial=0.0))


def payoff_lipschitz(payoff: PayoffSpec, lattice: PathLattice) -> float:
    lo = float(min(lattice.spec.lower))
    hi = float(max(lattice.spec.upper))
    L = payoff.lipschitz(lo, hi)
    if L is None:
        raise ConfigurationError(f"no Lipschitz constant known for payoff kind {payoff.kind!r}; supply one")
    return L


def _node_offsets(lattice: PathLattice) -> np.ndarray:
    sizes = lattice.sizes
    return np.cumsum([0] + [int(np.prod(sizes[:t])) for t in range(lattice.horizon)])[:-1]


class ExtendedStrategy:
    """Piecewise-constant extension: a continuum path trades as the lattice path it snaps to."""

    def __init__(self, strategy: Strategy, cone: MartingaleCone, options=None):
        self.strategy = strategy
        self.options = tuple(strategy.lattice.spec.options if options is None else options)
        if len(self.options) != strategy.options.size:
            raise ConfigurationError("one option payoff per static position is required")
        self.lattice = strategy.lattice
        self.cone = cone
        lat = self.lattice
        self._offsets = _node_offsets(lat)
        supported = np.zeros(len(lat.nodes), dtype=bool)
        supported[cone.node_ids] = True
        self._node_supported = supported

    def node_ids(self, paths) -> tuple[np.ndarray, np.ndarray]:
        """Node index visited at each time and whether the whole prefix so far is supported."""
        lat = self.lattice
        paths = np.atleast_2d(np.asarray(paths, dtype=float))
        nums = snap_numerators(lat, paths)
        K, T = nums.shape
        ids = np.zeros((K, T), dtype=np.int64)
        alive = np.ones((K, T), dtype=bool)
        prefix = np.zeros(K, dtype=np.int64)
        ok = np.ones(K, dtype=bool)
        for t in range(T):
            ids[:, t] = self._offsets[t] + prefix
            ok &= self._node_supported[ids[:, t]]
            alive[:, t] = ok
            prefix = prefix * lat.sizes[t] + (nums[:, t] - lat.grids[t + 1][0])
        return ids, alive

    def positions(self, paths) -> np.ndarray:
        """Stock holdings ``H_t`` along each path; zero from the first unsupported node on."""
        ids, alive = self.node_ids(paths)
        return np.where(alive, self.strategy.holdings[ids], 0.0)

    def wealth(self, paths, capital: float | None = None) -> np.ndarray:
        """Terminal wealth ``x + (H.S)_T + q(phi - p)`` on continuum paths."""
        paths = np.atleast_2d(np.asarray(paths, dtype=float))
        x = self.strategy.capital if capital is None else capital
        full = np.hstack([np.ones((paths.shape[0], 1)), paths])
        gains = np.sum(self.positions(paths) * np.diff(full, axis=1), axis=1)
        w = x + gains
        q = self.strategy.options
        if q.size:
            phi = np.array([evaluate_paths(o, paths) for o in self.options])
            w = w + (phi.T - self.cone.prices) @ q
        return w


def extend_strategy(strategy: Strategy, cone: MartingaleCone, options=None) -> ExtendedStrategy:
    return ExtendedStrategy(strategy, cone, options)


@dataclass(frozen=True)
class SuccessEvaluation:
    per_model: np.ndarray
    worst: float


def evaluate_success(extended: ExtendedStrategy, capital: float, claim: PayoffSpec,
                     base_models) -> SuccessEvaluation:
    """Exact expected success ratio of the extended strategy under each atomic model."""
    ratios = []
    for model in base_models:
        G = np.maximum(extended.wealth(model.paths, capital), 0.0)
        F = evaluate_paths(claim, model.paths)
        ratios.append(float(model.weights @ success_ratio(G, F)))
    r = np.array(ratios)
    return SuccessEvaluation(r, float(r.min(initial=np.inf)))


def verify_jc_atoms(base_models, c: float) -> bool:
    """Whether every charged continuum prefix has some model moving up by ``c`` and some moving down by ``c``."""
    if not c > 0:
        raise ConfigurationError("c must be positive")
    up, down = defaultdict(bool), defaultdict(bool)
    charged = set()
    for model in base_models:
        full = np.hstack([np.ones((model.paths.shape[0], 1)), model.paths])
        for row, w in zip(full, model.weights):
            if w <= 0:
                continue
            for t in range(model.paths.shape[1]):
                key = (t, tuple(row[1:t + 1]))
                charged.add(key)
                move = row[t + 1] - row[t]
                up[key] |= move >= c
                down[key] |= move <= -c
    return all(up[k] and down[k] for k in charged)
