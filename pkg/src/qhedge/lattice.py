"""Dyadic path lattice for a single stock, cells around lattice paths, and payoffs.

Grid values are stored as integer numerators at scale ``2**-n`` so that grid
membership and the half-open cell conventions are decided exactly.  Paths are
enumerated in lexicographic order of their per-time grid indices; every
downstream vector (probabilities, tests, payoffs) uses this order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import ConfigurationError, DomainError

PAYOFF_KINDS = ("call", "put", "power", "lookback-max", "table")


def _fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value)


@dataclass(frozen=True)
class PayoffSpec:
    """A terminal payoff as a function of the whole price path.

    ``table`` payoffs carry one value per lattice path (lattice order) and can
    only be evaluated on lattice paths.
    """

    kind: str
    strike: float | None = None
    exponent: float | None = None
    values: tuple | None = None

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ConfigurationError(f"unknown payoff kind {self.kind!r}; expected one of {PAYOFF_KINDS}")
        if self.kind in ("call", "put") and self.strike is None:
            raise ConfigurationError(f"{self.kind} payoff needs a strike")
        if self.kind == "power" and self.exponent is None:
            raise ConfigurationError("power payoff needs an exponent")
        if self.kind == "table":
            if self.values is None:
                raise ConfigurationError("table payoff needs values")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def call(cls, strike):
        return cls("call", strike=float(strike))

    @classmethod
    def put(cls, strike):
        return cls("put", strike=float(strike))

    @classmethod
    def power(cls, exponent):
        return cls("power", exponent=float(exponent))

    @classmethod
    def lookback_max(cls):
        return cls("lookback-max")

    @classmethod
    def table(cls, values):
        return cls("table", values=tuple(values))

    def lipschitz(self, lower: float, upper: float) -> float | None:
        """Lipschitz constant in the sup-norm on paths with prices in ``[lower, upper]``.

        Returns None for table payoffs, whose constant must be supplied by the caller.
        """
        if self.kind in ("call", "put", "lookback-max"):
            return 1.0
        if self.kind == "power":
            e = self.exponent
            if e == 0:
                return 0.0
            if e >= 1:
                return abs(e) * max(abs(lower), abs(upper)) ** (e - 1)
            if lower <= 0:
                return math.inf
            return abs(e) * min(lower, upper) ** (e - 1)
        return None


@dataclass(frozen=True)
class MarketSpec:
    """One-stock semi-static market on ``[a_t, b_t]``, ``t = 0..T``, with ``S_0 = 1``.

    ``lower`` and ``upper`` may have length ``T`` (times 1..T) or ``T + 1``.
    """

    horizon: int
    level: int
    lower: tuple
    upper: tuple
    lam: float = 0.01
    options: tuple = ()
    prices: tuple = ()
    claim: PayoffSpec = field(default_factory=lambda: PayoffSpec.power(2))

    def __post_init__(self):
        T, n = self.horizon, self.level
        if not isinstance(T, (int, np.integer)) or T < 1:
            raise ConfigurationError(f"horizon must be an integer >= 1, got {T!r}")
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ConfigurationError(f"level must be an integer >= 1, got {n!r}")
        lo = [_fraction(v) for v in self.lower]
        hi = [_fraction(v) for v in self.upper]
        if len(lo) == T:
            lo = [Fraction(1)] + lo
        if len(hi) == T:
            hi = [Fraction(1)] + hi
        if len(lo) != T + 1 or len(hi) != T + 1:
            raise ConfigurationError(f"need {T} or {T + 1} price bounds per side")
        if lo[0] != 1 or hi[0] != 1:
            raise ConfigurationError("a_0 and b_0 must both equal 1")
        for t in range(1, T + 1):
            if not lo[t] < lo[t - 1]:
                raise ConfigurationError(f"a_{t} = {lo[t]} must be below a_{t - 1} = {lo[t - 1]}")
            if not hi[t] > hi[t - 1]:
                raise ConfigurationError(f"b_{t} = {hi[t]} must exceed b_{t - 1} = {hi[t - 1]}")
        if lo[T] < 0:
            raise ConfigurationError(f"a_{T} = {lo[T]} must be non-negative")
        scale = 2**n
        for t in range(1, T + 1):
            for name, v in (("a", lo[t]), ("b", hi[t])):
                if (v * scale).denominator != 1:
                    raise ConfigurationError(f"{name}_{t} = {v} is not on the 2^-{n} grid")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))
        if not self.lam > 0:
            raise ConfigurationError(f"lam must be positive, got {self.lam}")
        if len(self.options) != len(self.prices):
            raise ConfigurationError("options and prices must have the same length")
        object.__setattr__(self, "options", tuple(self.options))
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))

    def with_level(self, level: int) -> "MarketSpec":
        return MarketSpec(self.horizon, level, self.lower, self.upper, self.lam,
                          self.options, self.prices, self.claim)

    def without_options(self) -> "MarketSpec":
        return MarketSpec(self.horizon, self.level, self.lower, self.upper, self.lam, (), (), self.claim)

    @property
    def n_options(self) -> int:
        return len(self.options)


class Interval(NamedTuple):
    lo: Fraction
    hi: Fraction
    lo_closed: bool
    hi_closed: bool

    def __contains__(self, v) -> bool:
        v = _fraction(v)
        above = v >= self.lo if self.lo_closed else v > self.lo
        below = v <= self.hi if self.hi_closed else v < self.hi
        return above and below

    def __str__(self):
        return f"{'[' if self.lo_closed else '('}{float(self.lo)}, {float(self.hi)}{']' if self.hi_closed else ')'}"


def k_interval(x, y, level: int) -> Interval:
    """Cell of width ``2**-level`` around ``y`` reached from previous price ``x``.

    Closed when ``y == x``, open below when ``y > x``, open above when ``y < x``.
    """
    x, y = _fraction(x), _fraction(y)
    h = Fraction(1, 2 ** (level + 1))
    if y == x:
        return Interval(y - h, y + h, True, True)
    if y > x:
        return Interval(y - h, y + h, False, True)
    return Interval(y - h, y + h, True, False)


@dataclass(frozen=True, eq=False)
class PathLattice:
    """Enumeration of the lattice paths ``(S_1, ..., S_T)``.

    ``grids[t]`` holds the integer numerators of the grid at time ``t``
    (``grids[0] == [2**n]``).
    """

    horizon: int
    level: int
    grids: tuple
    spec: MarketSpec | None = None

    @property
    def scale(self) -> int:
        return 2**self.level

    @property
    def step(self) -> float:
        return 1.0 / self.scale

    @property
    def half_width(self) -> float:
        return 0.5 / self.scale

    @cached_property
    def sizes(self) -> tuple:
        return tuple(len(g) for g in self.grids[1:])

    @property
    def n_paths(self) -> int:
        return int(np.prod(self.sizes))

    @cached_property
    def numerators(self) -> np.ndarray:
        """``(n_paths, T + 1)`` integer array including the initial price."""
        prod = itertools.product(*[g.tolist() for g in self.grids[1:]])
        body = np.array(list(prod), dtype=np.int64).reshape(self.n_paths, self.horizon)
        return np.hstack([np.full((self.n_paths, 1), self.scale, dtype=np.int64), body])

    @cached_property
    def prices(self) -> np.ndarray:
        """``(n_paths, T + 1)`` float price array, column 0 equal to 1."""
        return self.numerators / float(self.scale)

    def grid_values(self, t: int) -> np.ndarray:
        return self.grids[t] / float(self.scale)

    @cached_property
    def _index(self) -> dict:
        return {tuple(row[1:].tolist()): i for i, row in enumerate(self.numerators)}

    def index(self, path: Sequence[float]) -> int:
        """Index of a lattice path given by its prices ``S_1..S_T``."""
        nums = []
        for v in path:
            q = _fraction(v) * self.scale
            if q.denominator != 1:
                raise DomainError(f"{v} is not a grid value at level {self.level}")
            nums.append(int(q))
        try:
            return self._index[tuple(nums)]
        except KeyError:
            raise DomainError(f"{tuple(path)} is not a lattice path") from None

    def path(self, index: int) -> tuple:
        return tuple(float(v) for v in self.prices[index, 1:])

    @cached_property
    def nodes(self) -> tuple:
        """Non-terminal nodes as ``(t, prefix_numerators)`` in time-then-lexicographic order."""
        out = [(0, ())]
        for t in range(1, self.horizon):
            for pre in itertools.product(*[g.tolist() for g in self.grids[1:t + 1]]):
                out.append((t, tuple(pre)))
        return tuple(out)

    def node_span(self, node) -> slice:
        """Contiguous slice of path indices passing through ``node``."""
        t, pre = node
        span = int(np.prod(self.sizes[t:]))
        pos = 0
        for s, num in enumerate(pre, start=1):
            pos = pos * self.sizes[s - 1] + int(num - self.grids[s][0])
        return slice(pos * span, (pos + 1) * span)

    def node_price(self, node) -> float:
        t, pre = node
        return (pre[-1] if pre else self.scale) / float(self.scale)

    @cached_property
    def increments(self) -> np.ndarray:
        """``(n_paths, T)`` array of ``S_{t+1} - S_t``."""
        return np.diff(self.prices, axis=1)


def build_lattice(spec: MarketSpec) -> PathLattice:
    scale = 2**spec.level
    grids = [np.array([scale], dtype=np.int64)]
    for t in range(1, spec.horizon + 1):
        lo = spec.lower[t] * scale
        hi = spec.upper[t] * scale
        if lo.denominator != 1 or hi.denominator != 1:
            raise ConfigurationError(f"bounds at t={t} are not on the 2^-{spec.level} grid")
        grids.append(np.arange(int(lo), int(hi) + 1, dtype=np.int64))
    lattice = PathLattice(spec.horizon, spec.level, tuple(grids), spec)
    if spec.claim is not None:
        f = payoff_vector(spec.claim, lattice)
        if np.any(f < 0):
            raise ConfigurationError("claim must be non-negative on every lattice path")
    return lattice


def cell(lattice: PathLattice, path: Sequence[float]) -> list:
    """Per-time intervals whose product is the cell of a lattice path."""
    lattice.index(path)
    prev = Fraction(1)
    out = []
    for v in path:
        y = _fraction(v)
        out.append(k_interval(prev, y, lattice.level))
        prev = y
    return out


def _snap_step(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    # u and x in grid units; subtractions below are exact in binary floating point
    diff = u - x
    up = np.ceil(u - 0.5)
    down = np.floor(u + 0.5)
    return np.where(np.abs(diff) <= 0.5, x, np.where(diff > 0, up, down))


def snap_numerators(lattice: PathLattice, paths: np.ndarray) -> np.ndarray:
    """Vectorised snap of ``(k, T)`` continuum paths to ``(k, T)`` integer numerators."""
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    if paths.shape[1] != lattice.horizon:
        raise DomainError(f"paths must have {lattice.horizon} coordinates")
    scale = float(lattice.scale)
    out = np.empty(paths.shape, dtype=np.int64)
    prev = np.full(paths.shape[0], scale)
    for t in range(lattice.horizon):
        col = paths[:, t]
        lo = lattice.grids[t + 1][0] / scale
        hi = lattice.grids[t + 1][-1] / scale
        bad = (col < lo) | (col > hi) | ~np.isfinite(col)
        if bad.any():
            v = col[np.argmax(bad)]
            raise DomainError(f"price {v} at t={t + 1} lies outside [{lo}, {hi}]")
        u = np.ldexp(col, lattice.level)
        nxt = _snap_step(u, prev)
        out[:, t] = nxt.astype(np.int64)
        prev = nxt
    return out


def snap_indices(lattice: PathLattice, paths: np.ndarray) -> np.ndarray:
    nums = snap_numerators(lattice, paths)
    idx = np.zeros(nums.shape[0], dtype=np.int64)
    for t in range(lattice.horizon):
        idx = idx * lattice.sizes[t] + (nums[:, t] - lattice.grids[t + 1][0])
    return idx


def snap(lattice: PathLattice, continuum_path: Sequence[float]) -> tuple:
    """Lattice path whose cell contains ``continuum_path``."""
    nums = snap_numerators(lattice, np.asarray(continuum_path, dtype=float)[None, :])[0]
    return tuple(float(v) / lattice.scale for v in nums)


def evaluate(payoff: PayoffSpec, path: Sequence[float], lattice: PathLattice | None = None) -> float:
    """Payoff of one path ``(S_1, ..., S_T)``."""
    s = np.asarray(path, dtype=float)
    if payoff.kind == "table":
        if lattice is None:
            raise DomainError("table payoffs need the lattice they were tabulated on")
        return float(payoff.values[lattice.index(path)])
    return float(_evaluate_rows(payoff, s[None, :])[0])


def _evaluate_rows(payoff: PayoffSpec, s: np.ndarray) -> np.ndarray:
    last = s[:, -1]
    if payoff.kind == "call":
        return np.maximum(last - payoff.strike, 0.0)
    if payoff.kind == "put":
        return np.maximum(payoff.strike - last, 0.0)
    if payoff.kind == "power":
        return last**payoff.exponent
    if payoff.kind == "lookback-max":
        return np.maximum(s.max(axis=1), 1.0)
    raise DomainError(f"cannot evaluate {payoff.kind} payoff on arbitrary paths")


def evaluate_paths(payoff: PayoffSpec, paths: np.ndarray) -> np.ndarray:
    """Payoffs of ``(k, T)`` continuum paths; table payoffs are rejected."""
    return _evaluate_rows(payoff, np.atleast_2d(np.asarray(paths, dtype=float)))


def payoff_vector(payoff: PayoffSpec, lattice: PathLattice) -> np.ndarray:
    if payoff.kind == "table":
        v = np.asarray(payoff.values, dtype=float)
        if v.size != lattice.n_paths:
            raise ConfigurationError(f"table payoff has {v.size} values for {lattice.n_paths} paths")
        return v
    return _evaluate_rows(payoff, lattice.prices[:, 1:])
