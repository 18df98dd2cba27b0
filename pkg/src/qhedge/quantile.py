"""Maximal expected success ratio, its optimal test and the quantile hedging price.

The value ``V(x) = max_psi min_P E_P[psi]`` subject to ``sup_Q E_Q[f psi] <= x``
is computed as a single LP in the variables ``(P, mu, t)``::

    minimise  x * sum(mu) + sum(t)
    s.t.      P - mu * f <= t,  t >= 0,  P in the model set,  mu in the cone

where ``mu = a Q`` absorbs the multiplier ``a``.  The optimal test ``psi`` is
the dual of the ``P - mu f <= t`` rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linprog
from .exceptions import DomainError, ResourceLimitError, SolverError, StructuralError
from .models import ModelPolytope
from .pricing import (MartingaleCone, Strategy, _require_certified, hedge_matrix,
                      superhedge_price, superhedge_strategy)

DEFAULT_TOL = 1e-7
VALUE_TOL = 1e-12
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class SuccessTest:
    """Randomised test on the lattice paths; ``boundary`` marks the paths where it randomises."""

    psi: np.ndarray
    boundary: np.ndarray

    @property
    def randomisation(self) -> np.ndarray:
        return self.psi[self.boundary]


@dataclass(frozen=True)
class ValuePoint:
    x: float
    value: float
    a: float
    P: np.ndarray
    mu: np.ndarray
    test: SuccessTest
    basis: linprog.Basis | None = field(default=None, repr=False)

    @property
    def Q(self) -> np.ndarray | None:
        return self.mu / self.a if self.a > 0 else None


@dataclass
class QuantilePriceResult:
    alpha: float
    price: float
    point: ValuePoint
    modified_claim: np.ndarray
    strategy: Strategy | None
    achieved_ratio: float
    evaluations: int = 0


def success_ratio(Fp, f) -> np.ndarray:
    """Pathwise ratio ``min(F'/F, 1)``, equal to 1 where ``F = 0``."""
    Fp = np.asarray(Fp, dtype=float)
    f = np.asarray(f, dtype=float)
    out = np.ones_like(f)
    pos = f > 0
    out[pos] = np.minimum(np.maximum(Fp[pos], 0.0) / f[pos], 1.0)
    return out


def worst_case_ratio(Fp, f, polytope: ModelPolytope) -> float:
    return polytope.min_expectation(success_ratio(Fp, f))[0]


def _check_inputs(f, cone: MartingaleCone, polytope: ModelPolytope) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (cone.lattice.n_paths,):
        raise StructuralError(f"claim vector has shape {f.shape}, expected ({cone.lattice.n_paths},)")
    if np.any(f < 0):
        raise DomainError("claims must be non-negative")
    if polytope.n_paths != cone.lattice.n_paths:
        raise StructuralError("model set and cone live on different lattices")
    if np.any(polytope.support & ~cone.support):
        raise StructuralError("model set charges paths outside the cone support")
    return f


class ValueSolver:
    """The value LP for one claim, re-solved at varying capital with a warm-started basis."""

    def __init__(self, f, cone: MartingaleCone, polytope: ModelPolytope):
        _require_certified(cone)
        self.f = _check_inputs(f, cone, polytope)
        self.cone = cone
        self.polytope = polytope
        self.evaluations = 0
        cols = cone.columns
        fs = self.f[cols]
        k = cols.size
        if polytope.kind == "V":
            Pmap = polytope.vertices[:, cols].T
            nP = Pmap.shape[1]
            lbP, ubP = np.zeros(nP), np.full(nP, np.inf)
            extra_ub = np.zeros((0, nP))
            extra_b = np.zeros(0)
        else:
            Pmap = np.eye(k)
            nP = k
            lbP, ubP = polytope.lower[cols], polytope.upper[cols]
            A = polytope.A_ub if polytope.A_ub is not None else np.zeros((0, polytope.n_paths))
            extra_ub, extra_b = A[:, cols], polytope.b_ub
        self._Pmap = Pmap
        self._nP = nP
        m_c = cone.rows.shape[0]
        A_ub = np.vstack([
            np.hstack([Pmap, -np.diag(fs), -np.eye(k)]),
            np.hstack([extra_ub, np.zeros((extra_ub.shape[0], 2 * k))]),
        ])
        b_ub = np.concatenate([np.zeros(k), extra_b])
        A_eq = np.vstack([
            np.hstack([np.ones((1, nP)), np.zeros((1, 2 * k))]),
            np.hstack([np.zeros((m_c, nP)), cone.rows, np.zeros((m_c, k))]),
        ])
        b_eq = np.append(1.0, np.zeros(m_c))
        self._lb = np.concatenate([lbP, np.zeros(2 * k)])
        self._ub = np.concatenate([ubP, np.full(2 * k, np.inf)])
        self._A_ub, self._b_ub, self._A_eq, self._b_eq = A_ub, b_ub, A_eq, b_eq
        self._k = k
        self._basis = None

    def _cost(self, x):
        k = self._k
        return np.concatenate([np.zeros(self._nP), np.full(k, float(x)), np.ones(k)])

    def solve(self, x: float) -> ValuePoint:
        if not x >= 0:
            raise DomainError(f"capital must be non-negative, got {x}")
        lp = linprog.LinearProgram(self._cost(x), A_eq=self._A_eq, b_eq=self._b_eq,
                                   A_ub=self._A_ub, b_ub=self._b_ub, lb=self._lb, ub=self._ub)
        sol = linprog.solve(lp, basis=self._basis)
        self.evaluations += 1
        if not sol.optimal:
            raise SolverError(f"value LP ended {sol.status} at x = {x}")
        self._basis = sol.basis
        return self._point(x, sol)

    def _point(self, x, sol) -> ValuePoint:
        k, nP = self._k, self._nP
        cols = self.cone.columns
        N = self.cone.lattice.n_paths
        Ps = self._Pmap @ sol.x[:nP]
        mus = np.maximum(sol.x[nP:nP + k], 0.0)
        fs = self.f[cols]
        psi_s = np.clip(-sol.ub_duals[:k], 0.0, 1.0)
        psi_s[fs == 0] = 1.0
        P = np.zeros(N)
        mu = np.zeros(N)
        psi = np.ones(N)
        boundary = np.zeros(N, dtype=bool)
        P[cols], mu[cols], psi[cols] = Ps, mus, psi_s
        a = float(mus.sum())
        if a <= VALUE_TOL:  # round-off left by the simplex, not a live budget
            a = 0.0
            mu[:] = 0.0
            psi[:] = 1.0
        else:
            boundary[cols] = (np.abs(Ps - mus * fs) <= BOUNDARY_TOL) & (fs > 0)
        value = float(min(max(sol.fun, 0.0), 1.0))
        return ValuePoint(float(x), value, a, P, mu, SuccessTest(psi, boundary), sol.basis)


def value_function(x, f, cone: MartingaleCone, polytope: ModelPolytope) -> ValuePoint:
    return ValueSolver(f, cone, polytope).solve(x)


def value_curve(xs, f, cone, polytope) -> list:
    solver = ValueSolver(f, cone, polytope)
    return [solver.solve(x) for x in xs]


@dataclass
class SaddleReport:
    vacuous: bool
    cone_gap: float = 0.0
    model_gap: float = 0.0
    budget_gap: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_saddle(point: ValuePoint, f, polytope: ModelPolytope, cone: MartingaleCone,
                  tol: float = DEFAULT_TOL, psi=None) -> SaddleReport:
    """Check the optimality structure of a solved point (optionally for a replacement test ``psi``)."""
    psi = point.test.psi if psi is None else np.asarray(psi, dtype=float)
    if point.a <= 0:
        return SaddleReport(True)
    f = np.asarray(f, dtype=float)
    Q = point.mu / point.a
    own = float(Q @ (f * psi))
    best = superhedge_price(f * psi, cone)
    zmin = polytope.min_expectation(psi)[0]
    zown = float(point.P @ psi)
    rep = SaddleReport(False, best - own, zown - zmin, abs(own - point.x))
    if rep.cone_gap > tol:
        rep.violations.append(f"measure does not maximise the test cost (gap {rep.cone_gap:.3g})")
    if rep.model_gap > tol:
        rep.violations.append(f"model does not minimise the test power (gap {rep.model_gap:.3g})")
    if rep.budget_gap > tol:
        rep.violations.append(f"budget identity off by {rep.budget_gap:.3g}")
    return rep


def invert_price(alpha: float, f, cone: MartingaleCone, polytope: ModelPolytope,
                 tol: float = DEFAULT_TOL, solver: ValueSolver | None = None,
                 with_strategy: bool = True) -> QuantilePriceResult:
    """Smallest capital whose maximal success ratio reaches ``alpha``.

    Brackets the root on ``[0, superhedge price]``.  Concavity gives a lower
    bound from the supergradient ``a`` at either end and an upper bound from
    the chord; bisection takes over when a step makes poor progress.
    """
    if not 0 <= alpha <= 1:
        raise DomainError(f"target ratio must lie in [0, 1], got {alpha}")
    solver = solver or ValueSolver(f, cone, polytope)
    f = solver.f
    lo = solver.solve(0.0)
    if alpha <= lo.value + VALUE_TOL:
        return _result(alpha, lo, f, cone, polytope, solver, with_strategy)
    s = superhedge_price(f, cone)
    hi = solver.solve(s)
    if alpha > hi.value + tol:
        raise DomainError(f"target {alpha} exceeds the value {hi.value} at the superhedging price")
    if alpha > hi.value:
        alpha = hi.value
    lower = lo.x
    poor = False
    while True:
        if lo.a > 0:
            lower = max(lower, lo.x + (alpha - lo.value) / lo.a)
        if hi.a > 0:
            lower = max(lower, hi.x - (hi.value - alpha) / hi.a)
        lower = min(lower, hi.x)
        width = hi.x - lower
        if width <= tol:
            break
        if lower > lo.x + 0.5 * tol:
            x_new = lower
        else:
            x_new = 0.5 * (lower + hi.x)
            if hi.value > lo.value and not poor:
                xc = lo.x + (alpha - lo.value) * (hi.x - lo.x) / (hi.value - lo.value)
                if lower < xc < hi.x:
                    x_new = xc
        p = solver.solve(x_new)
        if p.value >= alpha - VALUE_TOL:
            hi = p
            if x_new <= lower:
                break
        else:
            lo = p
        poor = hi.x - max(lower, lo.x) > 0.5 * width
    return _result(alpha, hi, f, cone, polytope, solver, with_strategy)


def _result(alpha, point, f, cone, polytope, solver, with_strategy) -> QuantilePriceResult:
    Fp = f * point.test.psi
    strategy = superhedge_strategy(Fp, cone) if with_strategy else None
    return QuantilePriceResult(alpha, point.x, point, Fp, strategy,
                               worst_case_ratio(Fp, f, polytope), solver.evaluations)


def price_curve(alphas, f, cone, polytope, tol: float = DEFAULT_TOL,
                with_strategy: bool = False) -> list:
    """Quantile prices over a grid of targets, sharing one warm-started solver."""
    solver = ValueSolver(f, cone, polytope)
    return [invert_price(a, f, cone, polytope, tol, solver, with_strategy) for a in alphas]


# --- primal oracles ---------------------------------------------------------

def _robust_rows(alpha, f_s, polytope: ModelPolytope, cols, n_before, method):
    """Rows enforcing ``min_P E_P[ratio] >= alpha`` on ``F'`` variables placed after ``n_before`` columns."""
    k = cols.size
    pos = f_s > 0
    coef = np.where(pos, 1.0 / np.where(pos, f_s, 1.0), 0.0)
    verts = None
    if polytope.kind == "V":
        verts = polytope.vertices
    elif method in ("auto", "vertices"):
        try:
            verts = polytope.vertex_list()
        except ResourceLimitError:
            if method == "vertices":
                raise
    if verts is not None:
        Vs = verts[:, cols]
        A = np.hstack([np.zeros((Vs.shape[0], n_before)), -(Vs * coef)])
        b = -(alpha - Vs[:, ~pos].sum(axis=1))
        return A, b, None, None, 0
    # dual of  min r.P  s.t. sum P = 1, A P <= b, lower <= P <= upper
    Ah = polytope.A_ub[:, cols] if polytope.A_ub is not None else np.zeros((0, k))
    m = Ah.shape[0]
    lo, up = polytope.lower[cols], polytope.upper[cols]
    n_dual = 1 + m + 2 * k
    # variables appended: eta, zeta (m), beta (k), gamma (k)
    eq = np.hstack([np.zeros((k, n_before)), -np.diag(coef),
                    np.ones((k, 1)), -Ah.T, np.eye(k), -np.eye(k)])
    b_eq = np.where(pos, 0.0, 1.0)
    ub = np.concatenate([np.zeros(n_before + k), [-1.0], polytope.b_ub, -lo, up])[None, :]
    return ub, np.array([-alpha]), eq, b_eq, n_dual


def _quantile_primal(alpha, f, cone: MartingaleCone, polytope: ModelPolytope,
                     fixed_q=None, method: str = "auto") -> float:
    if not 0 <= alpha <= 1:
        raise DomainError(f"target ratio must lie in [0, 1], got {alpha}")
    f = _check_inputs(f, cone, polytope)
    lat = cone.lattice
    cols = cone.columns
    k = cols.size
    f_s = f[cols]
    Gm = hedge_matrix(lat)[cols][:, cone.node_ids]
    nH = Gm.shape[1]
    if fixed_q is None:
        Phi = cone.option_rows.T
        endow = np.zeros(k)
    else:
        fixed_q = np.asarray(fixed_q, dtype=float).reshape(cone.n_options)
        Phi = np.zeros((k, 0))
        endow = cone.option_payoffs[:, cols].T @ fixed_q if cone.n_options else np.zeros(k)
    nq = Phi.shape[1]
    n_before = 1 + nH + nq
    # -(x + G H + Phi q) + F' <= endow
    hedge = np.hstack([-np.ones((k, 1)), -Gm, -Phi, np.eye(k)])
    R_ub, r_b, R_eq, r_beq, n_dual = _robust_rows(alpha, f_s, polytope, cols, n_before, method)
    n = n_before + k + n_dual
    pad = lambda M: np.hstack([M, np.zeros((M.shape[0], n - M.shape[1]))])
    A_ub = np.vstack([pad(hedge), pad(R_ub)])
    b_ub = np.concatenate([endow, r_b])
    A_eq = pad(R_eq) if R_eq is not None else None
    lb = np.concatenate([np.full(n_before, -np.inf), np.zeros(k)])
    ub = np.concatenate([np.full(n_before, np.inf), f_s])
    if n_dual:
        m = n_dual - 1 - 2 * k
        lb = np.concatenate([lb, [-np.inf], np.zeros(m + 2 * k)])
        ub = np.concatenate([ub, np.full(n_dual, np.inf)])
    c = np.zeros(n)
    c[0] = 1.0
    sol = linprog.solve(linprog.LinearProgram(c, A_eq=A_eq, b_eq=r_beq, A_ub=A_ub, b_ub=b_ub, lb=lb, ub=ub))
    if not sol.optimal:
        raise SolverError(f"primal quantile LP ended {sol.status}")
    return float(sol.fun)


def direct_price_oracle(alpha, f, cone: MartingaleCone, polytope: ModelPolytope,
                        method: str = "auto") -> float:
    """Quantile price as the cheapest superhedge of some claim ``F' <= f`` with worst-case ratio ``alpha``."""
    _require_certified(cone)
    return _quantile_primal(alpha, f, cone, polytope, None, method)


def split_price(alpha, q, f, cone: MartingaleCone, polytope: ModelPolytope,
                method: str = "auto") -> float:
    """Quantile price using the stock only, with the static option endowment ``q`` held for free."""
    _require_certified(cone.without_options())
    return _quantile_primal(alpha, f, cone, polytope, q, method)


def split_grid_minimum(alpha, q_grid, f, cone: MartingaleCone, polytope: ModelPolytope) -> tuple:
    """``min_q split_price(q) + q.p`` over ``q_grid`` (rows are option positions) and its argmin."""
    best, arg = np.inf, None
    for q in np.atleast_2d(np.asarray(q_grid, dtype=float)):
        v = split_price(alpha, q, f, cone, polytope) + float(q @ cone.prices)
        if v < best:
            best, arg = v, q
    return best, arg
