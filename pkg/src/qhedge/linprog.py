"""Dense bounded-variable revised simplex and a brute-force vertex enumerator.

The solver minimises ``c @ x`` subject to ``A_eq @ x == b_eq``,
``A_ub @ x <= b_ub`` and ``lb <= x <= ub``.  Every variable is mapped to one or
two internal columns with bounds ``[0, u]``; a two-phase method with
artificial columns finds a first basis.  The basis inverse is kept explicitly
and updated by eta transformations, with periodic refactorisation.

Dual values follow the usual sign convention for minimisation: equality duals
are free, inequality duals are non-positive, and
``reduced_costs = c - A_eq.T @ eq_duals - A_ub.T @ ub_duals``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ResourceLimitError, SolverError, StructuralError

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
STABLE_PIVOT = 1e-7
OPT_TOL = 1e-10
BLAND_AFTER = 50
REFACTOR_EVERY = 64
MAX_PIVOTS = 10**6

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


def _as_matrix(A, n, name):
    if A is None:
        return np.zeros((0, n))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.zeros((0, n))
    if A.shape[1] != n:
        raise StructuralError(f"{name} has {A.shape[1]} columns, expected {n}")
    return A


def _as_vector(v, size, name, default=0.0):
    if v is None:
        return np.full(size, default, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return np.full(size, float(v))
    v = v.ravel()
    if v.size != size:
        raise StructuralError(f"{name} has length {v.size}, expected {size}")
    return v


@dataclass
class LinearProgram:
    """A minimisation problem in general form.

    ``lb`` defaults to 0 and ``ub`` to ``+inf``; either may contain infinities.
    """

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | float | None = None
    ub: np.ndarray | float | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq = _as_matrix(self.A_eq, n, "A_eq")
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0], "b_eq")
        self.A_ub = _as_matrix(self.A_ub, n, "A_ub")
        self.b_ub = _as_vector(self.b_ub, self.A_ub.shape[0], "b_ub")
        self.lb = _as_vector(self.lb, n, "lb", 0.0)
        self.ub = _as_vector(self.ub, n, "ub", np.inf)
        for name in ("c", "A_eq", "b_eq", "A_ub", "b_ub"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise StructuralError(f"{name} contains NaN or infinite coefficients")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise StructuralError("bounds contain NaN")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise StructuralError("lower bound +inf or upper bound -inf")
        if np.any(self.lb > self.ub):
            raise StructuralError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass(frozen=True)
class Basis:
    """Internal basis snapshot, reusable as a warm start for an LP of the same shape."""

    basic: tuple
    at_upper: tuple
    signature: tuple = field(repr=False)


@dataclass
class LPSolution:
    status: str
    x: np.ndarray | None
    fun: float
    eq_duals: np.ndarray | None = None
    ub_duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: Basis | None = None
    iterations: int = 0
    lp: LinearProgram | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def dual_objective(self) -> float:
        lp = self.lp
        r = self.reduced_costs
        val = float(lp.b_eq @ self.eq_duals + lp.b_ub @ self.ub_duals)
        # sign violations at infinite bounds are reported by residuals(), not folded in here
        pos = (r > 0) & np.isfinite(lp.lb)
        neg = (r < 0) & np.isfinite(lp.ub)
        return val + float(np.sum(r[pos] * lp.lb[pos])) + float(np.sum(r[neg] * lp.ub[neg]))

    def residuals(self) -> dict:
        """Primal infeasibility, dual sign violation and duality gap of an optimal solve."""
        lp, x, r = self.lp, self.x, self.reduced_costs
        primal = 0.0
        if lp.A_eq.shape[0]:
            primal = max(primal, float(np.max(np.abs(lp.A_eq @ x - lp.b_eq))))
        if lp.A_ub.shape[0]:
            primal = max(primal, float(np.max(lp.A_ub @ x - lp.b_ub, initial=0.0)))
        primal = max(primal, float(np.max(lp.lb - x, initial=0.0)), float(np.max(x - lp.ub, initial=0.0)))
        dual = float(np.max(self.ub_duals, initial=0.0))
        # a positive reduced cost needs a finite lower bound, a negative one a finite upper bound
        dual = max(dual, float(np.max(np.where(np.isinf(lp.lb), np.maximum(r, 0.0), 0.0), initial=0.0)))
        dual = max(dual, float(np.max(np.where(np.isinf(lp.ub), np.maximum(-r, 0.0), 0.0), initial=0.0)))
        gap = abs(self.fun - self.dual_objective())
        return {"primal": primal, "dual": dual, "gap": gap}


class _StandardForm:
    """``A x = b, 0 <= x <= u`` rewrite of a LinearProgram with slack and artificial columns."""

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        orig, sign, upper = [], [], []
        offset = np.zeros(n)
        kinds = []
        for j in range(n):
            lo, hi = lp.lb[j], lp.ub[j]
            if lo < 0.0 <= hi:
                orig += [j, j]
                sign += [1.0, -1.0]
                upper += [hi, -lo]
                kinds.append(0)
            elif np.isfinite(lo):
                offset[j] = lo
                orig.append(j)
                sign.append(1.0)
                upper.append(hi - lo)
                kinds.append(1)
            else:
                offset[j] = hi
                orig.append(j)
                sign.append(-1.0)
                upper.append(np.inf)
                kinds.append(2)
        self.orig = np.array(orig, dtype=int)
        self.sign = np.array(sign)
        self.offset = offset
        self.m_eq = lp.A_eq.shape[0]
        self.m_ub = lp.A_ub.shape[0]
        m = self.m_eq + self.m_ub
        rows = np.vstack([lp.A_eq, lp.A_ub]) if m else np.zeros((0, n))
        rhs = np.concatenate([lp.b_eq, lp.b_ub]) - rows @ offset
        A_s = rows[:, self.orig] * self.sign
        slack = np.zeros((m, self.m_ub))
        slack[self.m_eq + np.arange(self.m_ub), np.arange(self.m_ub)] = 1.0
        self.row_sign = np.where(rhs < 0, -1.0, 1.0)
        A_s *= self.row_sign[:, None]
        slack *= self.row_sign[:, None]
        rhs = rhs * self.row_sign
        need_art = np.ones(m, dtype=bool)
        slack_basic = {}
        for i in range(self.m_ub):
            r = self.m_eq + i
            if self.row_sign[r] > 0:
                need_art[r] = False
                slack_basic[r] = A_s.shape[1] + i
        art_rows = np.flatnonzero(need_art)
        art = np.zeros((m, art_rows.size))
        art[art_rows, np.arange(art_rows.size)] = 1.0
        self.A = np.hstack([A_s, slack, art])
        self.b = rhs
        self.n_struct = A_s.shape[1]
        self.first_art = self.n_struct + self.m_ub
        self.upper = np.concatenate([upper, np.full(self.m_ub, np.inf), np.full(art_rows.size, np.inf)])
        cost = np.zeros(self.A.shape[1])
        cost[: self.n_struct] = lp.c[self.orig] * self.sign
        self.cost = cost
        basic = np.empty(m, dtype=int)
        for k, r in enumerate(art_rows):
            basic[r] = self.first_art + k
        for r, col in slack_basic.items():
            basic[r] = col
        self.initial_basic = basic
        self.signature = (m, self.A.shape[1], self.row_sign.tobytes(), bytes(kinds))

    def to_original(self, x_int: np.ndarray) -> np.ndarray:
        x = self.offset.copy()
        np.add.at(x, self.orig, self.sign * x_int[: self.n_struct])
        return x


class _Simplex:
    """Bounded primal simplex on ``A x = b, 0 <= x <= upper`` from a given basis."""

    def __init__(self, A, b, upper, basic, at_upper=(), max_pivots=MAX_PIVOTS):
        self.A = A
        self.b = b
        self.upper = upper.copy()
        self.m, self.N = A.shape
        self.basic = np.array(basic, dtype=int)
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basic] = True
        self.at_upper = np.zeros(self.N, dtype=bool)
        self.at_upper[list(at_upper)] = True
        self.at_upper[self.basic] = False
        self.max_pivots = max_pivots
        self.pivots = 0
        self.refactor()

    def refactor(self):
        if self.m:
            try:
                self.Binv = np.linalg.inv(self.A[:, self.basic])
            except np.linalg.LinAlgError:
                raise SolverError("basis became singular") from None
        else:
            self.Binv = np.zeros((0, 0))
        self._since_refactor = 0
        xN = np.where(self.at_upper & ~self.is_basic, self.upper, 0.0)
        xN[self.basic] = 0.0
        self.x = xN
        self.x[self.basic] = self.Binv @ (self.b - self.A @ xN) if self.m else 0.0

    def primal_feasible(self, tol=FEAS_TOL) -> bool:
        xb = self.x[self.basic]
        return bool(np.all(xb >= -tol) and np.all(xb <= self.upper[self.basic] + tol))

    def duals(self, cost):
        return cost[self.basic] @ self.Binv if self.m else np.zeros(0)

    def _pivot(self, r, j, alpha):
        piv = self.Binv[r] / alpha[r]
        self.Binv -= np.outer(alpha, piv)
        self.Binv[r] = piv
        leaving = self.basic[r]
        self.is_basic[leaving] = False
        self.is_basic[j] = True
        self.at_upper[j] = False
        self.basic[r] = j
        self._since_refactor += 1
        return leaving

    def run(self, cost) -> str:
        degenerate = 0
        clean = False
        # columns whose apparent ray was rounding noise; cleared after any move
        noise = np.zeros(self.N, dtype=bool)
        while True:
            y = self.duals(cost)
            d = cost - y @ self.A if self.m else cost.copy()
            d[self.basic] = 0.0
            nonbasic = ~self.is_basic & ~noise
            can_inc = nonbasic & ~self.at_upper & (d < -OPT_TOL) & (self.upper > 0.0)
            can_dec = nonbasic & self.at_upper & (d > OPT_TOL)
            cand = can_inc | can_dec
            if not cand.any():
                if clean:
                    return OPTIMAL
                # confirm optimality on a fresh factorisation
                self.refactor()
                clean = True
                continue
            clean = False
            bland = degenerate >= BLAND_AFTER
            if bland:
                j = int(np.flatnonzero(cand)[0])
            else:
                j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            direction = 1.0 if can_inc[j] else -1.0
            alpha = self.Binv @ self.A[:, j] if self.m else np.zeros(0)
            g = -direction * alpha
            r, theta = self._ratio_test(g, bland)
            u_j = self.upper[j]
            if r < 0 and not np.isfinite(u_j):
                scale = (1.0 + np.max(np.abs(y), initial=0.0)) * (1.0 + np.max(np.abs(self.A[:, j]), initial=0.0))
                if abs(d[j]) > OPT_TOL * scale:
                    return UNBOUNDED
                noise[j] = True
                continue
            if r >= 0 and not u_j <= theta and abs(g[r]) < STABLE_PIVOT * np.abs(g).max():
                # small pivot: retry on a fresh factorisation, then give up on this column
                if self._since_refactor:
                    self.refactor()
                else:
                    noise[j] = True
                continue
            noise[:] = False
            self.pivots += 1
            if self.pivots > self.max_pivots:
                raise ResourceLimitError(f"simplex exceeded {self.max_pivots} pivots")
            if r < 0 or u_j <= theta:
                # bound flip of the entering variable, basis unchanged
                self.x[self.basic] += g * u_j
                self.at_upper[j] = not self.at_upper[j]
                self.x[j] = u_j if self.at_upper[j] else 0.0
                degenerate = 0 if u_j > 1e-12 else degenerate + 1
                continue
            to_upper = g[r] > 0
            self.x[self.basic] += g * theta
            self.x[j] = theta if direction > 0 else u_j - theta
            leaving = self._pivot(r, j, alpha)
            self.at_upper[leaving] = to_upper
            self.x[leaving] = self.upper[leaving] if to_upper else 0.0
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            if self._since_refactor >= REFACTOR_EVERY:
                self.refactor()

    def _ratio_test(self, g, bland):
        if not self.m:
            return -1, np.inf
        xb = self.x[self.basic]
        ub = self.upper[self.basic]
        tol = PIVOT_TOL * max(1.0, float(np.max(np.abs(g), initial=0.0)))
        dec = g < -tol
        inc = (g > tol) & np.isfinite(ub)
        if not (dec.any() or inc.any()):
            return -1, np.inf
        ratio = np.full(self.m, np.inf)
        relaxed = np.full(self.m, np.inf)
        with np.errstate(invalid="ignore"):
            ratio[dec] = np.maximum(xb[dec], 0.0) / -g[dec]
            ratio[inc] = np.maximum(ub[inc] - xb[inc], 0.0) / g[inc]
            relaxed[dec] = (np.maximum(xb[dec], 0.0) + FEAS_TOL) / -g[dec]
            relaxed[inc] = (np.maximum(ub[inc] - xb[inc], 0.0) + FEAS_TOL) / g[inc]
        # Harris pass: any row blocking within the tolerance may leave
        ok = np.flatnonzero(ratio <= relaxed.min())
        if bland:
            # smallest basic index among the well-sized pivots
            big = ok[np.abs(g[ok]) >= 1e-3 * np.abs(g[ok]).max()]
            r = int(big[np.argmin(self.basic[big])])
        else:
            r = int(ok[np.argmax(np.abs(g[ok]))])
        return r, float(ratio[r])


def _drive_out_artificials(sx: _Simplex, first_art: int):
    for r in range(sx.m):
        if sx.basic[r] < first_art:
            continue
        row = sx.Binv[r] @ sx.A[:, :first_art]
        row[sx.is_basic[:first_art]] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > 1e-7:
            alpha = sx.Binv @ sx.A[:, j]
            leaving = sx._pivot(r, j, alpha)
            sx.at_upper[leaving] = False
    sx.refactor()


def solve(lp: LinearProgram, basis: Basis | None = None, max_pivots: int = MAX_PIVOTS) -> LPSolution:
    """Solve ``lp``; ``basis`` from an earlier solve of an identically shaped LP warm-starts phase 2."""
    if not isinstance(lp, LinearProgram):
        raise StructuralError("solve expects a LinearProgram")
    sf = _StandardForm(lp)
    n_art = sf.A.shape[1] - sf.first_art
    sx = None
    if basis is not None and basis.signature == sf.signature:
        upper = sf.upper.copy()
        upper[sf.first_art:] = 0.0
        try:
            cand = _Simplex(sf.A, sf.b, upper, basis.basic, basis.at_upper, max_pivots)
            if cand.primal_feasible():
                sx = cand
        except SolverError:
            sx = None
    if sx is None:
        sx = _Simplex(sf.A, sf.b, sf.upper, sf.initial_basic, (), max_pivots)
        if n_art:
            phase1 = np.zeros(sf.A.shape[1])
            phase1[sf.first_art:] = 1.0
            status = sx.run(phase1)
            if status != OPTIMAL:
                raise SolverError(f"phase 1 ended with status {status}")
            infeas = float(np.sum(sx.x[sf.first_art:]))
            if infeas > 1e-7 * (1.0 + float(np.max(np.abs(sf.b), initial=0.0))):
                return LPSolution(INFEASIBLE, None, np.inf, iterations=sx.pivots, lp=lp)
            _drive_out_artificials(sx, sf.first_art)
            sx.upper[sf.first_art:] = 0.0
            sx.x[sf.first_art:] = 0.0
    status = sx.run(sf.cost)
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, None, -np.inf, iterations=sx.pivots, lp=lp)
    x = sf.to_original(np.clip(sx.x, 0.0, None))
    y = sx.duals(sf.cost) * sf.row_sign
    eq_duals, ub_duals = y[: sf.m_eq], y[sf.m_eq:]
    reduced = lp.c - lp.A_eq.T @ eq_duals - lp.A_ub.T @ ub_duals
    snap = Basis(tuple(int(k) for k in sx.basic), tuple(int(k) for k in np.flatnonzero(sx.at_upper)), sf.signature)
    return LPSolution(OPTIMAL, x, float(lp.c @ x), eq_duals, ub_duals, reduced, snap, sx.pivots, lp)


MAX_ENUM_DIM = 12
MAX_ENUM_ROWS = 24


def vertex_enumerate(A_ub=None, b_ub=None, A_eq=None, b_eq=None, lb=None, ub=None,
                     n_vars: int | None = None, tol: float = 1e-9) -> np.ndarray:
    """All vertices of ``{x : A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub}`` by basis enumeration.

    Finite bounds count as inequality rows.  Intended as a brute-force oracle
    on small instances only.
    """
    if n_vars is None:
        for M in (A_ub, A_eq):
            if M is not None and np.size(M):
                n_vars = np.atleast_2d(M).shape[1]
                break
        else:
            if lb is not None:
                n_vars = np.size(lb)
            elif ub is not None:
                n_vars = np.size(ub)
            else:
                raise StructuralError("cannot infer the dimension")
    d = int(n_vars)
    G = _as_matrix(A_ub, d, "A_ub")
    h = _as_vector(b_ub, G.shape[0], "b_ub")
    E = _as_matrix(A_eq, d, "A_eq")
    e = _as_vector(b_eq, E.shape[0], "b_eq")
    lo = _as_vector(lb, d, "lb", -np.inf)
    hi = _as_vector(ub, d, "ub", np.inf)
    eye = np.eye(d)
    fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
    G = np.vstack([G, -eye[fin_lo], eye[fin_hi]])
    h = np.concatenate([h, -lo[fin_lo], hi[fin_hi]])
    if d > MAX_ENUM_DIM or G.shape[0] > MAX_ENUM_ROWS:
        raise ResourceLimitError(
            f"vertex enumeration capped at dimension {MAX_ENUM_DIM} and {MAX_ENUM_ROWS} rows "
            f"(got {d} and {G.shape[0]})")
    if E.shape[0]:
        rank = np.linalg.matrix_rank(E)
        if rank < E.shape[0]:
            # keep an independent subset of the equality rows
            keep = []
            for i in range(E.shape[0]):
                if np.linalg.matrix_rank(E[keep + [i]]) > len(keep):
                    keep.append(i)
            E, e = E[keep], e[keep]
    k = d - E.shape[0]
    if k < 0:
        raise StructuralError("more independent equalities than variables")
    if k == 0:
        combos = np.zeros((1, 0), dtype=int)
    else:
        if G.shape[0] < k:
            return np.zeros((0, d))
        combos = np.array(list(itertools.combinations(range(G.shape[0]), k)), dtype=int)
    found = []
    for start in range(0, combos.shape[0], 20000):
        chunk = combos[start:start + 20000]
        M = np.concatenate([np.broadcast_to(E, (chunk.shape[0],) + E.shape), G[chunk]], axis=1)
        rhs = np.concatenate([np.broadcast_to(e, (chunk.shape[0], e.size)), h[chunk]], axis=1)
        det = np.abs(np.linalg.det(M))
        ok = det > 1e-12
        if not ok.any():
            continue
        pts = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
        feas = np.all(pts @ G.T <= h + tol, axis=1)
        if E.shape[0]:
            feas &= np.all(np.abs(pts @ E.T - e) <= tol, axis=1)
        found.append(pts[feas])
    if not found:
        return np.zeros((0, d))
    pts = np.concatenate(found)
    return dedup_rows(pts, 1e-9)


def dedup_rows(pts: np.ndarray, tol: float) -> np.ndarray:
    """Drop rows within ``tol`` (sup-norm) of an earlier row, preserving order."""
    if pts.shape[0] == 0:
        return pts
    # bucket on a grid coarser than tol, then compare exactly inside the bucket
    grid = max(tol * 1e3, 1e-12)
    buckets: dict = {}
    out = []
    for row in pts:
        key = tuple(np.round(row / grid).astype(np.int64))
        bucket = buckets.setdefault(key, [])
        if any(np.max(np.abs(prev - row)) <= tol for prev in bucket):
            continue
        bucket.append(row)
        out.append(row)
    return np.array(out)


def lp_min_over_vertices(c: np.ndarray, vertices: np.ndarray) -> float:
    if vertices.shape[0] == 0:
        return math.inf
    return float(np.min(vertices @ c))
