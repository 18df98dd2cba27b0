"""Acceptance suite: one PASS/FAIL line per criterion, printed after the run.

Run alone with ``pytest tests/test_acceptance.py`` (or ``python tests/test_acceptance.py``).
"""
import itertools
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

import conftest
from instances import constrained, simplex
from qhedge import (AtomicBaseModel, MarketSpec, ModelPolytope, PayoffSpec, build_cone, build_lattice,
                    direct_price_oracle, error_budget, evaluate_success, extend_strategy, invert_price,
                    mismatch_report, payoff_vector, polytope_from_constraints, superhedge_price, target_adjust,
                    verify_saddle)
from qhedge.approx import strategy_bound
from qhedge.lattice import snap_numerators
from qhedge.linprog import LinearProgram, solve, vertex_enumerate
from qhedge.models import kernel_polytope
from qhedge.pricing import superhedge_measure
from qhedge.quantile import ValueSolver

ALPHAS_1 = tuple(np.round(np.arange(1, 11) / 10, 10))
ALPHAS_3 = tuple(np.round(np.arange(1, 21) / 20, 10))


def record(k, ok, detail):
    line = f"CRITERION {k} {'PASS' if ok else 'FAIL'}: {detail}"
    conftest.CRITERIA[k] = line
    print(line)
    return ok


class RecordingSolver(ValueSolver):
    """Value solver that keeps every point it produces, with the instance it belongs to."""

    def __init__(self, f, cone, polytope, sink):
        super().__init__(f, cone, polytope)
        self.sink = sink

    def solve(self, x):
        p = super().solve(x)
        self.sink.append((p, self.f, self.polytope, self.cone))
        return p


def _curve(alphas, f, cone, poly, sink):
    solver = RecordingSolver(f, cone, poly, sink)
    return [invert_price(a, f, cone, poly, solver=solver, with_strategy=False) for a in alphas]


# --- criterion 1 --------------------------------------------------------------

def two_point_superhedge(lat, f):
    """Largest ``E_Q[f]`` over the extreme martingale measures of a one-period lattice (brute force)."""
    s = lat.prices[:, 1]
    best = float(f[np.isclose(s, 1.0)].max(initial=-np.inf))
    for i, j in itertools.product(np.flatnonzero(s < 1), np.flatnonzero(s > 1)):
        w = (s[j] - 1.0) / (s[j] - s[i])
        best = max(best, w * f[i] + (1 - w) * f[j])
    return best


@lru_cache(maxsize=None)
def criterion1():
    lat, poly, cone, f = simplex(5)
    oracle = two_point_superhedge(lat, f)
    sink = []
    results = _curve(ALPHAS_1, f, cone, poly, sink)
    err = max(abs(r.price - r.alpha * oracle) for r in results)
    return oracle, err, sink


def test_criterion_1_linearity():
    oracle, err, _ = criterion1()
    ok = abs(oracle - 1.25) <= 1e-12 and err <= 1e-6
    assert record(1, ok, f"brute-force superhedge {oracle:.12g}; max |price - 1.25 alpha| = {err:.2e} (tol 1e-6)")


# --- criterion 2 --------------------------------------------------------------

def test_criterion_2_superhedge_closed_form():
    worst_p, worst_q = 0.0, 0.0
    for n in range(1, 10):
        lat = build_lattice(MarketSpec(1, n, [0.5], [1.5]))
        cone = build_cone(lat)
        price, Q = superhedge_measure(payoff_vector(PayoffSpec.power(2), lat), cone)
        target = np.zeros(lat.n_paths)
        target[[0, -1]] = 0.5
        worst_p = max(worst_p, abs(price - 1.25))
        worst_q = max(worst_q, np.abs(Q - target).max())
    ok = worst_p <= 1e-9 and worst_q <= 1e-8
    assert record(2, ok, f"n=1..9: max |price - 1.25| = {worst_p:.2e}, max |Q - (1/2, 0, .., 1/2)| = {worst_q:.2e}")


# --- criterion 3 --------------------------------------------------------------

@lru_cache(maxsize=None)
def criterion3():
    t0 = time.perf_counter()
    sink, curves, concave, monotone = [], {}, 0.0, 0.0
    for n in range(5, 10):
        for puts in (False, True):
            _, poly, cone, f = constrained(n, puts)
            res = _curve(ALPHAS_3, f, cone, poly, sink)
            prices = np.array([r.price for r in res])
            curves[n, puts] = prices
            monotone = max(monotone, float(np.max(prices[:-1] - prices[1:], initial=0.0)))
            solver = RecordingSolver(f, cone, poly, sink)
            xs = np.linspace(0.0, superhedge_price(f, cone), 17)
            V = np.array([solver.solve(x).value for x in xs])
            for i, j, k in itertools.combinations(range(xs.size), 3):
                w = (xs[j] - xs[i]) / (xs[k] - xs[i])
                concave = max(concave, (1 - w) * V[i] + w * V[k] - V[j])
    gap = float(np.max(np.abs(curves[8, False] - curves[9, False])))
    gap_puts = float(np.max(np.abs(curves[8, True] - curves[9, True])))
    benefit = max(float(np.max(curves[n, True] - curves[n, False])) for n in range(5, 10))
    return dict(monotone=monotone, concave=concave, gap=gap, gap_puts=gap_puts, benefit=benefit,
                seconds=time.perf_counter() - t0, sink=sink)


def test_criterion_3_constrained_models():
    c = criterion3()
    ok = c["monotone"] <= 1e-7 and c["concave"] <= 1e-6 and c["gap"] < 0.02 and c["benefit"] <= 1e-7
    assert record(3, ok, (
        f"(a) max price decrease {c['monotone']:.1e}; (b) max concavity violation {c['concave']:.1e}; "
        f"(c) sup gap n=8 vs 9 {c['gap']:.4f} (with puts {c['gap_puts']:.4f}); "
        f"(d) max price rise from puts {c['benefit']:.1e}; {c['seconds']:.0f}s for n=5..9"))


# --- criterion 4 --------------------------------------------------------------

CLAIMS = (PayoffSpec.power(2), PayoffSpec.call(1.0), PayoffSpec.put(1.0), PayoffSpec.lookback_max())


def _random_options(lat, rng, k):
    """Up to ``k`` puts or calls priced by a strictly positive martingale measure."""
    Q = build_cone(lat).certificate.measure
    grid = lat.grid_values(lat.horizon)
    inner = grid[(grid > grid.min()) & (grid < grid.max())]
    opts = []
    for _ in range(k):
        K = float(rng.choice(inner))
        opts.append(PayoffSpec.put(K) if rng.random() < 0.5 else PayoffSpec.call(K))
    prices = [float(Q @ payoff_vector(o, lat)) for o in opts]
    return tuple(opts), tuple(prices)


def random_instance(seed):
    rng = np.random.default_rng(seed)
    kind = ("vertices", "constraints", "base_models")[seed % 3]
    if kind == "constraints":
        lat = build_lattice(MarketSpec(1, int(rng.integers(2, 4)), [0.5], [1.5 if rng.random() < 0.5 else 1.25]))
        N = lat.n_paths
        cap = float(rng.uniform(1.5 / N, 0.5))
        cons = {"path_upper": cap, "regions": [{"time": 1, "interval": "[0.5, 0.875)", "min": float(rng.uniform(0, 0.3))}]}
        poly = polytope_from_constraints(lat, cons)
    elif kind == "vertices":
        T = int(rng.integers(1, 3))
        spec = MarketSpec(1, 5, [0.5], [1.5]) if T == 1 else MarketSpec(2, 2, [0.75, 0.5], [1.25, 1.5])
        lat = build_lattice(spec)
        poly = ModelPolytope("V", lat.n_paths, np.ones(lat.n_paths, bool), vertices=np.eye(lat.n_paths))
    else:
        spec = (MarketSpec(2, 2, [0.5, 0.25], [1.5, 1.75]) if rng.random() < 0.5
                else MarketSpec(2, 2, [0.75, 0.5], [1.25, 1.5]))
        lat = build_lattice(spec)
        lo, hi = np.array(spec.lower[1:], float), np.array(spec.upper[1:], float)
        base = [_atomic(rng, lo, hi) for _ in range(int(rng.integers(1, 4)))]
        poly, _ = kernel_polytope(lat, base, float(rng.choice([0.01, 0.1])))
    opts, prices = _random_options(lat, rng, int(rng.integers(0, 3)))
    cone = build_cone(lat, opts, prices, poly.support)
    f = payoff_vector(CLAIMS[int(rng.integers(len(CLAIMS)))], lat)
    return kind, lat, poly, cone, f, float(rng.uniform(0.05, 0.95))


def _atomic(rng, lo, hi):
    m = int(rng.integers(2, 5))
    return AtomicBaseModel(rng.uniform(lo, hi, (m, lo.size)), rng.dirichlet(np.ones(m)))


@lru_cache(maxsize=None)
def criterion4():
    sink, rows = [], []
    for seed in range(20):
        kind, lat, poly, cone, f, alpha = random_instance(seed)
        solver = RecordingSolver(f, cone, poly, sink)
        p1 = invert_price(alpha, f, cone, poly, solver=solver, with_strategy=False).price
        p2 = direct_price_oracle(alpha, f, cone, poly, method="vertices")
        rows.append((kind, lat.n_paths, cone.n_options, abs(p1 - p2)))
    return rows, sink


def test_criterion_4_oracle_equivalence():
    rows, _ = criterion4()
    worst = max(r[3] for r in rows)
    kinds = {k: sum(r[0] == k for r in rows) for k in ("vertices", "constraints", "base_models")}
    ok = worst <= 1e-5 and all(r[1] <= 40 for r in rows)
    assert record(4, ok, f"20 instances {kinds}, max paths {max(r[1] for r in rows)}, "
                         f"max |invert - oracle| = {worst:.2e} (tol 1e-5)")


# --- criterion 5 --------------------------------------------------------------

def test_criterion_5_mismatch_bound():
    rng = np.random.default_rng(2024)
    worst, checked = -np.inf, 0
    for _ in range(50):
        T = int(rng.integers(1, 3))
        n = int(rng.integers(1, 4))
        lam = float(rng.choice([0.01, 0.1]))
        # second-period bounds on every grid, n = 1 included
        lo = np.array([0.5, 0.0][:T])
        hi = np.array([1.5, 2.0][:T])
        lat = build_lattice(MarketSpec(T, n, lo.tolist(), hi.tolist()))
        base = [_atomic(rng, lo, hi) for _ in range(int(rng.integers(1, 4)))]
        poly, ks = kernel_polytope(lat, base, lam)
        rep = mismatch_report(ks, base, lam, poly)
        bound = 1 - (1 / (1 + lam)) ** T
        worst = max(worst, rep.vertex_max_mass - bound, rep.max_mass - bound)
        checked += 1
    ok = worst <= 1e-9
    assert record(5, ok, f"{checked} base-model sets: max (mismatch mass - bound) = {worst:.2e} (tol 1e-9)")


# --- criterion 6 --------------------------------------------------------------

def test_criterion_6_saddle():
    points = criterion1()[2] + criterion3()["sink"] + criterion4()[1]
    worst, active = 0.0, 0
    for p, f, poly, cone in points:
        if p.a <= 0:
            continue
        rep = verify_saddle(p, f, poly, cone, tol=1e-7)
        active += 1
        worst = max(worst, rep.cone_gap, rep.model_gap, rep.budget_gap)
    ok = worst <= 1e-7
    assert record(6, ok, f"{active} points with a* > 0 (of {len(points)}): max saddle gap {worst:.2e} (tol 1e-7)")


# --- criterion 7 --------------------------------------------------------------

def _held_out(base, lat, rng):
    """A random mixture of the base models with every atom moved uniformly inside its own cell."""
    h = lat.half_width
    theta = rng.dirichlet(np.ones(len(base)))
    atoms, weights = [], []
    for th, m in zip(theta, base):
        ctr = snap_numerators(lat, m.paths)[:, 0] / lat.scale
        lo = ctr - h + np.where(ctr > 1, 1e-12, 0.0)
        hi = ctr + h - np.where(ctr < 1, 1e-12, 0.0)
        atoms.append(rng.uniform(lo, hi)[:, None])
        weights.append(th * m.weights)
    model = AtomicBaseModel(np.vstack(atoms), np.concatenate(weights))
    assert np.array_equal(snap_numerators(lat, model.paths),
                          snap_numerators(lat, np.vstack([m.paths for m in base])))
    return model


def test_criterion_7_end_to_end():
    rng = np.random.default_rng(0)
    n, lam, alpha = 6, 0.01, 0.8
    lat = build_lattice(MarketSpec(1, n, [0.5], [1.5], lam=lam))
    base = [AtomicBaseModel(rng.uniform(0.55, 1.45, (5, 1)), rng.dirichlet(np.ones(5))) for _ in range(4)]
    poly, _ = kernel_polytope(lat, base, lam)
    cone = build_cone(lat, support=poly.support)
    f = payoff_vector(PayoffSpec.power(2), lat)
    a_adj = target_adjust(alpha, lam, 1)
    r = invert_price(a_adj, f, cone, poly)
    budget = error_budget(C3=PayoffSpec.power(2).lipschitz(0.5, 1.5), C2=0.0, C1=strategy_bound(r.strategy),
                          T=1, k=0, n=n, alpha_prime=a_adj)
    ext = extend_strategy(r.strategy, cone, options=())
    capital = r.price + budget.slack
    held_out = [_held_out(base, lat, rng) for _ in range(10)]
    worst = evaluate_success(ext, capital, PayoffSpec.power(2), held_out).worst
    ok = worst >= alpha - 1e-6
    assert record(7, ok, f"alpha'={a_adj:.6f}, price {r.price:.6f} + slack M/2^n = {budget.slack:.4f}; "
                         f"worst held-out success ratio {worst:.4f} (target 0.8)")


# --- criterion 8 --------------------------------------------------------------

def random_lp(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 11))
    m_eq = int(rng.integers(0, min(3, d - 1) + 1))
    m_ub = int(rng.integers(0, 10 - m_eq))  # plus the sum row
    x0 = rng.uniform(0, 1, d)
    A_eq = rng.normal(size=(m_eq, d))
    G = rng.normal(size=(m_ub, d))
    if seed % 3 == 0:
        # degenerate: a sparse feasible point where many rows are tight
        x0[rng.random(d) < 0.5] = 0.0
        slack = np.where(rng.random(m_ub) < 0.7, 0.0, rng.uniform(0, 1, m_ub))
    else:
        slack = rng.uniform(0, 1, m_ub)
    A_ub = np.vstack([G, np.ones(d)])
    b_ub = np.append(G @ x0 + slack, x0.sum() + rng.uniform(0.5, 2))
    return LinearProgram(rng.normal(size=d), A_eq=A_eq, b_eq=A_eq @ x0, A_ub=A_ub, b_ub=b_ub)


def test_criterion_8_lp_core():
    worst_obj, worst_gap = 0.0, 0.0
    for seed in range(200):
        lp = random_lp(seed)
        sol = solve(lp)
        V = vertex_enumerate(lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, lb=np.zeros(lp.n_vars))
        ref = float((V @ lp.c).min())
        worst_obj = max(worst_obj, abs(sol.fun - ref) if sol.optimal else np.inf)
        worst_gap = max(worst_gap, sol.residuals()["gap"])
    ok = worst_obj <= 1e-8 and worst_gap <= 1e-8
    assert record(8, ok, f"200 LPs: max |simplex - vertex min| = {worst_obj:.2e}, max duality gap {worst_gap:.2e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
