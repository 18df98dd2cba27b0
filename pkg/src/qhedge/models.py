"""Model-uncertainty sets on the lattice.

Two routes produce a :class:`ModelPolytope`:

* kernel route -- atomic base models induce conditional cell masses at every
  node (:func:`induce_kernels`), the lambda-modification injects mass on the
  extreme moves (:func:`lambda_modify`), and products of per-node generators
  give the vertices (:func:`joint_polytope_from_kernels`);
* constraint route -- linear constraints directly on the path-probability
  vector (:func:`polytope_from_constraints`, :func:`full_simplex`).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import linprog
from .exceptions import ConfigurationError, ResourceLimitError
from .lattice import PathLattice, _fraction, snap_numerators

SUPPORT_TOL = 1e-9
DEDUP_TOL = 1e-12
DEFAULT_VERTEX_CAP = 10**6

CASE_LOW = "i"
CASE_HIGH = "ii"
CASE_BOTH = "iii"
CASE_NONE = "iv"
CASE_JC = "J(c)"


@dataclass(frozen=True)
class AtomicBaseModel:
    """Finitely supported probability measure on continuum paths ``(S_1..S_T)``."""

    paths: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        paths = np.atleast_2d(np.asarray(self.paths, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if paths.shape[0] != w.size or w.size == 0:
            raise ConfigurationError("a base model needs one weight per atom and at least one atom")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigurationError("base-model weights must be non-negative and sum to 1")
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def point(cls, path):
        return cls(np.atleast_2d(path), np.ones(1))

    @classmethod
    def uniform(cls, paths):
        paths = np.atleast_2d(np.asarray(paths, dtype=float))
        if paths.shape[0] == 1 and paths.shape[1] > 1:
            paths = paths.T
        return cls(paths, np.full(paths.shape[0], 1.0 / paths.shape[0]))

    def mix(self, other: "AtomicBaseModel", theta: float) -> "AtomicBaseModel":
        return AtomicBaseModel(np.vstack([self.paths, other.paths]),
                               np.concatenate([theta * self.weights, (1 - theta) * other.weights]))


@dataclass
class KernelSet:
    """Per-node conditional laws over the next-time grid.

    ``per_model[node_id]`` has one row per base model (the point mass at the
    unchanged price where the model does not reach the node); ``reach[node_id]``
    flags the models with positive mass on the node's cell.  ``cases`` records
    the modification applied at each node.
    """

    lattice: PathLattice
    per_model: list
    reach: list
    cases: list = field(default_factory=list)
    lam: float | None = None

    @property
    def n_models(self) -> int:
        return self.per_model[0].shape[0]

    def generators(self, node_id: int) -> np.ndarray:
        """Distinct kernels offered at a node by the models that reach it."""
        rows = self.per_model[node_id][self.reach[node_id]]
        if rows.shape[0] == 0:
            rows = self.per_model[node_id][:1]
        return linprog.dedup_rows(rows, DEDUP_TOL)

    def diagonal_index(self, node_id: int) -> int:
        t, pre = self.lattice.nodes[node_id]
        cur = pre[-1] if pre else self.lattice.scale
        return int(cur - self.lattice.grids[t + 1][0])

    def degenerate(self, node_id: int) -> bool:
        d = self.diagonal_index(node_id)
        g = self.per_model[node_id]
        return bool(np.all(np.abs(g[:, d] - 1.0) <= 1e-15))


@dataclass
class ModelPolytope:
    """Convex set of path-probability vectors in vertex or constraint form.

    H-form: ``A_ub @ P <= b_ub, lower <= P <= upper, sum(P) == 1``.
    """

    kind: str
    n_paths: int
    support: np.ndarray
    vertices: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("H", "V"):
            raise ConfigurationError(f"polytope kind must be 'H' or 'V', got {self.kind!r}")
        self.support = np.asarray(self.support, dtype=bool)

    @property
    def is_full_simplex(self) -> bool:
        return (self.kind == "H" and (self.A_ub is None or self.A_ub.shape[0] == 0)
                and not np.any(self.lower > 0) and np.all(self.upper >= 1.0))

    def _h_lp(self, g, sign):
        return linprog.LinearProgram(sign * np.asarray(g, dtype=float), A_eq=np.ones((1, self.n_paths)),
                                     b_eq=[1.0], A_ub=self.A_ub, b_ub=self.b_ub,
                                     lb=self.lower, ub=self.upper)

    def min_expectation(self, g) -> tuple[float, np.ndarray]:
        """``min_P sum(P * g)`` and a minimiser."""
        g = np.asarray(g, dtype=float)
        if self.kind == "V":
            vals = self.vertices @ g
            k = int(np.argmin(vals))
            return float(vals[k]), self.vertices[k]
        sol = linprog.solve(self._h_lp(g, 1.0))
        return sol.fun, sol.x

    def max_expectation(self, g) -> tuple[float, np.ndarray]:
        val, P = self.min_expectation(-np.asarray(g, dtype=float))
        return -val, P

    def vertex_list(self) -> np.ndarray:
        """Vertices; enumerated on the fly for small H-form sets."""
        if self.kind == "V":
            return self.vertices
        sup = np.flatnonzero(self.support)
        A = self.A_ub[:, sup] if self.A_ub is not None and self.A_ub.size else None
        up = np.where(self.upper[sup] >= 1.0, np.inf, self.upper[sup])
        V = linprog.vertex_enumerate(A, self.b_ub if A is not None else None,
                                     np.ones((1, sup.size)), [1.0], self.lower[sup], up, n_vars=sup.size)
        full = np.zeros((V.shape[0], self.n_paths))
        full[:, sup] = V
        return full

    def contains(self, P, tol: float = 1e-9) -> bool:
        P = np.asarray(P, dtype=float)
        if abs(P.sum() - 1) > tol or np.any(P < -tol):
            return False
        if self.kind == "H":
            if np.any(P < self.lower - tol) or np.any(P > self.upper + tol):
                return False
            if self.A_ub is not None and self.A_ub.size and np.any(self.A_ub @ P > self.b_ub + tol):
                return False
            return True
        k = self.vertices.shape[0]
        lp = linprog.LinearProgram(np.zeros(k), A_eq=np.vstack([self.vertices.T, np.ones((1, k))]),
                                   b_eq=np.append(P, 1.0))
        return linprog.solve(lp).optimal


def induce_kernels(lattice: PathLattice, base_models) -> KernelSet:
    """Conditional cell masses of each base model at every non-terminal node."""
    base_models = list(base_models)
    if not base_models:
        raise ConfigurationError("at least one base model is required")
    nodes = lattice.nodes
    node_id = {nd: i for i, nd in enumerate(nodes)}
    T = lattice.horizon
    sizes = [lattice.sizes[nd[0]] for nd in nodes]
    per_model = [np.zeros((len(base_models), s)) for s in sizes]
    mass = [np.zeros(len(base_models)) for _ in nodes]
    for k, model in enumerate(base_models):
        if model.paths.shape[1] != T:
            raise ConfigurationError(f"base model {k} has paths of length {model.paths.shape[1]}, expected {T}")
        nums = snap_numerators(lattice, model.paths)
        for row, w in zip(nums, model.weights):
            if w == 0:
                continue
            for t in range(T):
                i = node_id[(t, tuple(int(v) for v in row[:t]))]
                mass[i][k] += w
                per_model[i][k, int(row[t] - lattice.grids[t + 1][0])] += w
    reach = []
    ks = KernelSet(lattice, per_model, reach, [None] * len(nodes))
    for i in range(len(nodes)):
        m = mass[i]
        hit = m > 0
        reach.append(hit)
        d = ks.diagonal_index(i)
        per_model[i][hit] /= m[hit][:, None]
        per_model[i][~hit] = 0.0
        per_model[i][~hit, d] = 1.0
    return ks


def _satisfies_jc(G: np.ndarray, moves: np.ndarray, c: float) -> bool:
    up = np.any(G[:, moves >= c - 1e-15] > 0)
    down = np.any(G[:, moves <= -c + 1e-15] > 0)
    return bool(up and down)


def lambda_modify(kernels: KernelSet, lam: float, move_c: float | None = None) -> KernelSet:
    """Four-case modification putting mass ``lam / (1 + lam)`` on the extreme moves.

    With ``move_c`` given, nodes where some model moves at least ``move_c`` up
    and some model at least ``move_c`` down are left as they are.
    """
    if not lam > 0:
        raise ConfigurationError(f"lam must be positive, got {lam}")
    lat = kernels.lattice
    new_rows, cases = [], []
    for i, (t, pre) in enumerate(lat.nodes):
        G = kernels.per_model[i].copy()
        reached = kernels.reach[i]
        # the case split looks at the models that reach the node; unreached ones are point masses
        R = G[reached] if reached.any() else G[:1]
        d = kernels.diagonal_index(i)
        lo_pos = R[:, 0] > 0
        hi_pos = R[:, -1] > 0
        off = np.delete(R, d, axis=1).sum(axis=1) > 0
        case = CASE_NONE
        if move_c is not None:
            moves = lat.grid_values(t + 1) - lat.node_price((t, pre))
            if _satisfies_jc(R, moves, move_c):
                case = CASE_JC
        if case != CASE_JC:
            if not lo_pos.any() and hi_pos.any():
                case = CASE_LOW
            elif not hi_pos.any() and lo_pos.any():
                case = CASE_HIGH
            elif not lo_pos.any() and not hi_pos.any() and off.any():
                case = CASE_BOTH
        if case == CASE_LOW:
            G /= 1 + lam
            G[:, 0] = lam / (1 + lam)
        elif case == CASE_HIGH:
            G /= 1 + lam
            G[:, -1] = lam / (1 + lam)
        elif case == CASE_BOTH:
            G /= 1 + lam
            G[:, 0] = G[:, -1] = 0.5 * lam / (1 + lam)
        new_rows.append(G)
        cases.append(case)
    return KernelSet(lat, new_rows, [r.copy() for r in kernels.reach], cases, lam)


def _node_offsets(lat: PathLattice) -> list:
    offs, acc = [], 0
    for t in range(lat.horizon):
        offs.append(acc)
        acc += int(np.prod(lat.sizes[:t]))
    return offs


def joint_polytope_from_kernels(kernels: KernelSet, cap: int = DEFAULT_VERTEX_CAP,
                                label: str = "kernel") -> ModelPolytope:
    """V-form set whose vertices are products of one generator per reachable node."""
    lat = kernels.lattice
    offs = _node_offsets(lat)
    gens = [kernels.generators(i) for i in range(len(lat.nodes))]
    partial = [np.ones(1)]
    for t in range(lat.horizon):
        count = 0
        for pv in partial:
            reach = np.flatnonzero(pv > 0)
            count += math.prod(gens[offs[t] + int(i)].shape[0] for i in reach)
            if count > cap:
                raise ResourceLimitError(
                    f"more than {cap} generator products; describe the model set by constraints instead")
        nxt = []
        s = lat.sizes[t]
        for pv in partial:
            reach = np.flatnonzero(pv > 0)
            choices = [gens[offs[t] + int(i)] for i in reach]
            for combo in itertools.product(*[range(c.shape[0]) for c in choices]):
                out = np.zeros((pv.size, s))
                for i, c, k in zip(reach, choices, combo):
                    out[i] = pv[i] * c[k]
                nxt.append(out.ravel())
        partial = linprog.dedup_rows(np.array(nxt), DEDUP_TOL)
    V = np.array(partial)
    support = np.any(V > 0, axis=0)
    return ModelPolytope("V", lat.n_paths, support, vertices=V, label=label)


def max_path_mass(kernels: KernelSet, indicator: np.ndarray) -> float:
    """``max`` over the rectangular kernel set of the probability of a path set (backward induction)."""
    lat = kernels.lattice
    offs = _node_offsets(lat)
    value = np.asarray(indicator, dtype=float)
    for t in range(lat.horizon - 1, -1, -1):
        s = lat.sizes[t]
        n_nodes = int(np.prod(lat.sizes[:t]))
        child = value.reshape(n_nodes, s)
        value = np.array([np.max(kernels.generators(offs[t] + i) @ child[i]) for i in range(n_nodes)])
    return float(value[0])


def rectangular_support(kernels: KernelSet) -> np.ndarray:
    lat = kernels.lattice
    offs = _node_offsets(lat)
    reach = np.ones(1, dtype=bool)
    for t in range(lat.horizon):
        s = lat.sizes[t]
        nxt = np.zeros((reach.size, s), dtype=bool)
        for i in np.flatnonzero(reach):
            nxt[i] = np.any(kernels.generators(offs[t] + int(i)) > 0, axis=0)
        reach = nxt.ravel()
    return reach


def base_support(lattice: PathLattice, base_models) -> np.ndarray:
    """Lattice paths whose cells carry positive mass under some base model."""
    hit = np.zeros(lattice.n_paths, dtype=bool)
    for model in base_models:
        idx = _snap_index(lattice, model.paths)
        hit[idx[model.weights > 0]] = True
    return hit


def _snap_index(lattice, paths):
    nums = snap_numerators(lattice, paths)
    idx = np.zeros(nums.shape[0], dtype=np.int64)
    for t in range(lattice.horizon):
        idx = idx * lattice.sizes[t] + (nums[:, t] - lattice.grids[t + 1][0])
    return idx


@dataclass
class MismatchReport:
    paths: np.ndarray
    max_mass: float
    bound: float
    vertex_max_mass: float | None = None

    @property
    def within_bound(self) -> bool:
        return self.max_mass <= self.bound + 1e-9


def mismatch_report(kernels: KernelSet, base_models, lam: float,
                    polytope: ModelPolytope | None = None) -> MismatchReport:
    """Paths charged only because of the modification, and their largest possible mass.

    The maximum over the rectangular modified set is computed by backward
    induction; when the vertex form is supplied it is also maximised over the
    vertices.
    """
    lat = kernels.lattice
    supported = rectangular_support(kernels)
    polar = ~base_support(lat, base_models)
    A = supported & polar
    mass = max_path_mass(kernels, A) if A.any() else 0.0
    vmax = None
    if polytope is not None and polytope.kind == "V":
        vmax = float(np.max(polytope.vertices @ A.astype(float))) if A.any() else 0.0
    bound = 1.0 - (1.0 / (1.0 + lam)) ** lat.horizon
    return MismatchReport(np.flatnonzero(A), mass, bound, vmax)


def property_jc(kernels: KernelSet, c: float) -> bool:
    """Whether every node reached by some model admits moves of at least ``c`` both ways."""
    lat = kernels.lattice
    for i, (t, pre) in enumerate(lat.nodes):
        if not kernels.reach[i].any():
            continue
        moves = lat.grid_values(t + 1) - lat.node_price((t, pre))
        if not _satisfies_jc(kernels.per_model[i][kernels.reach[i]], moves, c):
            return False
    return True


def kernel_polytope(lattice: PathLattice, base_models, lam: float, move_c: float | None = None,
                    cap: int = DEFAULT_VERTEX_CAP) -> tuple[ModelPolytope, KernelSet]:
    """Convenience pipeline: induce, modify and take generator products."""
    ks = lambda_modify(induce_kernels(lattice, base_models), lam, move_c)
    return joint_polytope_from_kernels(ks, cap), ks


# --- constraint route -------------------------------------------------------

def _region_mask(lattice: PathLattice, region: dict) -> np.ndarray:
    t = int(region.get("time", lattice.horizon))
    if not 1 <= t <= lattice.horizon:
        raise ConfigurationError(f"region time {t} outside 1..{lattice.horizon}")
    lo, hi, lo_closed, hi_closed = parse_interval(region["interval"])
    vals = lattice.numerators[:, t]
    scale = lattice.scale
    lo_n, hi_n = lo * scale, hi * scale
    above = vals >= lo_n if lo_closed else vals > lo_n
    below = vals <= hi_n if hi_closed else vals < hi_n
    return np.array([bool(a) and bool(b) for a, b in zip(above, below)])


def parse_interval(spec) -> tuple:
    """``"(1.25, 1.5]"`` or ``[lo, hi]`` (closed) to ``(lo, hi, lo_closed, hi_closed)`` fractions."""
    if isinstance(spec, str):
        s = spec.strip()
        if len(s) < 5 or s[0] not in "([" or s[-1] not in ")]" or "," not in s:
            raise ConfigurationError(f"cannot parse interval {spec!r}")
        lo, hi = s[1:-1].split(",")
        return _fraction(lo), _fraction(hi), s[0] == "[", s[-1] == "]"
    lo, hi = spec
    return _fraction(lo), _fraction(hi), True, True


def polytope_from_constraints(lattice: PathLattice, constraints: dict | None = None,
                              label: str = "constraints") -> ModelPolytope:
    """Constraint-form set on the path-probability vector.

    ``constraints`` keys: ``path_upper`` / ``path_lower`` (scalar or one value
    per path) and ``regions``, a list of ``{"time", "interval", "min", "max"}``
    aggregate bounds on lattice prices.
    """
    constraints = dict(constraints or {})
    N = lattice.n_paths
    upper = np.broadcast_to(np.asarray(constraints.pop("path_upper", 1.0), dtype=float), (N,)).copy()
    lower = np.broadcast_to(np.asarray(constraints.pop("path_lower", 0.0), dtype=float), (N,)).copy()
    rows, rhs = [], []
    for region in constraints.pop("regions", []) or []:
        mask = _region_mask(lattice, region).astype(float)
        if region.get("min") is not None:
            rows.append(-mask)
            rhs.append(-float(region["min"]))
        if region.get("max") is not None:
            rows.append(mask)
            rhs.append(float(region["max"]))
    if constraints:
        raise ConfigurationError(f"unknown constraint keys {sorted(constraints)}")
    if np.any(lower < 0) or np.any(upper < lower):
        raise ConfigurationError("per-path bounds must satisfy 0 <= lower <= upper")
    A = np.array(rows).reshape(len(rows), N)
    b = np.array(rhs, dtype=float)
    poly = ModelPolytope("H", N, np.ones(N, dtype=bool), A_ub=A, b_ub=b,
                         lower=lower, upper=np.minimum(upper, 1.0), label=label)
    first = linprog.solve(poly._h_lp(np.zeros(N), 1.0))
    if not first.optimal:
        err = ConfigurationError(
            "model constraints are infeasible: " + _infeasibility_message(poly))
        err.certificate = _farkas_certificate(poly)
        raise err
    poly.support = _h_support(poly, first.x)
    return poly


def full_simplex(lattice: PathLattice) -> ModelPolytope:
    """Every probability vector on the lattice paths."""
    N = lattice.n_paths
    return ModelPolytope("H", N, np.ones(N, dtype=bool), A_ub=np.zeros((0, N)), b_ub=np.zeros(0),
                         lower=np.zeros(N), upper=np.ones(N), label="full-simplex")


def _h_support(poly: ModelPolytope, first: np.ndarray) -> np.ndarray:
    N = poly.n_paths
    support = first > SUPPORT_TOL
    pending = [j for j in range(N) if not support[j] and poly.upper[j] > SUPPORT_TOL]
    for j in pending:
        if support[j]:
            continue
        e = np.zeros(N)
        e[j] = -1.0
        sol = linprog.solve(poly._h_lp(e, 1.0))
        # every LP solution marks all the paths it charges
        support |= sol.x > SUPPORT_TOL
    return support


def _elastic_lp(poly: ModelPolytope):
    N = poly.n_paths
    A = poly.A_ub if poly.A_ub is not None else np.zeros((0, N))
    m = A.shape[0]
    # rows: A P - s <= b ; P - s_u <= upper ; -P - s_l <= -lower ; sum P = 1
    rows = np.vstack([
        np.hstack([A, -np.eye(m), np.zeros((m, 2 * N))]),
        np.hstack([np.eye(N), np.zeros((N, m)), -np.eye(N), np.zeros((N, N))]),
        np.hstack([-np.eye(N), np.zeros((N, m)), np.zeros((N, N)), -np.eye(N)]),
    ])
    rhs = np.concatenate([poly.b_ub, poly.upper, -poly.lower])
    c = np.concatenate([np.zeros(N), np.ones(m + 2 * N)])
    eq = np.concatenate([np.ones(N), np.zeros(m + 2 * N)])[None, :]
    lb = np.concatenate([np.full(N, -np.inf), np.zeros(m + 2 * N)])
    return linprog.LinearProgram(c, A_eq=eq, b_eq=[1.0], A_ub=rows, b_ub=rhs, lb=lb)


def _farkas_certificate(poly: ModelPolytope) -> dict:
    sol = linprog.solve(_elastic_lp(poly))
    m = poly.A_ub.shape[0] if poly.A_ub is not None else 0
    N = poly.n_paths
    y = -sol.ub_duals
    return {"violation": sol.fun, "row_weights": y[:m], "upper_weights": y[m:m + N],
            "lower_weights": y[m + N:], "sum_weight": float(sol.eq_duals[0])}


def _infeasibility_message(poly: ModelPolytope) -> str:
    cert = _farkas_certificate(poly)
    if float(np.sum(poly.upper)) < 1.0 - 1e-12:
        return f"per-path caps sum to {float(np.sum(poly.upper)):.6g} < 1"
    return f"minimal total constraint violation {cert['violation']:.6g}"
