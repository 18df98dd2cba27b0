from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qhedge import ConfigurationError, DomainError, MarketSpec, PayoffSpec, build_lattice, cell, snap
from qhedge.lattice import evaluate, k_interval, payoff_vector, snap_indices


def test_grid_sizes_and_path_counts():
    lat = build_lattice(MarketSpec(1, 1, [0.5], [1.5]))
    assert lat.grid_values(1).tolist() == [0.5, 1.0, 1.5]
    assert lat.n_paths == 3
    lat = build_lattice(MarketSpec(1, 2, [0.5], [1.5]))
    assert lat.grid_values(1).tolist() == [0.5, 0.75, 1.0, 1.25, 1.5]
    lat = build_lattice(MarketSpec(2, 2, ["1/2", "1/4"], ["3/2", "7/4"]))
    assert lat.sizes == (5, 7)
    assert lat.n_paths == 35


def test_paths_are_lexicographic(lat2):
    P = lat2.prices[:, 1:]
    keys = [tuple(r) for r in P]
    assert keys == sorted(keys)
    for i in (0, 7, lat2.n_paths - 1):
        assert lat2.index(lat2.path(i)) == i


@pytest.mark.parametrize("lower,upper,n,bad", [
    ([0.6], [1.5], 2, "a_1"),
    ([0.5], [1.3], 2, "b_1"),
])
def test_off_grid_bounds_rejected(lower, upper, n, bad):
    with pytest.raises(ConfigurationError, match=bad):
        MarketSpec(1, n, lower, upper)


def test_bounds_must_be_strictly_nested():
    with pytest.raises(ConfigurationError):
        MarketSpec(2, 1, [0.5, 0.5], [1.5, 2.0])
    with pytest.raises(ConfigurationError):
        MarketSpec(1, 1, [0.5], [1.5], lam=0)


def test_cell_endpoint_conventions():
    assert k_interval(1, 1, 2) == (Fraction(7, 8), Fraction(9, 8), True, True)
    assert k_interval(1, 1.25, 2) == (Fraction(9, 8), Fraction(11, 8), False, True)
    assert k_interval(1, 0.75, 2) == (Fraction(5, 8), Fraction(7, 8), True, False)


def test_snap_examples():
    lat = build_lattice(MarketSpec(1, 2, [0.5], [1.5]))
    assert snap(lat, [1.0]) == (1.0,)
    assert snap(lat, [1.126]) == (1.25,)
    assert snap(lat, [1.125]) == (1.0,)
    assert snap(lat, [0.875]) == (1.0,)
    assert snap(lat, [0.874]) == (0.75,)
    with pytest.raises(DomainError):
        snap(lat, [1.6])


def _containing_paths(lat, path):
    hits = []
    for i in range(lat.n_paths):
        if all(v in iv for v, iv in zip(path, cell(lat, lat.path(i)))):
            hits.append(i)
    return hits


@given(st.lists(st.floats(0.5, 1.5), min_size=2, max_size=2))
def test_cells_partition_two_period_space(coords):
    lat = build_lattice(MarketSpec(2, 2, [0.75, 0.5], [1.25, 1.5]))
    path = [min(max(coords[0], 0.75), 1.25), coords[1]]
    hits = _containing_paths(lat, path)
    assert hits == [lat.index(snap(lat, path))]


def test_cells_partition_on_sampled_and_boundary_points():
    lat = build_lattice(MarketSpec(1, 3, [0.5], [1.5]))
    rng = np.random.default_rng(1)
    edges = np.arange(0.5, 1.5 + 1e-12, 1 / 16)
    pts = np.concatenate([rng.uniform(0.5, 1.5, 10_000), edges])
    idx = snap_indices(lat, pts[:, None])
    for v, i in zip(pts[::50].tolist() + edges.tolist(), np.concatenate([idx[::50], idx[-edges.size:]])):
        assert _containing_paths(lat, [v]) == [int(i)]


@given(st.integers(2, 8), st.lists(st.floats(0.25, 1.75), min_size=2, max_size=2))
def test_snap_error_at_most_half_step(n, coords):
    lat = build_lattice(MarketSpec(2, n, [0.5, 0.25], [1.5, 1.75]))
    path = [min(max(coords[0], 0.5), 1.5), coords[1]]
    s = np.array(snap(lat, path))
    assert np.max(np.abs(s - path)) <= 2.0 ** -(n + 1)


@given(st.integers(2, 8), st.integers(1, 3), st.integers(1, 3))
def test_grid_size_formula(n, da, db):
    a1, b1 = 1 - Fraction(da, 4), 1 + Fraction(db, 4)
    lat = build_lattice(MarketSpec(1, n, [a1], [b1]))
    assert lat.sizes[0] == (b1 - a1) * 2**n + 1


def test_payoff_examples():
    assert evaluate(PayoffSpec.power(2), [1.5]) == 2.25
    assert evaluate(PayoffSpec.put(0.75), [0.5]) == 0.25
    assert evaluate(PayoffSpec.put(1.0), [1.25]) == 0.0
    assert evaluate(PayoffSpec.call(1.0), [0.75, 1.5]) == 0.5
    assert evaluate(PayoffSpec.lookback_max(), [0.75, 0.5]) == 1.0
    assert evaluate(PayoffSpec.lookback_max(), [1.25, 0.5]) == 1.25


def test_table_payoff(lat1):
    tab = PayoffSpec.table([0.1, 0.2, 0.3])
    assert payoff_vector(tab, lat1).tolist() == [0.1, 0.2, 0.3]
    assert evaluate(tab, [1.0], lat1) == 0.2
    with pytest.raises(DomainError):
        evaluate(tab, [1.0])


def test_negative_claim_rejected():
    neg = PayoffSpec.table([-0.1, 0.0, 0.1])
    with pytest.raises(ConfigurationError):
        build_lattice(MarketSpec(1, 1, [0.5], [1.5], claim=neg))


def test_lipschitz_helpers():
    assert PayoffSpec.put(1.0).lipschitz(0.5, 1.5) == 1.0
    assert PayoffSpec.power(2).lipschitz(0.5, 1.5) == 3.0
    assert PayoffSpec.table([0.0]).lipschitz(0.5, 1.5) is None


def test_node_spans(lat2):
    # the root plus one node per first-period price
    assert len(lat2.nodes) == 4
    for node in lat2.nodes[1:]:
        sl = lat2.node_span(node)
        assert np.all(lat2.numerators[sl, 1] == node[1][0])
