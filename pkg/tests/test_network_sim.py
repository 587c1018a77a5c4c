import copy
import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hotproof.errors import NoRoute, UnknownNode
from hotproof.network_sim import (
    LiquidityEstimate,
    NetworkGraph,
    ProbeOutcome,
    ProbeResult,
    estimate_liquidity,
    find_route,
    probe_budget,
    send_probe,
)


def _graph(rows):
    """rows: [(id, a, b, capacity, local_of_a, reserve)]"""
    return NetworkGraph.from_fixture(
        [dict(id=i, a=a, b=b, capacity_sat=c, local_sat_of_a=l, reserve_sat=r) for i, a, b, c, l, r in rows]
    )


def _all_min_paths(graph, src, dst, amount):
    """Oracle: enumerate every simple path, keep the fewest hops, sort by id sequence."""
    found = []

    def walk(node, seen, path):
        if node == dst:
            found.append(list(path))
            return
        for cid, peer in graph.neighbours(node):
            if peer in seen or graph.channels[cid][2].capacity_sat < amount:
                continue
            walk(peer, seen | {peer}, path + [cid])

    walk(src, {src}, [])
    if not found:
        return None
    best = min(len(p) for p in found)
    return sorted(p for p in found if len(p) == best)[0]


def _snapshot(graph):
    return copy.deepcopy({cid: s for cid, (_, _, s) in graph.channels.items()})


# -- routing ----------------------------------------------------------------


def test_linear_route():
    g = _graph([("AB", "A", "B", 100, 50, 0), ("BC", "B", "C", 100, 50, 0)])
    assert find_route(g, "A", "C", 10) == ["AB", "BC"]


def test_disconnected():
    g = _graph([("AB", "A", "B", 100, 50, 0), ("CD", "C", "D", 100, 50, 0)])
    with pytest.raises(NoRoute):
        find_route(g, "A", "D", 1)


def test_unknown_node():
    g = _graph([("AB", "A", "B", 100, 50, 0)])
    with pytest.raises(UnknownNode):
        find_route(g, "A", "Z", 1)


def test_diamond_tie_break():
    g = _graph(
        [
            ("s-y", "S", "Y", 100, 50, 0),
            ("y-t", "Y", "T", 100, 50, 0),
            ("s-x", "S", "X", 100, 50, 0),
            ("x-t", "X", "T", 100, 50, 0),
        ]
    )
    route = find_route(g, "S", "T", 10)
    assert route == ["s-x", "x-t"]
    assert route == _all_min_paths(g, "S", "T", 10)


def test_capacity_filter_forces_longer_route():
    g = _graph(
        [
            ("a", "S", "T", 50, 25, 0),
            ("b", "S", "M", 500, 250, 0),
            ("c", "M", "T", 500, 250, 0),
        ]
    )
    assert find_route(g, "S", "T", 10) == ["a"]
    assert find_route(g, "S", "T", 100) == ["b", "c"]


@settings(max_examples=150, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(1, 100)),
        min_size=1,
        max_size=10,
    ),
    st.integers(1, 100),
)
def test_route_matches_enumeration(edges, amount):
    rows = [(f"c{i:02d}", f"n{a}", f"n{b}", cap, 0, 0) for i, (a, b, cap) in enumerate(edges) if a != b]
    if not rows:
        return
    g = _graph(rows)
    for src, dst in itertools.permutations(sorted(g.nodes), 2):
        expected = _all_min_paths(g, src, dst, amount)
        if expected is None:
            with pytest.raises(NoRoute):
                find_route(g, src, dst, amount)
        else:
            assert find_route(g, src, dst, amount) == expected


# -- probes -----------------------------------------------------------------


def _two_hop(liquidity, capacity=1_000_000, reserve=0):
    return _graph(
        [
            ("aud-x", "AUD", "X", 10_000_000, 10_000_000, 0),
            ("target", "X", "Y", capacity, liquidity + reserve, reserve),
        ]
    )


def test_minimal_probe_reaches():
    assert send_probe(_two_hop(5), "AUD", "Y", 1).succeeded


def test_probe_boundary():
    g = _two_hop(637_102)
    assert send_probe(g, "AUD", "Y", 637_102) == ProbeOutcome(ProbeResult.REACHED_DESTINATION)
    assert send_probe(g, "AUD", "Y", 637_103) == ProbeOutcome(ProbeResult.TEMPORARY_CHANNEL_FAILURE, "target")


def test_probe_no_route_is_an_outcome():
    g = _graph([("AB", "A", "B", 100, 50, 0), ("CD", "C", "D", 100, 50, 0)])
    assert send_probe(g, "A", "D", 1).result is ProbeResult.NO_ROUTE


def test_probe_rejects_nonpositive_amount():
    with pytest.raises(ValueError):
        send_probe(_two_hop(5), "AUD", "Y", 0)


def test_outcome_invariant():
    with pytest.raises(ValueError):
        ProbeOutcome(ProbeResult.TEMPORARY_CHANNEL_FAILURE)
    with pytest.raises(ValueError):
        ProbeOutcome(ProbeResult.REACHED_DESTINATION, "x")


def test_estimate_bounds_invariant():
    with pytest.raises(ValueError):
        LiquidityEstimate(5, 4, 1)


# -- estimator --------------------------------------------------------------


def test_estimate_exact():
    g = _two_hop(637_102)
    est = estimate_liquidity(g, "AUD", "target", 1)
    assert (est.lower_bound_sat, est.upper_bound_sat) == (637_102, 637_102)
    assert est.probes_used <= 22
    # ceil(log2(1e6)) + 2
    assert probe_budget(1_000_000, 1) == 22


def test_estimate_zero_liquidity():
    est = estimate_liquidity(_two_hop(0), "AUD", "target", 1000)
    assert est.lower_bound_sat == 0 and est.upper_bound_sat <= 1000


def test_estimate_full_capacity_minus_reserve():
    est = estimate_liquidity(_two_hop(990_000, reserve=10_000), "AUD", "target", 1)
    assert est.lower_bound_sat == 990_000


def test_estimate_reverse_direction():
    g = _graph(
        [
            ("aud-y", "AUD", "Y", 10_000_000, 10_000_000, 0),
            ("target", "X", "Y", 1_000_000, 300_000, 0),
        ]
    )
    est = estimate_liquidity(g, "AUD", "target", 1, from_node="Y")
    assert est.lower_bound_sat == est.upper_bound_sat == 700_000


def test_estimate_upstream_bottleneck_raises():
    g = _graph(
        [
            ("aud-x", "AUD", "X", 1_000_000, 10, 0),
            ("target", "X", "Y", 1_000_000, 500_000, 0),
        ]
    )
    with pytest.raises(NoRoute):
        estimate_liquidity(g, "AUD", "target", 1)


def test_estimate_unknown_channel():
    with pytest.raises(NoRoute):
        estimate_liquidity(_two_hop(5), "AUD", "nope", 1)


@settings(max_examples=200, deadline=None)
@given(
    capacity=st.integers(1, 2_000_000),
    frac=st.floats(0, 1),
    tolerance=st.integers(1, 50_000),
)
def test_estimator_sound_budgeted_neutral(capacity, frac, tolerance):
    liquidity = int(capacity * frac)
    g = _two_hop(liquidity, capacity=capacity)
    before = _snapshot(g)
    est = estimate_liquidity(g, "AUD", "target", tolerance)
    assert est.lower_bound_sat <= liquidity <= est.upper_bound_sat
    assert est.upper_bound_sat - est.lower_bound_sat < tolerance
    bound = max(0, math.ceil(math.log2(capacity / tolerance))) + 2
    assert est.probes_used <= bound
    assert est.probes_used <= probe_budget(capacity, tolerance)
    assert _snapshot(g) == before


def test_fixture_round_trip():
    g = _two_hop(1234)
    assert NetworkGraph.from_fixture(g.to_fixture()).channels == g.channels
