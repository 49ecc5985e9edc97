import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bmatrix_flows
from rsced.cases import synthetic_case
from rsced.errors import IslandedNetwork, ProbabilityMassExceeded
from rsced.network import (Bus, Contingency, GeneratorSpec, Line, Network,
                           all_single_line_contingencies, build_isf, directed_limits,
                           make_scenarios, no_contingencies)


def _two_bus():
    return Network((Bus(0, 0.0), Bus(1, 10.0)), (Line(0, 0, 1, 0.5, 100.0),))


def _star():
    buses = tuple(Bus(i, 10.0) for i in range(3))
    return Network(buses, (Line(0, 0, 1, 0.1, 50.0), Line(1, 0, 2, 0.1, 50.0)))


def test_two_bus_isf_single_path():
    H = build_isf(_two_bus())
    assert H.shape == (2, 2)
    assert H[0, 1] == pytest.approx(-1.0)
    assert H[1, 1] == pytest.approx(1.0)
    assert np.all(H[:, 0] == 0.0)


def test_triangle_isf_matches_bmatrix_oracle(net3):
    H = build_isf(net3)
    ell = net3.ell
    for j in range(net3.n):
        inj = np.zeros(net3.n)
        inj[j] += 1.0
        inj[net3.slack_bus] -= 1.0
        np.testing.assert_allclose(H[:ell, j], bmatrix_flows(net3, inj), atol=1e-10)


def test_removed_line_leaves_series_path(net3):
    # line 2 joins buses 1 and 2; without it bus 1 only reaches the slack through line 0
    H = build_isf(net3, {2})
    inj = np.array([-1.0, 1.0, 0.0])
    flows = H[:net3.ell] @ inj
    assert flows[0] == pytest.approx(-1.0)   # line 0 is oriented 0 -> 1
    assert flows[1] == pytest.approx(0.0)
    assert np.all(H[[2, 2 + net3.ell]] == 0.0)


def test_removal_matches_fresh_network(net3):
    H_k = build_isf(net3, {1})
    trimmed = Network(net3.buses, (Line(0, 0, 1, 0.9, 9000.0), Line(1, 1, 2, 0.75, 50.0)))
    fresh = build_isf(trimmed)
    ell = net3.ell
    np.testing.assert_allclose(H_k[[0, 2]], fresh[:2], atol=1e-12)
    np.testing.assert_allclose(H_k[[ell, ell + 2]], fresh[2:], atol=1e-12)


def test_islanding_is_rejected():
    with pytest.raises(IslandedNetwork):
        build_isf(_star(), {0})
    with pytest.raises(IslandedNetwork):
        Network((Bus(0, 1.0), Bus(1, 1.0), Bus(2, 1.0)), (Line(0, 0, 1, 0.1, 5.0),))


def test_unknown_removed_line():
    with pytest.raises(ValueError):
        build_isf(_two_bus(), {3})


def test_triangle_contingencies(net3):
    scen = all_single_line_contingencies(net3, 0.1)
    assert scen.K == 3
    assert scen.probabilities.sum() == pytest.approx(0.3)
    assert scen.warnings == ()


def test_star_network_has_only_bridges():
    scen = all_single_line_contingencies(_star(), 0.1)
    assert scen.K == 0
    assert len(scen.warnings) == 2
    assert all("bridge" in w for w in scen.warnings)


def test_probability_mass_exceeded(net3):
    with pytest.raises(ProbabilityMassExceeded):
        all_single_line_contingencies(net3, 0.4)


def test_contingency_validation():
    with pytest.raises(ValueError):
        Contingency(0, frozenset(), 0.1)
    with pytest.raises(ValueError):
        Contingency(0, {0}, 1.0)
    with pytest.raises(ValueError):
        Contingency(0, {0}, 0.1, da_multiplier=1.1, se_multiplier=1.2)


def test_directed_limits(net3):
    da = directed_limits(net3, 1.8)
    se = directed_limits(net3, 1.2)
    ell = net3.ell
    assert da[2] == pytest.approx(90.0) and da[2 + ell] == pytest.approx(90.0)
    assert se[2] == pytest.approx(60.0) and se[2 + ell] == pytest.approx(60.0)
    np.testing.assert_array_equal(directed_limits(net3), np.tile(net3.capacity, 2))
    with pytest.raises(ValueError):
        directed_limits(net3, 0.0)


def test_scenario_limits_mark_removed_rows(scen3):
    ell = scen3.network.ell
    for k, con in enumerate(scen3.contingencies):
        (line,) = con.removed_lines
        for lim in (scen3.limits_da(k), scen3.limits_se(k), scen3.limits_nominal(k)):
            assert np.isinf(lim[line]) and np.isinf(lim[line + ell])
            assert np.isfinite(np.delete(lim, [line, line + ell])).all()


def test_with_probability_shares_isf(scen3):
    moved = scen3.with_probability(1, 0.0)
    assert moved.probabilities[1] == 0.0
    assert moved.isf[0] is scen3.isf[0]
    with pytest.raises(ProbabilityMassExceeded):
        scen3.with_probability(1, 0.95)


def test_explicit_scenarios_and_empty_set(net3):
    scen = make_scenarios(net3, [Contingency(0, {2}, 0.05, 1.8, 1.2)])
    assert scen.K == 1
    np.testing.assert_array_equal(scen.isf[0], build_isf(net3, {2}))
    empty = no_contingencies(net3)
    assert empty.K == 0 and empty.probabilities.size == 0


def test_network_defaults_fill_generators():
    net = Network((Bus(0, 5.0), Bus(1, 5.0)), (Line(0, 0, 1, 0.2, 10.0),),
                  (GeneratorSpec(1, cost=3.0, gmax=20.0),))
    assert net.gmax.tolist() == [0.0, 20.0]
    np.testing.assert_array_equal(net.load_shed_cap, net.demand)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 9), seed=st.integers(0, 10_000), slack=st.integers(0, 8),
       data=st.data())
def test_isf_invariants_on_random_networks(n, seed, slack, data):
    case = synthetic_case(n, seed=seed)
    net = case.network().replace(slack_bus=slack % n)
    removable = [ln.id for ln in net.lines if net.is_connected_without([ln.id])]
    removed = set()
    if removable and data.draw(st.booleans()):
        removed = {data.draw(st.sampled_from(removable))}
    H = build_isf(net, removed)
    ell = net.ell
    np.testing.assert_allclose(H[:, net.slack_bus], 0.0, atol=1e-12)
    np.testing.assert_allclose(H[ell:], -H[:ell], atol=1e-12)
    x = np.array(data.draw(st.lists(st.floats(-100, 100), min_size=n, max_size=n)))
    x -= x.mean()
    np.testing.assert_allclose(H[:ell] @ x, bmatrix_flows(net, x, removed), atol=1e-9)
