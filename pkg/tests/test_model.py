import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import cvar_grid, cvar_tail
from rsced.errors import InfeasibleProblem, InvalidAlpha
from rsced.model import (LoadShedDistribution, Variant, build, build_ed, build_rsced, cvar,
                         dispatch, shed_distribution, solve_dispatch, stationarity_residuals)
from rsced.network import Bus, GeneratorSpec, Network, no_contingencies


def _dispatch_close(g, expected, tol=0.5):
    np.testing.assert_allclose(g, expected, atol=tol)


@pytest.fixture(scope="module")
def rsced_solutions(net3, scen3):
    return {a: dispatch("rsced", net3, scen3, a) for a in (0.0, 0.1, 0.9)}


def test_ed_three_bus(net3):
    sol = dispatch("ed", net3)
    _dispatch_close(sol.g, [144.3, 170.7, 0.0])
    assert sol.objective == pytest.approx(926.0, abs=1.0)
    assert sol.y.size == 0 and sol.dd.shape == (0, 3) and sol.mu_da.shape == (0, 6)


def test_ed_single_bus():
    net = Network((Bus(0, 10.0),), (), (GeneratorSpec(0, cost=5.0, gmax=20.0),))
    sol = dispatch("ed", net)
    assert sol.g[0] == pytest.approx(10.0)
    assert sol.objective == pytest.approx(50.0)
    assert sol.lam == pytest.approx(5.0)


def test_ed_merit_order_when_uncongested(case3):
    net = case3.network()
    net = net.replace(lines=tuple(ln if ln.id != 2 else type(ln)(2, 1, 2, ln.reactance, 9000.0)
                                  for ln in net.lines))
    sol = dispatch("ed", net)
    # merit order: the cheapest unit runs to its cap, the next one covers the rest
    order = np.argsort(net.cost)
    assert sol.g[order[0]] == pytest.approx(net.gmax[order[0]])
    assert sol.g[order[1]] == pytest.approx(net.demand.sum() - net.gmax[order[0]])
    assert sol.g[order[2]] == pytest.approx(0.0, abs=1e-9)


def test_psced_reference_dispatch(net3, scen3):
    sol = dispatch("psced", net3, scen3)
    _dispatch_close(sol.g, [110.0, 160.0, 45.0])
    assert sol.objective == pytest.approx(1192.0, abs=1.0)


def test_psced_without_scenarios_equals_ed(net3):
    ed = dispatch("ed", net3)
    ps = dispatch("psced", net3, no_contingencies(net3))
    np.testing.assert_allclose(ps.g, ed.g, atol=1e-9)
    assert ps.objective == pytest.approx(ed.objective)


def test_psced_relaxed_limits_are_cheaper(net3, scen3):
    nominal = dispatch("psced", net3, scen3).objective
    se = dispatch("psced", net3, scen3, psced_limit="se").objective
    da = dispatch("psced", net3, scen3, psced_limit="da").objective
    assert da <= se + 1e-9 <= nominal + 2e-9
    assert da <= 1192.0
    with pytest.raises(ValueError):
        build("psced", net3, scen3, psced_limit="bogus")


def test_csced_reference_dispatch(net3, scen3):
    sol = dispatch("csced", net3, scen3)
    _dispatch_close(sol.g, [119.0, 181.0, 15.0])
    assert sol.nominal_cost == pytest.approx(962.0, abs=1.0)
    assert np.all(sol.dd == 0.0)
    assert sol.reserve_cost == 0.0


def test_csced_without_reserve_equals_psced(fig3):
    case = fig3(reserve_cap=0.0)
    net = case.network()
    scen = case.scenarios(net)
    cs = dispatch("csced", net, scen)
    ps = dispatch("psced", net, scen, psced_limit="se")
    np.testing.assert_allclose(cs.g, ps.g, atol=1e-7)
    np.testing.assert_allclose(cs.dg, 0.0, atol=1e-9)


def test_csced_infeasible_without_recourse(no_recourse_case):
    net = no_recourse_case.network()
    scen = no_recourse_case.scenarios(net)
    with pytest.raises(InfeasibleProblem, match="C-SCED"):
        dispatch("csced", net, scen)
    assert dispatch("rsced", net, scen, 0.0).total_shed > 0


@pytest.mark.parametrize("alpha, g, nominal, reserve, shed", [
    (0.0, (119.0, 181.0, 15.0), 962.0, 28.8, 31.0),
    (0.1, (110.0, 184.7, 20.3), 974.9, 21.1, 29.34),
    (0.9, (110.0, 170.0, 35.0), 1104.0, 0.0, 0.0),
])
def test_rsced_reference_rows(rsced_solutions, alpha, g, nominal, reserve, shed):
    sol = rsced_solutions[alpha]
    _dispatch_close(sol.g, g)
    assert sol.nominal_cost == pytest.approx(nominal, abs=1.0)
    assert sol.reserve_cost == pytest.approx(reserve, abs=1.0)
    assert sol.total_shed == pytest.approx(shed, abs=0.5)


def test_invalid_alpha(net3, scen3):
    for alpha in (-0.1, 1.0, 1.5, float("nan")):
        with pytest.raises(InvalidAlpha):
            build_rsced(net3, scen3, alpha)
    with pytest.raises(InvalidAlpha):
        cvar(1.0, [(1.0, 1.0)])


def test_accounting_identity(rsced_solutions):
    for sol in rsced_solutions.values():
        assert sol.objective == pytest.approx(sol.nominal_cost + sol.reserve_cost + sol.cvar_term,
                                              abs=1e-9)


def test_named_stationarity(rsced_solutions, net3, scen3):
    for sol in list(rsced_solutions.values()) + [dispatch("csced", net3, scen3),
                                                 dispatch("ed", net3)]:
        res = stationarity_residuals(sol)
        assert max(res.values()) <= 1e-7, res
        assert sol.kkt.ok(1e-7)


def test_z_multiplier_row(rsced_solutions):
    sol = rsced_solutions[0.9]
    assert sol.lam > 0 and sol.mu.shape == (6,)
    assert 1.0 - sol.nu_hi.sum() - sol.zeta == pytest.approx(0.0, abs=1e-9)
    assert sol.zeta >= 0.0


def test_per_scenario_balance_and_epigraph(rsced_solutions):
    for sol in rsced_solutions.values():
        np.testing.assert_allclose((sol.dg + sol.dd).sum(axis=1), 0.0, atol=1e-7)
        shed_cost = sol.dd @ sol.network.voll
        np.testing.assert_allclose(sol.y, np.maximum(0.0, shed_cost - sol.z), atol=1e-7)


def test_variant_nesting(net3, scen3):
    ed = dispatch("ed", net3).objective
    cs = dispatch("csced", net3, scen3).nominal_cost
    ps = dispatch("psced", net3, scen3).nominal_cost
    assert ed <= cs <= ps


def test_alpha_monotonicity(net3, scen3):
    alphas = np.round(np.arange(0.0, 0.951, 0.05), 2)
    sols = [dispatch("rsced", net3, scen3, a) for a in alphas]
    shed = np.array([s.total_shed for s in sols])
    cost = np.array([s.nominal_cost + s.reserve_cost for s in sols])
    assert np.all(np.diff(shed) <= 1e-7)
    assert np.all(np.diff(cost) >= -1e-7)


def test_probability_response(net3, scen3):
    # contingency 1 removes line 0-2, i.e. line 1-3 in one-based bus numbering
    assert scen3.contingencies[1].removed_lines == {1}
    prev_cost, prev_shed = -math.inf, math.inf
    for p in np.linspace(0.0, 0.3, 13):
        sol = dispatch("rsced", net3, scen3.with_probability(1, float(p)), 0.9)
        assert sol.nominal_cost >= prev_cost - 1e-7
        assert sol.total_shed <= prev_shed + 1e-7
        prev_cost, prev_shed = sol.nominal_cost, sol.total_shed


def test_variable_layout(net3, scen3):
    lp, index = build_rsced(net3, scen3, 0.5)
    assert index.z == 0 and index.first_stage == slice(0, 1 + 3 * net3.n)
    assert lp.num_vars == index.num_vars == 1 + 3 * 3 + 3 * (1 + 2 * 3)
    for k in range(index.K):
        sl = index.scenario_vars(k)
        assert sl.stop - sl.start == 1 + 2 * net3.n
    _, ed_index = build_ed(net3)
    assert ed_index.variant is Variant.ED and ed_index.z is None


def test_solve_dispatch_attaches_kkt(net3, scen3):
    lp, index = build_rsced(net3, scen3, 0.0)
    sol = solve_dispatch(lp, index)
    assert sol.has_duals and sol.kkt.worst <= 1e-7


# ---------------------------------------------------------------------- CVaR
def test_cvar_examples():
    two = [(930.0, 0.1), (0.0, 0.9)]
    assert cvar(0.0, two) == pytest.approx(93.0)
    assert cvar(0.95, two) == pytest.approx(930.0)
    assert cvar(0.5, [(100.0, 0.25), (200.0, 0.25), (0.0, 0.5)]) == pytest.approx(150.0)


def test_distribution_validation():
    with pytest.raises(ValueError):
        LoadShedDistribution(((1.0, 0.5),))
    with pytest.raises(ValueError):
        LoadShedDistribution(((-1.0, 1.0),))
    with pytest.raises(ValueError):
        LoadShedDistribution(())


def test_shed_distribution_matches_epigraph(rsced_solutions):
    sol = rsced_solutions[0.0]
    dist = shed_distribution(sol)
    assert len(dist.outcomes) == sol.scenarios.K + 1
    assert dist.probabilities.sum() == pytest.approx(1.0)
    assert cvar(0.0, dist) == pytest.approx(sol.cvar_term, abs=1e-6)
    # 31 MW shed at a uniform 30 $/MWh
    assert dist.costs.sum() == pytest.approx(930.0, abs=1e-6)


def test_shed_distribution_without_shed(rsced_solutions):
    dist = shed_distribution(rsced_solutions[0.9])
    assert np.all(dist.costs == 0.0)
    assert cvar(0.5, dist) == 0.0


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e4), st.floats(0.01, 1.0)), min_size=1, max_size=8),
       st.floats(0.0, 0.99))
def test_cvar_properties(raw, alpha):
    total = sum(p for _, p in raw)
    outcomes = [(c, p / total) for c, p in raw]
    outcomes[-1] = (outcomes[-1][0], 1.0 - math.fsum(p for _, p in outcomes[:-1]))
    value = cvar(alpha, outcomes)
    dist = LoadShedDistribution(tuple(outcomes))
    assert dist.expectation() - 1e-9 * (1 + value) <= value
    assert value <= max(c for c, _ in outcomes) + 1e-9 * (1 + value)
    assert value == pytest.approx(cvar_tail(alpha, outcomes), rel=1e-9, abs=1e-9)
    assert value <= cvar_grid(alpha, outcomes) + 1e-9 * (1 + value)
    assert cvar(min(alpha + 0.005, 0.999), outcomes) >= value - 1e-9 * (1 + value)
