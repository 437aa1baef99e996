import itertools

import numpy as np
import pytest

from lpforge.assemble import instantiate_efficient, instantiate_exhaustive
from lpforge.audit import check_solution
from lpforge.data import check_bundle
from lpforge.errors import GenerationError
from lpforge.ir import validate
from lpforge.modelgen import (gen_min_cost_flow, gen_p_median,
                              gen_production_planning, paper_flow_instance)
from lpforge.sequential import build_sequential
from lpforge.solver import solve_lp


def test_paper_instance_is_exact():
    model, data = paper_flow_instance()
    assert data.index_sets["E"] == [(1, 2), (2, 4), (1, 3), (3, 4)]
    assert data.parameter_arrays["s"] == {(1,): 1.0, (2,): 0.0, (3,): 0.0,
                                          (4,): -1.0}
    assert all(v == 1.0 for v in data.parameter_arrays["c"].values())


def test_flow_generator_deterministic():
    _, d1 = gen_min_cost_flow(50, 200, 123)
    _, d2 = gen_min_cost_flow(50, 200, 123)
    assert d1.to_json() == d2.to_json()
    _, d3 = gen_min_cost_flow(50, 200, 124)
    assert d1.to_json() != d3.to_json()


def test_flow_generator_feasible_and_connected():
    model, data = gen_min_cost_flow(30, 60, 5)
    assert validate(model).ok and not check_bundle(model, data)
    edges = set(data.index_sets["E"])
    assert len(edges) == 60  # distinct edges
    canon = instantiate_efficient(model, data)
    sol = solve_lp(canon)
    assert sol.optimal  # a 1 -> n path exists by construction
    assert check_solution(canon, sol.x).ok(1e-7)


def test_flow_generator_rejects_impossible():
    with pytest.raises(GenerationError):
        gen_min_cost_flow(10, 5, 1)
    with pytest.raises(GenerationError):
        gen_min_cost_flow(3, 20, 1)


def test_flow_engines_agree_on_generated():
    model, data = gen_min_cost_flow(40, 120, 9)
    assert instantiate_efficient(model, data) == \
        instantiate_exhaustive(model, data)


def test_pmedian_singleton():
    model, data = gen_p_median(1, 1, 1, 0)
    canon = instantiate_efficient(model, data)
    sol = solve_lp(canon)
    assert sol.optimal
    assert sol.objective == pytest.approx(
        data.parameter_arrays["d"][(1, 1)])


def test_pmedian_lp_below_bruteforce():
    model, data = gen_p_median(12, 5, 2, 7)
    canon = instantiate_efficient(model, data)
    sol = solve_lp(canon)
    assert sol.optimal
    d = data.parameter_arrays["d"]
    best = min(
        sum(min(d[(c, f)] for f in opens) for c in range(1, 13))
        for opens in itertools.combinations(range(1, 6), 2))
    assert sol.objective <= best + 1e-9
    assert check_solution(canon, sol.x).ok(1e-7)


def test_pmedian_row_count_formula():
    model, data = gen_p_median(20, 4, 2, 3)
    canon = instantiate_efficient(model, data)
    assert canon.num_rows == 20 + 20 * 4 + 1
    assert canon.num_vars == 20 * 4 + 4


def test_production_deterministic_bytes():
    _, d1, m1 = gen_production_planning(8, 2, 6, 77)
    _, d2, m2 = gen_production_planning(8, 2, 6, 77)
    assert d1.to_json() == d2.to_json()
    assert m1 == m2


def test_production_zero_demand_all_zero_optimal():
    sym, data, meta = gen_production_planning(4, 1, 3, 5, demand_scale=4.0)
    zero_d = {k: 0.0 for k in data.parameter_arrays["D"]}
    data.parameter_arrays["D"] = zero_d
    seq = build_sequential(sym, data, meta)
    sol = solve_lp(seq.base)
    assert sol.optimal
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


def test_production_demand_spike_absorbed_by_delay():
    sym, data, meta = gen_production_planning(4, 1, 4, 13)
    seq = build_sequential(sym, data, meta)
    sol = solve_lp(seq.base)
    assert sol.optimal
    assert check_solution(seq.base, sol.x).ok(1e-7)
    # the all-zero decision vector is feasible: delay absorbs every demand
    x0 = np.zeros(seq.base.num_vars)
    code_inv = seq.base.families.index("inv")
    code_m = seq.base.families.index("m")
    inv_cum = {}
    m_cum = {}
    for j in range(seq.base.num_vars):
        fam, idx = seq.base.col_key(j)
        t = idx[0]
        if fam == "inv":
            key = idx[1:]
            inv_cum[key] = inv_cum.get(key, 0.0) + \
                seq.data.parameter_arrays["po"].get(idx, 0.0)
            x0[j] = inv_cum[key]
        elif fam == "m":
            key = idx[1:]
            m_cum[key] = m_cum.get(key, 0.0) + \
                seq.data.parameter_arrays["D"].get(idx, 0.0)
            x0[j] = m_cum[key]
    assert check_solution(seq.base, x0).ok(1e-7)


def test_production_engines_agree():
    sym, data, _ = gen_production_planning(6, 2, 5, 21)
    assert instantiate_efficient(sym, data) == \
        instantiate_exhaustive(sym, data)


def test_production_guardrails():
    with pytest.raises(GenerationError):
        gen_production_planning(1, 1, 5, 0)
    with pytest.raises(GenerationError):
        gen_production_planning(4, 1, 2, 0)
