import numpy as np
import pytest

from lpforge.audit import check_solution
from lpforge.decompose import (HorizonPlan, default_lambda, fine_tune,
                               forward_rolling_horizon, guided_frh,
                               guided_rolling_horizon, rolling_horizon,
                               solve_whole)
from lpforge.errors import DecompositionInfeasible
from lpforge.modelgen import gen_production_planning
from lpforge.sequential import build_sequential
from lpforge.solver import Solution, solve_lp

METHODS = [rolling_horizon, forward_rolling_horizon, guided_rolling_horizon,
           guided_frh]


@pytest.fixture(scope="module")
def seq16():
    sym, data, meta = gen_production_planning(16, 1, 5, 42)
    return build_sequential(sym, data, meta)


@pytest.fixture(scope="module")
def optimum(seq16):
    sol = solve_whole(seq16)
    assert sol.optimal
    return sol


def test_plan_validation():
    with pytest.raises(ValueError):
        HorizonPlan([1, 3, 3, 9]).check(8)
    with pytest.raises(ValueError):
        HorizonPlan([1, 9]).check(16)
    with pytest.raises(ValueError):
        HorizonPlan([1, 5, 17], lambdas=[0.1]).check(16)
    with pytest.raises(ValueError):
        HorizonPlan([1, 5, 17], lambdas=[-1.0, 0.0]).check(16)
    plan = HorizonPlan.even(16, 4)
    assert plan.boundaries == [1, 5, 9, 13, 17]
    assert HorizonPlan.even(10, 3).boundaries == [1, 5, 8, 11]


def test_h1_reduction_equals_whole_solve(seq16, optimum):
    plan = HorizonPlan.even(16, 1)
    for method in METHODS:
        res = method(seq16, plan)
        assert res.objective == pytest.approx(optimum.objective,
                                              rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("method", METHODS)
def test_feasible_and_gap_nonnegative(seq16, optimum, method):
    res = method(seq16, HorizonPlan.even(16, 4))
    assert res.optimal
    assert res.audit_violation <= 1e-7
    assert check_solution(seq16.base, res.x).ok(1e-7)
    assert res.objective >= optimum.objective - 1e-6 * abs(optimum.objective)
    assert len(res.horizons) == 4


def test_zero_lambda_guided_equals_rh(seq16):
    rh = rolling_horizon(seq16, HorizonPlan.even(16, 4))
    g0 = guided_rolling_horizon(seq16, HorizonPlan.even(16, 4,
                                                        lambdas=[0.0] * 4))
    assert g0.objective == pytest.approx(rh.objective, rel=1e-12)


def test_frh_last_horizon_has_no_tail(seq16):
    # a 2-horizon plan whose second window IS the tail: the last window
    # must solve the original (unaggregated) periods
    plan = HorizonPlan([1, 9, 17], M=1)
    res = forward_rolling_horizon(seq16, plan)
    assert res.optimal
    # every period appears in the accepted solution at original resolution
    assert set(np.unique(seq16.var_period)) == set(range(1, 17))


def test_frh_identity_when_tail_already_m_periods(seq16):
    # two horizons with a tail of exactly M periods: aggregation is the
    # identity, so FRH's first sub-model is simply the window extended by
    # those M untouched periods; rolling horizon with overlap M solves the
    # identical sequence of sub-problems
    for m, bounds in ((1, [1, 16, 17]), (4, [1, 13, 17])):
        frh = forward_rolling_horizon(seq16, HorizonPlan(bounds, M=m))
        rh = rolling_horizon(seq16, HorizonPlan(bounds, overlap=m))
        assert frh.objective == pytest.approx(rh.objective, rel=1e-12)


def test_frh_not_worse_than_rh_here(seq16):
    rh = rolling_horizon(seq16, HorizonPlan.even(16, 4))
    frh = forward_rolling_horizon(seq16, HorizonPlan.even(16, 4))
    assert frh.objective <= rh.objective + 1e-9


def test_guidance_pulls_toward_master(seq16):
    rh = rolling_horizon(seq16, HorizonPlan.even(16, 4))
    grh = guided_rolling_horizon(
        seq16, HorizonPlan.even(16, 4, lambdas=[10.0] * 4))
    assert grh.objective <= rh.objective + 1e-9
    assert grh.master is not None


def test_default_lambda_scale(seq16):
    lam = default_lambda(seq16.base)
    nz = seq16.base.objective[seq16.base.objective != 0]
    assert lam == pytest.approx(1e-3 * float(np.mean(np.abs(nz))))


@pytest.mark.parametrize("method", METHODS)
def test_fine_tune_never_worse(seq16, method):
    res = method(seq16, HorizonPlan.even(16, 4))
    tuned = fine_tune(seq16, res, 8)
    assert tuned.objective <= res.objective + 1e-9
    assert check_solution(seq16.base, tuned.x).ok(1e-7)


def test_fine_tune_full_resolve_reaches_optimum(seq16, optimum):
    res = rolling_horizon(seq16, HorizonPlan.even(16, 4))
    tuned = fine_tune(seq16, res, 16)
    assert tuned.objective == pytest.approx(optimum.objective, rel=1e-9)


def test_fine_tune_k0_keeps_objective(seq16):
    res = rolling_horizon(seq16, HorizonPlan.even(16, 4))
    tuned = fine_tune(seq16, res, 0)
    assert tuned.objective == pytest.approx(res.objective, rel=1e-9)


def test_fine_tune_falls_back_on_solver_failure(seq16):
    res = rolling_horizon(seq16, HorizonPlan.even(16, 4))

    def broken(model, opts=None):
        return Solution("IterationLimit", None, None, 0)

    tuned = fine_tune(seq16, res, 8, solver=broken)
    assert tuned.objective == pytest.approx(res.objective)
    assert np.array_equal(tuned.x, res.x)


def test_overlap_does_not_break_feasibility(seq16, optimum):
    res = rolling_horizon(seq16, HorizonPlan.even(16, 4, overlap=2))
    assert res.audit_violation <= 1e-7
    assert res.objective >= optimum.objective - 1e-9


def test_stop_after_period_partial(seq16):
    res = rolling_horizon(seq16, HorizonPlan.even(16, 4,
                                                  stop_after_period=8))
    assert res.partial_through == 8
    assert len(res.horizons) == 2
    assert res.audit_violation <= 1e-7  # audited on rows up to period 8


def test_resolve_master_flag(seq16):
    res = guided_rolling_horizon(
        seq16, HorizonPlan.even(16, 4, lambdas=[10.0] * 4,
                                resolve_master=True))
    assert res.optimal and res.audit_violation <= 1e-7


def test_infeasible_subproblem_reports_horizon(seq16):
    calls = []

    def failing(model, opts=None):
        calls.append(1)
        if len(calls) >= 3:
            return Solution("Infeasible", None, None, 0)
        return solve_lp(model, opts)

    with pytest.raises(DecompositionInfeasible) as ei:
        rolling_horizon(seq16, HorizonPlan.even(16, 4), solver=failing)
    assert ei.value.horizon == 3


def test_manifest_structure(seq16, optimum):
    plan = HorizonPlan.even(16, 4)
    res = guided_frh(seq16, plan)
    doc = res.manifest(plan, baseline=optimum.objective)
    assert doc["method"] == "gfrh"
    assert len(doc["horizons"]) == 4
    assert doc["master"] is not None
    assert doc["gap"] >= -1e-9
    assert doc["plan"]["boundaries"] == [1, 5, 9, 13, 17]


def test_h_equals_t_one_period_windows(seq16, optimum):
    res = rolling_horizon(seq16, HorizonPlan.even(16, 16))
    assert res.optimal
    assert res.audit_violation <= 1e-7
    assert res.objective >= optimum.objective - 1e-9
    assert len(res.horizons) == 16


def test_gfrh_zero_lambda_reduces_to_frh(seq16):
    frh = forward_rolling_horizon(seq16, HorizonPlan.even(16, 4))
    g0 = guided_frh(seq16, HorizonPlan.even(16, 4, lambdas=[0.0] * 4))
    assert g0.objective == pytest.approx(frh.objective, rel=1e-12)


def test_guidance_reproduces_achievable_targets():
    # zero demand: the master's optimum is all-zero, which every window can
    # hit exactly, so high-weight guidance drives the L1 gap to zero and the
    # accepted group sums equal the master targets
    from lpforge.decompose import _solve_master
    from lpforge.modelgen import gen_production_planning
    from lpforge.sequential import build_sequential
    from lpforge.solver import SolveOptions

    sym, data, meta = gen_production_planning(4, 1, 3, 77)
    data.parameter_arrays["D"] = {k: 0.0 for k in data.parameter_arrays["D"]}
    seq = build_sequential(sym, data, meta)
    plan = HorizonPlan.even(4, 2, lambdas=[50.0, 50.0])
    targets, _, _ = _solve_master(seq, plan, solver=solve_lp,
                                  opts=SolveOptions())
    res = guided_rolling_horizon(seq, plan)
    assert res.optimal
    sums: dict = {}
    for j in range(seq.base.num_vars):
        fam, idx = seq.base.col_key(j)
        if fam in seq.meta.state_variables:
            continue
        t = int(seq.var_period[j])
        k = 1 if t <= 2 else 2
        key = (seq.group_of(fam, idx), k)
        sums[key] = sums.get(key, 0.0) + float(res.x[j])
    for key, z in targets.items():
        assert sums.get(key, 0.0) == pytest.approx(z, abs=1e-7)
