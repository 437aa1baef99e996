import stat
import sys
import textwrap

import numpy as np
import pytest

from fuzz import fuzz_model
from lpforge.assemble import instantiate_efficient
from lpforge.audit import check_solution
from lpforge.canonical import SIGN_CODE, from_rows
from lpforge.errors import BoundViolation
from lpforge.rng import SplitMix64
from lpforge.solver import (SolveOptions, fix_variables, make_solver,
                            round_and_fix, solve_lp, solve_with_executable)


def toy(catalog, rows, obj, lower, upper, integer=None):
    n = len(catalog)
    return from_rows(catalog, rows, obj, lower, upper,
                     integer if integer is not None else [False] * n)


def test_flow_optimum_is_two(flow_fixture):
    # enumeration oracle: the only unit 1->4 routes are 1-2-4 and 1-3-4,
    # both cost 2 under unit arc costs, so the optimum is exactly 2
    model, data = flow_fixture
    canon = instantiate_efficient(model, data)
    sol = solve_lp(canon)
    assert sol.optimal
    assert sol.objective == pytest.approx(2.0, abs=1e-9)
    assert check_solution(canon, sol.x).ok(1e-7)
    x12 = sol.x[canon.col_id("x", (1, 2))]
    x13 = sol.x[canon.col_id("x", (1, 3))]
    assert x12 + x13 == pytest.approx(1.0, abs=1e-9)


def test_infeasible_toy():
    m = toy([("x", ())], [([(0, 1.0)], "<=", -1.0, 1, ())], [], [0.0],
            [np.inf])
    assert solve_lp(m).status == "Infeasible"


def test_unbounded_toy():
    m = toy([("x", ())], [], [(0, -1.0)], [0.0], [np.inf])
    assert solve_lp(m).status == "Unbounded"


def test_iteration_limit_status():
    model, data = pytest.importorskip("lpforge.modelgen").gen_p_median(
        12, 4, 2, 1)
    canon = instantiate_efficient(model, data)
    sol = solve_lp(canon, SolveOptions(max_iters=2))
    assert sol.status == "IterationLimit"


def test_determinism(flow_fixture):
    model, data = flow_fixture
    canon = instantiate_efficient(model, data)
    a = solve_lp(canon)
    b = solve_lp(canon)
    assert a.status == b.status and a.iterations == b.iterations
    assert np.array_equal(a.x, b.x)


def test_equality_bound_columns_substituted():
    # x fixed by equal bounds; only y is actually solved
    m = toy([("x", ()), ("y", ())],
            [([(0, 1.0), (1, 1.0)], "=", 5.0, 1, ())],
            [(1, 3.0)], [2.0, 0.0], [2.0, np.inf])
    sol = solve_lp(m)
    assert sol.optimal
    assert sol.x[0] == 2.0
    assert sol.x[1] == pytest.approx(3.0)


def test_upper_bounds_respected():
    m = toy([("x", ())], [], [(0, -1.0)], [0.0], [4.0])
    sol = solve_lp(m)
    assert sol.optimal and sol.x[0] == pytest.approx(4.0)


def test_free_variable_negative_optimum():
    m = toy([("x", ())], [([(0, 1.0)], ">=", -3.0, 1, ())],
            [(0, 1.0)], [-np.inf], [np.inf])
    sol = solve_lp(m)
    assert sol.optimal and sol.x[0] == pytest.approx(-3.0)


# ---------------------------------------------------------------------------
# Fuzz cross-check against an independent implementation
# ---------------------------------------------------------------------------

def random_lp(seed):
    rng = SplitMix64(seed)
    n = rng.randint(1, 6)
    mrows = rng.randint(1, 8)
    catalog = [("x", (j,)) for j in range(n)]
    vals = [-3.0, -1.0, -0.5, 0.5, 1.0, 2.0, 4.0]
    rows = []
    for r in range(mrows):
        entries = [(j, rng.choice(vals)) for j in range(n)
                   if rng.next_float() < 0.7]
        rows.append((entries, rng.choice(["<=", ">=", "="]),
                     rng.choice(vals) * rng.choice([0.0, 1.0, 2.0]), 1, (r,)))
    obj = [(j, rng.choice(vals)) for j in range(n)]
    lower = [0.0] * n
    upper = [np.inf if rng.next_float() < 0.7 else abs(rng.choice(vals)) * 2
             for _ in range(n)]
    return toy(catalog, rows, obj, lower, upper)


@pytest.mark.parametrize("seed", range(80))
def test_against_scipy_linprog(seed):
    scipy_opt = pytest.importorskip("scipy.optimize")
    m = random_lp(seed)
    sol = solve_lp(m)
    a = m.dense()
    eq = m.row_sign == SIGN_CODE["="]
    le = m.row_sign == SIGN_CODE["<="]
    ge = m.row_sign == SIGN_CODE[">="]
    a_ub = np.concatenate([a[le], -a[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([m.row_rhs[le], -m.row_rhs[ge]]) \
        if a_ub is not None else None
    ref = scipy_opt.linprog(
        m.objective, A_ub=a_ub, b_ub=b_ub,
        A_eq=a[eq] if eq.any() else None,
        b_eq=m.row_rhs[eq] if eq.any() else None,
        bounds=list(zip(m.col_lower, [None if np.isinf(u) else u
                                      for u in m.col_upper])),
        method="highs")
    if ref.status == 0:
        assert sol.optimal, f"scipy optimal but we said {sol.status}"
        assert sol.objective == pytest.approx(ref.fun, rel=1e-6, abs=1e-6)
        assert check_solution(m, sol.x).ok(1e-7)
    elif ref.status == 2:
        assert sol.status == "Infeasible"
    elif ref.status == 3:
        assert sol.status == "Unbounded"


@pytest.mark.parametrize("seed", range(30))
def test_audit_every_optimal_on_instantiated_fuzz(seed):
    model, data = fuzz_model(seed + 2000)
    canon = instantiate_efficient(model, data)
    if canon.num_vars == 0 or canon.num_vars > 60 or canon.num_rows > 80:
        pytest.skip("degenerate or oversized for the dense reference solver")
    sol = solve_lp(canon, SolveOptions(max_iters=5000))
    if sol.optimal:
        assert check_solution(canon, sol.x).ok(1e-7)


# ---------------------------------------------------------------------------
# fix_variables
# ---------------------------------------------------------------------------

def test_fix_variables_keeps_structure(flow_fixture):
    model, data = flow_fixture
    canon = instantiate_efficient(model, data)
    j = canon.col_id("x", (1, 2))
    fixed = fix_variables(canon, {j: 1.0})
    assert fixed.num_rows == canon.num_rows
    assert fixed.num_vars == canon.num_vars
    assert fixed.col_lower[j] == fixed.col_upper[j] == 1.0
    sol = solve_lp(fixed)
    assert sol.optimal and sol.objective == pytest.approx(2.0)


def test_fix_variables_empty_is_identity(flow_fixture):
    model, data = flow_fixture
    canon = instantiate_efficient(model, data)
    assert fix_variables(canon, {}) == canon


def test_fix_variables_bound_violation():
    m = toy([("x", ())], [], [(0, 1.0)], [0.0], [2.0])
    with pytest.raises(BoundViolation):
        fix_variables(m, {0: 5.0})


# ---------------------------------------------------------------------------
# round_and_fix
# ---------------------------------------------------------------------------

def test_round_and_fix_integral_already():
    m = toy([("x", ())], [([(0, 1.0)], ">=", 2.0, 1, ())], [(0, 1.0)],
            [0.0], [np.inf], [True])
    base = solve_lp(m)
    assert base.x[0] == pytest.approx(2.0)
    rounded = round_and_fix(m, base, [0])
    assert rounded.optimal and rounded.x[0] == 2.0
    assert rounded.objective == pytest.approx(base.objective)


def test_round_and_fix_ties_toward_zero():
    # x = 0.5 with x <= 0.5: nearest-with-ties-toward-zero lands on 0,
    # which is feasible; rounding up to 1 would violate the row
    m = toy([("x", ())], [([(0, 1.0)], "<=", 0.5, 1, ())], [(0, -1.0)],
            [0.0], [np.inf], [True])
    base = solve_lp(m)
    assert base.x[0] == pytest.approx(0.5)
    rounded = round_and_fix(m, base, [0])
    assert rounded.optimal and rounded.x[0] == 0.0


def test_round_and_fix_knapsack_vs_bruteforce():
    # min c x  s.t.  w x >= need, x binary; brute force over all 2^5
    rng = SplitMix64(7)
    w = [3.0, 5.0, 2.0, 7.0, 4.0]
    c = [4.0, 7.0, 3.0, 9.0, 6.0]
    need = 11.0
    catalog = [("x", (j,)) for j in range(5)]
    rows = [([(j, w[j]) for j in range(5)], ">=", need, 1, ())]
    m = toy(catalog, rows, list(enumerate(c)), [0.0] * 5, [1.0] * 5,
            [True] * 5)
    best = min(sum(c[j] for j in range(5) if (mask >> j) & 1)
               for mask in range(32)
               if sum(w[j] for j in range(5) if (mask >> j) & 1) >= need)
    lp = solve_lp(m)
    heur = round_and_fix(m, lp, list(range(5)))
    assert heur.optimal
    assert all(abs(v - round(v)) < 1e-9 for v in heur.x)
    assert heur.objective >= best - 1e-9
    assert check_solution(m, heur.x).ok(1e-7)


def test_round_and_fix_ladder_recovers():
    # nearest rounding (both to 1) breaks x + y <= 1; the ladder must find
    # a feasible integer completion
    m = toy([("x", ()), ("y", ())],
            [([(0, 1.0), (1, 1.0)], "<=", 1.0, 1, (1,)),
             ([(0, 2.0), (1, 2.0)], ">=", 1.0, 1, (2,))],
            [(0, 1.0), (1, 1.0)], [0.0, 0.0], [1.0, 1.0], [True, True])
    lp = solve_lp(m)
    heur = round_and_fix(m, lp, [0, 1])
    assert heur.optimal
    assert check_solution(m, heur.x).ok(1e-7)


# ---------------------------------------------------------------------------
# External adapter + substitutability
# ---------------------------------------------------------------------------

STUB = textwrap.dedent("""\
    #!{python}
    import sys
    sys.path[:0] = {path!r}
    from lpforge.lpformat import read_lp
    from lpforge.solver import solve_lp
    model = read_lp(sys.argv[1])
    sol = solve_lp(model)
    if sol.status == "Infeasible":
        sys.exit(4)
    if sol.status == "Unbounded":
        sys.exit(5)
    with open(sys.argv[2], "w") as f:
        for j in range(model.num_vars):
            f.write(f"{{model.col_name(j)}} {{float(sol.x[j])!r}}\\n")
    """)


@pytest.fixture
def stub_solver(tmp_path):
    script = tmp_path / "stub-solver"
    script.write_text(STUB.format(python=sys.executable,
                                  path=[p for p in sys.path]))
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    return str(script)


def test_executable_adapter_round_trip(flow_fixture, stub_solver):
    model, data = flow_fixture
    canon = instantiate_efficient(model, data)
    sol = solve_with_executable(stub_solver, canon)
    assert sol.optimal
    assert sol.objective == pytest.approx(2.0)
    assert check_solution(canon, sol.x).ok(1e-7)


def test_make_solver_specs(stub_solver):
    assert make_solver("reference") is solve_lp
    adapter = make_solver(f"exec:{stub_solver}")
    m = toy([("x", ())], [([(0, 1.0)], ">=", 1.5, 1, ())], [(0, 2.0)],
            [0.0], [np.inf])
    sol = adapter(m)
    assert sol.optimal and sol.objective == pytest.approx(3.0)


def test_adapter_infeasible_exit_code(stub_solver):
    m = toy([("x", ())], [([(0, 1.0)], "<=", -1.0, 1, ())], [], [0.0],
            [np.inf])
    sol = solve_with_executable(stub_solver, m)
    assert sol.status == "Infeasible"
