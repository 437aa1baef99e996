"""Reference LP solving: dense two-phase primal simplex with Bland's rule,
variable fixing, the round-and-fix integer heuristic, and an adapter that
drives an external solver executable through LP files.

The simplex is deliberately a desk-scale tool (dense tableau, a few
thousand rows at most): deterministic and easy to trust, which is what the
decomposition layer and the test suite need. Every Optimal result should be
re-checked with audit.check_solution; the solver never audits itself.
"""

from __future__ import annotations

import os
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np

from .canonical import SIGN_EQ, SIGN_GE, SIGN_LE, CanonicalModel
from .errors import BoundViolation, LpforgeError
from .lpformat import split_name, write_lp

_PIVOT_EPS = 1e-9
_RCOST_EPS = 1e-9


@dataclass
class Solution:
    status: str                 # Optimal | Infeasible | Unbounded | IterationLimit
    x: np.ndarray | None
    objective: float | None
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"


@dataclass
class SolveOptions:
    feas_tol: float = 1e-7
    max_iters: int = 50_000


def solve_lp(model: CanonicalModel, opts: SolveOptions | None = None) -> Solution:
    """Two-phase primal simplex, Bland's rule throughout (anti-cycling and
    full determinism at the cost of speed)."""
    opts = opts or SolveOptions()
    n = model.num_vars
    m = model.num_rows
    lower = model.col_lower
    upper = model.col_upper

    if np.any(lower > upper):
        return Solution("Infeasible", None, None, 0)

    fixed = lower == upper
    free_neg = np.isinf(lower) & fixed.__invert__()  # lower == -inf
    # columns of the working LP: one per unfixed model column, plus a mirror
    # column for each free (lower = -inf) variable so y >= 0 throughout
    work_cols = np.flatnonzero(~fixed)
    col_pos = {int(j): k for k, j in enumerate(work_cols)}
    mirror_of = {}
    extra = 0
    for j in work_cols:
        if free_neg[j]:
            mirror_of[int(j)] = len(work_cols) + extra
            extra += 1
    width = len(work_cols) + extra

    dense = model.dense()
    xfix = np.where(fixed, lower, 0.0)
    b = model.row_rhs - dense @ xfix

    shift = np.where(np.isfinite(lower) & ~fixed, lower, 0.0)
    b = b - dense @ shift

    a_rows = [dense[:, work_cols]]
    if extra:
        mir = np.zeros((m, extra))
        for j, k in mirror_of.items():
            mir[:, k - len(work_cols)] = -dense[:, j]
        a_rows.append(mir)
    A = np.concatenate(a_rows, axis=1) if m else np.zeros((0, width))

    cvec = np.zeros(width)
    cvec[:len(work_cols)] = model.objective[work_cols]
    for j, k in mirror_of.items():
        cvec[k] = -model.objective[j]

    signs = model.row_sign.copy()

    # upper bound rows for unfixed columns with a finite ceiling
    ub_rows = []
    ub_rhs = []
    for k, j in enumerate(work_cols):
        u = upper[j]
        if np.isfinite(u):
            row = np.zeros(width)
            row[k] = 1.0
            if int(j) in mirror_of:
                row[mirror_of[int(j)]] = -1.0
            ub_rows.append(row)
            ub_rhs.append(u - shift[j])
    if ub_rows:
        A = np.concatenate([A, np.asarray(ub_rows)], axis=0)
        b = np.concatenate([b, np.asarray(ub_rhs)])
        signs = np.concatenate([signs,
                                np.full(len(ub_rows), SIGN_LE, dtype=np.int8)])

    mm = len(b)
    flip = b < 0
    A = np.where(flip[:, None], -A, A)
    b = np.abs(b) * 1.0
    b[b == 0.0] = 0.0
    new_signs = signs.copy()
    new_signs[flip & (signs == SIGN_LE)] = SIGN_GE
    new_signs[flip & (signs == SIGN_GE)] = SIGN_LE
    signs = new_signs

    n_slack = int(np.sum(signs == SIGN_LE)) + int(np.sum(signs == SIGN_GE))
    n_art = int(np.sum(signs == SIGN_EQ)) + int(np.sum(signs == SIGN_GE))
    total = width + n_slack + n_art
    T = np.zeros((mm + 1, total + 1))
    T[:mm, :width] = A
    T[:mm, -1] = b
    basis = np.empty(mm, dtype=np.int64)
    s_at = width
    a_at = width + n_slack
    art_cols = []
    for i in range(mm):
        sg = signs[i]
        if sg == SIGN_LE:
            T[i, s_at] = 1.0
            basis[i] = s_at
            s_at += 1
        elif sg == SIGN_GE:
            T[i, s_at] = -1.0
            s_at += 1
            T[i, a_at] = 1.0
            basis[i] = a_at
            art_cols.append(a_at)
            a_at += 1
        else:
            T[i, a_at] = 1.0
            basis[i] = a_at
            art_cols.append(a_at)
            a_at += 1
    art_start = width + n_slack

    iterations = 0

    def run_phase(allowed_upto: int) -> str:
        nonlocal iterations
        obj = T[mm]
        while iterations < opts.max_iters:
            red = obj[:allowed_upto]
            enter_candidates = np.flatnonzero(red < -_RCOST_EPS)
            if len(enter_candidates) == 0:
                return "optimal"
            col = int(enter_candidates[0])  # Bland: lowest index enters
            colvals = T[:mm, col]
            pos = colvals > _PIVOT_EPS
            if not np.any(pos):
                return "unbounded"
            ratios = np.full(mm, np.inf)
            ratios[pos] = T[:mm, -1][pos] / colvals[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12)
            row = int(ties[np.argmin(basis[ties])])  # Bland: lowest basis leaves
            pivot = T[row, col]
            T[row] /= pivot
            factors = T[:, col].copy()
            factors[row] = 0.0
            T[:] -= np.outer(factors, T[row])
            basis[row] = col
            iterations += 1
        return "limit"

    # Phase 1: minimize artificials
    if art_cols:
        T[mm, :] = 0.0
        T[mm, art_start:width + n_slack + n_art] = 1.0
        for i in range(mm):
            if basis[i] >= art_start:
                T[mm] -= T[i]
        status = run_phase(total)
        if status == "limit":
            return Solution("IterationLimit", None, None, iterations)
        if -T[mm, -1] > opts.feas_tol:
            return Solution("Infeasible", None, None, iterations)
        # pivot leftover artificials out where possible
        for i in range(mm):
            if basis[i] >= art_start:
                row_slice = T[i, :art_start]
                nzs = np.flatnonzero(np.abs(row_slice) > _PIVOT_EPS)
                if len(nzs):
                    col = int(nzs[0])
                    pivot = T[i, col]
                    T[i] /= pivot
                    factors = T[:, col].copy()
                    factors[i] = 0.0
                    T[:] -= np.outer(factors, T[i])
                    basis[i] = col
        T[:, art_start:width + n_slack + n_art] = 0.0

    # Phase 2
    T[mm, :] = 0.0
    T[mm, :width] = cvec
    T[mm, -1] = 0.0
    for i in range(mm):
        cb = T[mm, basis[i]]
        if cb != 0.0:
            T[mm] -= cb * T[i]
    status = run_phase(art_start)
    if status == "limit":
        return Solution("IterationLimit", None, None, iterations)
    if status == "unbounded":
        return Solution("Unbounded", None, None, iterations)

    y = np.zeros(total)
    y[basis] = T[:mm, -1]
    x = xfix.copy()
    x[work_cols] = y[:len(work_cols)] + shift[work_cols]
    for j, k in mirror_of.items():
        x[j] -= y[k]
    # clip float dust off the bounds so downstream fixing stays consistent
    np.clip(x, np.where(np.isfinite(lower), lower, -np.inf),
            np.where(np.isfinite(upper), upper, np.inf), out=x)
    objective = float(model.objective @ x)
    return Solution("Optimal", x, objective, iterations)


def fix_variables(model: CanonicalModel, assignments: dict[int, float]) -> CanonicalModel:
    """Pin columns to values by collapsing their bounds. Rows, columns, and
    provenance all stay put, so sub-model bookkeeping survives."""
    out = model.copy()
    for j, v in assignments.items():
        lo, hi = model.col_lower[j], model.col_upper[j]
        if v < lo - 1e-9 or v > hi + 1e-9:
            raise BoundViolation(j, v, lo, hi)
        out.col_lower[j] = v
        out.col_upper[j] = v
    return out


def _round_half_to_zero(v: np.ndarray) -> np.ndarray:
    return np.copysign(np.ceil(np.abs(v) - 0.5), v) + 0.0


def round_and_fix(model: CanonicalModel, solution: Solution,
                  integer_cols, opts: SolveOptions | None = None) -> Solution:
    """Round the integer columns of an LP solution, fix them, and re-solve
    the continuous remainder.

    Nearest-integer rounding (ties toward zero) first; if that leaves the
    model infeasible, retry with every integer column floored, then walk the
    columns in order switching each to its ceiling. Returns Infeasible when
    the whole ladder fails."""
    if solution.x is None:
        return solution
    opts = opts or SolveOptions()
    cols = [int(j) for j in integer_cols]
    vals = solution.x[cols]

    def attempt(rounded):
        clipped = np.clip(rounded, model.col_lower[cols], model.col_upper[cols])
        try:
            fixed = fix_variables(model, dict(zip(cols, clipped)))
        except BoundViolation:
            return None
        sol = solve_lp(fixed, opts)
        return sol if sol.optimal else None

    nearest = _round_half_to_zero(vals)
    sol = attempt(nearest)
    if sol is not None:
        return sol
    floors = np.floor(vals)
    sol = attempt(floors)
    if sol is not None:
        return sol
    trial = floors.copy()
    for k in range(len(cols)):
        trial[k] = np.ceil(vals[k])
        sol = attempt(trial)
        if sol is not None:
            return sol
    return Solution("Infeasible", None, None, solution.iterations)


# ---------------------------------------------------------------------------
# External solver adapter
# ---------------------------------------------------------------------------

class AdapterError(LpforgeError):
    pass


def solve_with_executable(executable: str, model: CanonicalModel,
                          opts: SolveOptions | None = None) -> Solution:
    """Drive an external solver: it is invoked as
    ``executable <model.lp> <solution.out>`` and must write one
    ``<column name> <value>`` line per column. Exit code 0 means optimal,
    4 infeasible, 5 unbounded."""
    with tempfile.TemporaryDirectory(prefix="lpforge-") as tmp:
        lp_path = os.path.join(tmp, "model.lp")
        out_path = os.path.join(tmp, "solution.out")
        write_lp(model, lp_path)
        proc = subprocess.run([executable, lp_path, out_path],
                              capture_output=True, text=True)
        if proc.returncode == 4:
            return Solution("Infeasible", None, None, 0)
        if proc.returncode == 5:
            return Solution("Unbounded", None, None, 0)
        if proc.returncode != 0:
            raise AdapterError(
                f"solver {executable!r} exited {proc.returncode}: "
                f"{proc.stderr.strip()[:500]}")
        x = np.zeros(model.num_vars)
        with open(out_path) as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise AdapterError(f"line {line_no}: expected 'col value'")
                fam, idx = split_name(parts[0])
                x[model.col_id(fam, idx)] = float(parts[1])
        return Solution("Optimal", x, float(model.objective @ x), 0)


def make_solver(spec: str):
    """Solver factory for CLI-style specs: "reference" or "exec:PATH"."""
    if spec == "reference":
        return solve_lp
    if spec.startswith("exec:"):
        path = spec[5:]
        return lambda model, opts=None: solve_with_executable(path, model, opts)
    raise ValueError(f"unknown solver spec {spec!r}")
