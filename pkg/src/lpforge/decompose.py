"""Rolling-horizon decomposition of sequential models.

Four methods over a shared sub-model engine:

* rolling_horizon (RH): solve period windows in order, earlier periods
  fixed to their accepted values.
* forward_rolling_horizon (FRH): each window (except the last) additionally
  sees the future collapsed into M aggregated tail periods; tail decisions
  are discarded after the solve.
* guided_rolling_horizon (GRH): an h-period aggregated master is solved
  first; each window then carries, per variable group, slacks u,v >= 0 and
  the link  sum of the group's window variables - u + v = master target,
  with penalty lambda_k (u + v) added to the objective.
* guided_frh (GFRH): GRH with the FRH window engine.

Every accepted full solution is audited on the original model. Horizons
with lambda_k = 0 skip the guidance machinery entirely (it is inert), and
h = 1 plans reduce every method to the whole-model solve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .audit import check_solution
from .canonical import SIGN_EQ, CanonicalModel
from .errors import DecompositionInfeasible, MasterInfeasible
from .sequential import (SequentialModel, aggregate_periods, extend_model,
                         slice_model)
from .solver import Solution, SolveOptions, solve_lp


@dataclass
class HorizonPlan:
    """Sub-model layout: boundaries[k] is the first period of horizon k+1;
    boundaries run 1 = t_1 < t_2 < ... < t_{h+1} = T + 1."""

    boundaries: list[int]
    M: int = 1
    lambdas: list[float] | None = None   # per-horizon guidance weights
    overlap: int = 0
    stop_after_period: int | None = None
    resolve_master: bool = False

    @property
    def h(self) -> int:
        return len(self.boundaries) - 1

    def window(self, k: int) -> tuple[int, int]:
        """Accepted period range of horizon k (1-based), inclusive."""
        return self.boundaries[k - 1], self.boundaries[k] - 1

    def check(self, T: int) -> None:
        b = self.boundaries
        if len(b) < 2 or b[0] != 1 or b[-1] != T + 1:
            raise ValueError(f"boundaries must run 1..{T + 1}, got {b}")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError(f"boundaries must strictly increase: {b}")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.overlap < 0:
            raise ValueError("overlap must be >= 0")
        if self.lambdas is not None:
            if len(self.lambdas) != self.h:
                raise ValueError("need one lambda per horizon")
            if any(l < 0 for l in self.lambdas):
                raise ValueError("lambdas must be >= 0")

    @classmethod
    def even(cls, T: int, h: int, **kw) -> "HorizonPlan":
        """Near-equal consecutive windows."""
        if not (1 <= h <= T):
            raise ValueError(f"need 1 <= h <= T, got h={h}, T={T}")
        size, extra = divmod(T, h)
        bounds = [1]
        for k in range(h):
            bounds.append(bounds[-1] + size + (1 if k < extra else 0))
        return cls(boundaries=bounds, **kw)


@dataclass
class RunResult:
    """Solution-compatible result carrying the run manifest."""

    status: str
    x: np.ndarray | None
    objective: float | None
    iterations: int
    method: str = ""
    horizons: list[dict] = field(default_factory=list)
    master: dict | None = None
    partial_through: int | None = None
    audit_violation: float | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"

    def manifest(self, plan: HorizonPlan | None = None,
                 baseline: float | None = None) -> dict:
        doc = {
            "method": self.method,
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "horizons": self.horizons,
            "master": self.master,
            "audit_violation": self.audit_violation,
        }
        if plan is not None:
            doc["plan"] = {
                "boundaries": plan.boundaries, "M": plan.M,
                "lambdas": plan.lambdas, "overlap": plan.overlap,
                "stop_after_period": plan.stop_after_period,
            }
        if self.partial_through is not None:
            doc["partial_through"] = self.partial_through
        if baseline is not None and self.objective is not None:
            doc["baseline_objective"] = baseline
            doc["gap"] = (self.objective - baseline) / max(abs(baseline), 1e-30)
        return doc


def default_lambda(base: CanonicalModel) -> float:
    """Guidance weight that cannot drown the native objective: a thousandth
    of the mean absolute objective coefficient."""
    nz = base.objective[base.objective != 0.0]
    if len(nz) == 0:
        return 1e-3
    return 1e-3 * float(np.mean(np.abs(nz)))


def _audit(seq: SequentialModel, x: np.ndarray, through: int | None) -> float:
    if through is None:
        rep = check_solution(seq.base, x)
        return max(rep.max_violation, rep.bound_violation)
    mask = seq.row_period <= through
    sub, _, _ = slice_model(seq.base, mask,
                            seq.var_period <= through)
    keep_cols = np.flatnonzero(seq.var_period <= through)
    rep = check_solution(sub, x[keep_cols])
    return max(rep.max_violation, rep.bound_violation)


def _solve_window(seq, plan, k, accepted, x_full, *, solver, opts,
                  guidance=None, frh_tail: bool):
    """Build and solve horizon k's sub-model; returns (solution, acceptors)
    where acceptors maps base columns of the accepted window to values."""
    t_lo, t_hi = plan.window(k)
    solve_hi = min(t_hi + plan.overlap, seq.T)
    last = k == plan.h

    if frh_tail and not last:
        tail_lo = solve_hi + 1
        groups = [(t, t) for t in range(1, tail_lo)]
        tail_len = seq.T - tail_lo + 1
        m = min(plan.M, tail_len)
        size, extra = divmod(tail_len, m)
        at = tail_lo
        for i in range(m):
            step = size + (1 if i < extra else 0)
            groups.append((at, at + step - 1))
            at += step
        agg = aggregate_periods(seq, groups)
        sub_seq = agg
        sub = agg.base.copy()
        kept_cols = None
    else:
        sub_seq = seq
        row_mask = seq.row_period <= solve_hi
        col_mask = seq.var_period <= solve_hi
        sub, kept_cols, _ = slice_model(seq.base, row_mask, col_mask)

    # fix earlier periods to their accepted values (period 0 marks columns
    # with no period axis; those stay free in every window)
    if kept_cols is None:
        vp = sub_seq.var_period
        fix_cols = np.flatnonzero((vp > 0) & (vp < t_lo))
    else:
        vp = sub_seq.var_period[kept_cols]
        fix_cols = np.flatnonzero((vp > 0) & (vp < t_lo))
    if kept_cols is None:
        for j in fix_cols:
            fam, idx = sub.col_key(int(j))
            v = accepted.get((fam, idx))
            if v is not None:
                sub.col_lower[j] = v
                sub.col_upper[j] = v
    else:
        orig = kept_cols[fix_cols]
        vals = x_full[orig]
        sub.col_lower[fix_cols] = vals
        sub.col_upper[fix_cols] = vals

    if guidance is not None:
        sub = _attach_guidance(sub_seq, sub, kept_cols, k, t_lo, t_hi, guidance)

    sol = solver(sub, opts)
    if not sol.optimal:
        raise DecompositionInfeasible(k, sol.status)

    acceptors = {}
    if kept_cols is None:
        within = np.flatnonzero((sub_seq.var_period >= t_lo)
                                & (sub_seq.var_period <= t_hi))
        for j in within:
            acceptors[sub.col_key(int(j))] = float(sol.x[j])
    else:
        within = np.flatnonzero((seq.var_period[kept_cols] >= t_lo)
                                & (seq.var_period[kept_cols] <= t_hi))
        for j in within:
            acceptors[int(kept_cols[j])] = float(sol.x[j])
    return sol, acceptors


def _attach_guidance(sub_seq, sub, kept_cols, k, t_lo, t_hi, guidance):
    """Add u/v slacks, the linking equalities, and the L1 penalty for
    horizon k over every guided variable group present in the window."""
    targets, lam, u_fam, v_fam = guidance
    n0 = sub.num_vars
    if kept_cols is None:
        periods = sub_seq.var_period
        groups = sub_seq.col_group
        sub_col = np.arange(sub.num_vars)
    else:
        periods = sub_seq.var_period[kept_cols]
        groups = sub_seq.col_group[kept_cols]
        sub_col = np.arange(len(kept_cols))
    inwin = (periods >= t_lo) & (periods <= t_hi)
    cols_by_group: dict[int, list[int]] = {}
    for j in np.flatnonzero(inwin):
        cols_by_group.setdefault(int(groups[j]), []).append(int(sub_col[j]))

    new_cols, new_rows = [], []
    guide_block = int(sub.row_block.max(initial=0)) + 1
    at = n0
    for gid in sorted(cols_by_group):
        gkey = sub_seq.group_keys[gid]
        fam = gkey[0]
        if fam in sub_seq.meta.state_variables:
            continue
        z = targets.get((gkey, k))
        if z is None:
            continue
        u_col, v_col = at, at + 1
        at += 2
        new_cols.append((u_fam, (gid, k), 0.0, np.inf, lam))
        new_cols.append((v_fam, (gid, k), 0.0, np.inf, lam))
        entries = [(c, 1.0) for c in cols_by_group[gid]]
        entries.append((u_col, -1.0))
        entries.append((v_col, 1.0))
        new_rows.append((entries, SIGN_EQ, z, guide_block, (gid, k)))
    if not new_cols:
        return sub
    return extend_model(sub, new_cols, new_rows)


def _finish(seq, plan, method, x_full, horizons, master, iters, opts,
            through=None) -> RunResult:
    obj = float(seq.base.objective @ x_full)
    viol = _audit(seq, x_full, through)
    return RunResult("Optimal", x_full, obj, iters, method=method,
                     horizons=horizons, master=master,
                     partial_through=through, audit_violation=viol)


def _run_horizons(seq: SequentialModel, plan: HorizonPlan, method: str, *,
                  solver, opts, guidance=None, frh_tail=False) -> RunResult:
    plan.check(seq.T)
    x_full = np.where(np.isfinite(seq.base.col_lower), seq.base.col_lower, 0.0)
    accepted: dict = {}
    horizons = []
    iters = 0
    through = None
    for k in range(1, plan.h + 1):
        t0 = time.perf_counter()
        sol, acceptors = _solve_window(
            seq, plan, k, accepted, x_full, solver=solver, opts=opts,
            guidance=guidance, frh_tail=frh_tail)
        iters += sol.iterations
        if frh_tail and k < plan.h:
            accepted.update(acceptors)
            for key, v in acceptors.items():
                fam, idx = key
                x_full[seq.base.col_id(fam, idx)] = v
        else:
            for j, v in acceptors.items():
                x_full[j] = v
                accepted[seq.base.col_key(j)] = v
        t_lo, t_hi = plan.window(k)
        horizons.append({"horizon": k, "periods": [t_lo, t_hi],
                         "solve_s": time.perf_counter() - t0,
                         "objective": sol.objective,
                         "iterations": sol.iterations})
        if plan.stop_after_period is not None and \
                plan.boundaries[k] > plan.stop_after_period:
            through = t_hi
            break
    return _finish(seq, plan, method, x_full, horizons, None, iters, opts,
                   through=through)


def rolling_horizon(seq: SequentialModel, plan: HorizonPlan, *,
                    solver=solve_lp, opts: SolveOptions | None = None) -> RunResult:
    opts = opts or SolveOptions()
    return _run_horizons(seq, plan, "rh", solver=solver, opts=opts)


def forward_rolling_horizon(seq: SequentialModel, plan: HorizonPlan, *,
                            solver=solve_lp,
                            opts: SolveOptions | None = None) -> RunResult:
    opts = opts or SolveOptions()
    return _run_horizons(seq, plan, "frh", solver=solver, opts=opts,
                         frh_tail=True)


def _solve_master(seq: SequentialModel, plan: HorizonPlan, *, solver, opts):
    groups = [plan.window(k) for k in range(1, plan.h + 1)]
    t0 = time.perf_counter()
    master_seq = aggregate_periods(seq, groups)
    sol = solver(master_seq.base, opts)
    if not sol.optimal:
        raise MasterInfeasible(sol.status)
    targets: dict = {}
    for j in range(master_seq.base.num_vars):
        fam, idx = master_seq.base.col_key(j)
        if fam in seq.meta.state_variables:
            continue
        k = int(master_seq.var_period[j])
        gkey = master_seq.group_of(fam, idx)
        targets[(gkey, k)] = float(sol.x[j])
    info = {"solve_s": time.perf_counter() - t0,
            "objective": sol.objective, "iterations": sol.iterations,
            "periods": plan.h}
    return targets, info, sol.iterations


def _guided(seq: SequentialModel, plan: HorizonPlan, method: str, *,
            solver, opts, frh_tail: bool) -> RunResult:
    plan.check(seq.T)
    if plan.h == 1:
        # no decomposition: guidance and tails are pointless, run plain
        res = _run_horizons(seq, plan, method, solver=solver, opts=opts)
        return res
    lambdas = plan.lambdas if plan.lambdas is not None else \
        [default_lambda(seq.base)] * plan.h
    targets, master_info, master_iters = _solve_master(
        seq, plan, solver=solver, opts=opts)

    u_fam, v_fam = _fresh_family_names(seq.base.families)
    x_full = np.where(np.isfinite(seq.base.col_lower), seq.base.col_lower, 0.0)
    accepted: dict = {}
    horizons = []
    iters = master_iters
    through = None
    for k in range(1, plan.h + 1):
        lam = lambdas[k - 1]
        guidance = (targets, lam, u_fam, v_fam) if lam > 0 else None
        t0 = time.perf_counter()
        sol, acceptors = _solve_window(
            seq, plan, k, accepted, x_full, solver=solver, opts=opts,
            guidance=guidance, frh_tail=frh_tail)
        iters += sol.iterations
        if frh_tail and k < plan.h:
            accepted.update(acceptors)
            for key, v in acceptors.items():
                fam, idx = key
                x_full[seq.base.col_id(fam, idx)] = v
        else:
            for j, v in acceptors.items():
                x_full[j] = v
                accepted[seq.base.col_key(j)] = v
        t_lo, t_hi = plan.window(k)
        horizons.append({"horizon": k, "periods": [t_lo, t_hi],
                         "solve_s": time.perf_counter() - t0,
                         "objective": sol.objective,
                         "iterations": sol.iterations,
                         "lambda": lam})
        if plan.resolve_master and k < plan.h:
            targets = _refresh_master(seq, plan, k, x_full, targets,
                                      solver=solver, opts=opts)
        if plan.stop_after_period is not None and \
                plan.boundaries[k] > plan.stop_after_period:
            through = t_hi
            break
    return _finish(seq, plan, method, x_full, horizons, master_info, iters,
                   opts, through=through)


def _refresh_master(seq, plan, solved_k, x_full, targets, *, solver, opts):
    """Optional cumulative-error control: re-solve the master with the
    already-realized horizon sums pinned."""
    groups = [plan.window(k) for k in range(1, plan.h + 1)]
    master_seq = aggregate_periods(seq, groups)
    m = master_seq.base.copy()
    for j in range(m.num_vars):
        fam, idx = m.col_key(j)
        if fam in seq.meta.state_variables:
            continue
        k = int(master_seq.var_period[j])
        if k > solved_k:
            continue
        gkey = master_seq.group_of(fam, idx)
        t_lo, t_hi = plan.window(k)
        cols = np.flatnonzero(
            (seq.var_period >= t_lo) & (seq.var_period <= t_hi))
        realized = 0.0
        for c in cols:
            if seq.group_keys[int(seq.col_group[c])] == gkey:
                realized += float(x_full[c])
        m.col_lower[j] = realized
        m.col_upper[j] = realized
    sol = solver(m, opts)
    if not sol.optimal:
        return targets  # keep previous guidance rather than fail the run
    out = dict(targets)
    for j in range(m.num_vars):
        fam, idx = m.col_key(j)
        if fam in seq.meta.state_variables:
            continue
        k = int(master_seq.var_period[j])
        if k > solved_k:
            out[(master_seq.group_of(fam, idx), k)] = float(sol.x[j])
    return out


def _fresh_family_names(existing: list[str]) -> tuple[str, str]:
    u, v = "gu", "gv"
    while u in existing:
        u += "x"
    while v in existing:
        v += "x"
    return u, v


def guided_rolling_horizon(seq: SequentialModel, plan: HorizonPlan, *,
                           solver=solve_lp,
                           opts: SolveOptions | None = None) -> RunResult:
    opts = opts or SolveOptions()
    return _guided(seq, plan, "grh", solver=solver, opts=opts, frh_tail=False)


def guided_frh(seq: SequentialModel, plan: HorizonPlan, *, solver=solve_lp,
               opts: SolveOptions | None = None) -> RunResult:
    opts = opts or SolveOptions()
    return _guided(seq, plan, "gfrh", solver=solver, opts=opts, frh_tail=True)


def fine_tune(seq: SequentialModel, solution, k: int, *, solver=solve_lp,
              opts: SolveOptions | None = None):
    """Re-optimize the first k periods with later decisions held, state
    variables left free throughout. Never returns a worse solution."""
    opts = opts or SolveOptions()
    x = np.asarray(solution.x, dtype=np.float64)
    state_codes = {i for i, f in enumerate(seq.base.families)
                   if f in seq.meta.state_variables}
    is_state = np.isin(seq.base.col_family,
                       np.asarray(sorted(state_codes), dtype=np.int32)) \
        if state_codes else np.zeros(seq.base.num_vars, dtype=bool)
    fix = (seq.var_period > k) & ~is_state
    m = seq.base.copy()
    vals = np.clip(x[fix], m.col_lower[fix], m.col_upper[fix])
    m.col_lower[fix] = vals
    m.col_upper[fix] = vals
    sol = solver(m, opts)
    base_obj = float(seq.base.objective @ x)
    if not sol.optimal or sol.objective > base_obj + 1e-9 * (1 + abs(base_obj)):
        return Solution("Optimal", x, base_obj,
                        getattr(solution, "iterations", 0))
    return sol


def solve_whole(seq: SequentialModel, *, solver=solve_lp,
                opts: SolveOptions | None = None) -> Solution:
    return solver(seq.base, opts or SolveOptions())
