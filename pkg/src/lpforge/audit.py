"""Independent solution checker.

Recomputes row residuals and bound gaps straight from the triplet arrays.
Deliberately shares no code with the simplex implementation so a solver bug
cannot hide itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .canonical import SIGN_EQ, SIGN_GE, SIGN_LE, CanonicalModel


@dataclass
class AuditReport:
    max_violation: float
    worst_row: int | None
    bound_violation: float
    worst_col: int | None

    def ok(self, tol: float) -> bool:
        return self.max_violation <= tol and self.bound_violation <= tol

    def __str__(self):
        return (f"max row violation {self.max_violation:.3e} (row "
                f"{self.worst_row}), bound violation "
                f"{self.bound_violation:.3e} (col {self.worst_col})")


def row_activities(model: CanonicalModel, x: np.ndarray) -> np.ndarray:
    acts = np.zeros(model.num_rows)
    if model.nnz:
        np.add.at(acts, model.entry_row, model.entry_val * x[model.entry_col])
    return acts


def check_solution(model: CanonicalModel, x: np.ndarray) -> AuditReport:
    """Report the worst constraint and bound violations of x."""
    x = np.asarray(x, dtype=np.float64)
    acts = row_activities(model, x)
    res = acts - model.row_rhs
    viol = np.zeros(model.num_rows)
    eq = model.row_sign == SIGN_EQ
    le = model.row_sign == SIGN_LE
    ge = model.row_sign == SIGN_GE
    viol[eq] = np.abs(res[eq])
    viol[le] = np.maximum(res[le], 0.0)
    viol[ge] = np.maximum(-res[ge], 0.0)
    if model.num_rows:
        worst_row = int(np.argmax(viol))
        max_v = float(viol[worst_row])
    else:
        worst_row, max_v = None, 0.0

    bviol = np.maximum(model.col_lower - x, 0.0)
    bviol = np.maximum(bviol, x - model.col_upper)
    if model.num_vars:
        worst_col = int(np.argmax(bviol))
        max_b = float(bviol[worst_col])
    else:
        worst_col, max_b = None, 0.0
    return AuditReport(max_v, worst_row, max_b, worst_col)


def assert_feasible(model: CanonicalModel, x: np.ndarray, tol: float = 1e-7):
    rep = check_solution(model, x)
    if not rep.ok(tol):
        raise AssertionError(f"solution fails audit at tol {tol}: {rep}")
    return rep
