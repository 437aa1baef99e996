"""Sequential (block-triangular) models: period metadata over a canonical
model, period aggregation of data bundles, and row/column slicing.

A sequential model couples the symbolic template and its data with period
bookkeeping: which index position of each variable/set/parameter is the
period axis, which variable families are state (value fully determined by
decisions; left free during fine-tuning), and how each parameter array
aggregates when several periods collapse into one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .assemble import instantiate_efficient
from .canonical import CanonicalModel
from .data import DataBundle
from .errors import IrParseError, MissingAggregationPolicy
from .ir import SymbolicModel

AGG_POLICIES = ("sum", "first", "last")


@dataclass(frozen=True)
class SequentialMeta:
    period_placeholder: str
    period_count: int
    variable_period_axis: dict[str, int]
    state_variables: frozenset[str]
    set_period_axes: dict[str, tuple[int, ...]]
    lag_sets: frozenset[str]          # sets encoding (t, t') links; tuples whose
                                      # period components collide after
                                      # aggregation are dropped (telescoping)
    param_period_axis: dict[str, int]
    aggregation_policy: dict[str, str]
    bound_group_scaled: frozenset[str] = frozenset()  # families whose upper
                                                      # bound scales with the
                                                      # aggregated group size

    def to_json(self) -> str:
        doc = {
            "period_placeholder": self.period_placeholder,
            "period_count": self.period_count,
            "variable_period_axis": dict(sorted(self.variable_period_axis.items())),
            "state_variables": sorted(self.state_variables),
            "set_period_axes": {k: list(v) for k, v in
                                sorted(self.set_period_axes.items())},
            "lag_sets": sorted(self.lag_sets),
            "param_period_axis": dict(sorted(self.param_period_axis.items())),
            "aggregation_policy": dict(sorted(self.aggregation_policy.items())),
            "bound_group_scaled": sorted(self.bound_group_scaled),
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SequentialMeta":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise IrParseError("$", f"not valid JSON: {e}") from None
        try:
            return cls(
                period_placeholder=doc["period_placeholder"],
                period_count=int(doc["period_count"]),
                variable_period_axis={k: int(v) for k, v in
                                      doc["variable_period_axis"].items()},
                state_variables=frozenset(doc["state_variables"]),
                set_period_axes={k: tuple(v) for k, v in
                                 doc["set_period_axes"].items()},
                lag_sets=frozenset(doc.get("lag_sets", [])),
                param_period_axis={k: int(v) for k, v in
                                   doc["param_period_axis"].items()},
                aggregation_policy=dict(doc["aggregation_policy"]),
                bound_group_scaled=frozenset(doc.get("bound_group_scaled", [])),
            )
        except KeyError as e:
            raise IrParseError(f"$.{e.args[0]}", "missing key") from None


@dataclass
class SequentialModel:
    symbolic: SymbolicModel
    data: DataBundle
    meta: SequentialMeta
    base: CanonicalModel
    T: int
    var_period: np.ndarray          # per column; 0 when not period-indexed
    col_group: np.ndarray           # per column: semantic group ordinal
    group_keys: list[tuple[str, tuple[int, ...]]]  # ordinal -> (family, index sans period)
    row_period: np.ndarray

    def group_of(self, family: str, index: tuple[int, ...]) -> tuple[str, tuple[int, ...]]:
        axis = self.meta.variable_period_axis.get(family)
        if axis is None:
            return family, index
        return family, index[:axis] + index[axis + 1:]

    def columns_of_period(self, lo: int, hi: int) -> np.ndarray:
        """Column ids with period in [lo, hi]."""
        return np.flatnonzero((self.var_period >= lo) & (self.var_period <= hi))


def build_sequential(symbolic: SymbolicModel, data: DataBundle,
                     meta: SequentialMeta,
                     base: CanonicalModel | None = None) -> SequentialModel:
    """Instantiate and attach period bookkeeping; checks block triangularity."""
    if base is None:
        base = instantiate_efficient(symbolic, data)
    n = base.num_vars
    var_period = np.zeros(n, dtype=np.int64)
    col_group = np.empty(n, dtype=np.int64)
    group_ids: dict[tuple, int] = {}
    group_keys: list[tuple] = []
    offs = base.col_index_offsets
    flat = base.col_index_flat
    fam_axis = [meta.variable_period_axis.get(f) for f in base.families]
    for j in range(n):
        fam_code = int(base.col_family[j])
        axis = fam_axis[fam_code]
        idx = tuple(int(v) for v in flat[offs[j]:offs[j + 1]])
        if axis is not None:
            var_period[j] = idx[axis]
            key = (base.families[fam_code], idx[:axis] + idx[axis + 1:])
        else:
            key = (base.families[fam_code], idx)
        gid = group_ids.get(key)
        if gid is None:
            gid = len(group_keys)
            group_ids[key] = gid
            group_keys.append(key)
        col_group[j] = gid

    row_period = np.zeros(base.num_rows, dtype=np.int64)
    gblocks = {}
    for bi, blk in enumerate(symbolic.constraints, 1):
        g = blk.expr.global_indices
        gblocks[bi] = g.index(meta.period_placeholder) \
            if meta.period_placeholder in g else None
    goffs = base.row_gstar_offsets
    gflat = base.row_gstar_flat
    for r in range(base.num_rows):
        pos = gblocks[int(base.row_block[r])]
        if pos is not None:
            row_period[r] = gflat[goffs[r] + pos]
    # rows without a period in their provenance inherit the latest period
    # of the variables they touch
    missing = [r for r in range(base.num_rows)
               if gblocks[int(base.row_block[r])] is None]
    for r in missing:
        lo, hi = base.row_offsets[r], base.row_offsets[r + 1]
        cols = base.entry_col[lo:hi]
        row_period[r] = var_period[cols].max() if len(cols) else 1

    if base.nnz:
        bad = var_period[base.entry_col] > row_period[base.entry_row]
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"not block triangular: row {int(base.entry_row[k])} (period "
                f"{int(row_period[base.entry_row[k]])}) references column "
                f"{int(base.entry_col[k])} of period "
                f"{int(var_period[base.entry_col[k]])}")

    return SequentialModel(symbolic, data, meta, base, meta.period_count,
                           var_period, col_group, group_keys, row_period)


# ---------------------------------------------------------------------------
# Period aggregation
# ---------------------------------------------------------------------------

def check_groups(groups: list[tuple[int, int]], T: int) -> None:
    expect = 1
    for lo, hi in groups:
        if lo != expect or hi < lo:
            raise ValueError(f"groups must partition 1..{T} in order; "
                             f"got range ({lo}, {hi}) expecting start {expect}")
        expect = hi + 1
    if expect != T + 1:
        raise ValueError(f"groups cover 1..{expect - 1}, model has T={T}")


def aggregate_bundle(data: DataBundle, meta: SequentialMeta,
                     groups: list[tuple[int, int]],
                     period_space_name: str) -> DataBundle:
    """Project every period-indexed set and parameter onto group indices."""
    T = meta.period_count
    check_groups(groups, T)
    gmap = np.zeros(T + 1, dtype=np.int64)
    for gi, (lo, hi) in enumerate(groups, 1):
        gmap[lo:hi + 1] = gi

    out = DataBundle()
    for name, rows in data.index_sets.items():
        axes = meta.set_period_axes.get(name, ())
        if not axes:
            out.index_sets[name] = list(rows)
            continue
        lag = name in meta.lag_sets
        seen = set()
        projected = []
        for t in rows:
            np_t = tuple(int(gmap[v]) if p in axes else v
                         for p, v in enumerate(t))
            if lag:
                periods = [np_t[p] for p in axes]
                if len(set(periods)) != len(periods):
                    continue  # intra-group link telescopes away
            if np_t not in seen:
                seen.add(np_t)
                projected.append(np_t)
        out.index_sets[name] = projected

    for name, arr in data.parameter_arrays.items():
        axis = meta.param_period_axis.get(name)
        if axis is None:
            out.parameter_arrays[name] = dict(arr)
            continue
        policy = meta.aggregation_policy.get(name)
        if policy not in AGG_POLICIES:
            raise MissingAggregationPolicy(name)
        agg: dict = {}
        stamp: dict = {}
        for key, val in arr.items():
            t = key[axis]
            nkey = key[:axis] + (int(gmap[t]),) + key[axis + 1:]
            if policy == "sum":
                agg[nkey] = agg.get(nkey, 0.0) + val
            elif policy == "first":
                if nkey not in agg or t < stamp[nkey]:
                    agg[nkey] = val
                    stamp[nkey] = t
            else:  # last
                if nkey not in agg or t > stamp[nkey]:
                    agg[nkey] = val
                    stamp[nkey] = t
        out.parameter_arrays[name] = agg

    for name, vals in data.index_spaces.items():
        if name == period_space_name:
            out.index_spaces[name] = list(range(1, len(groups) + 1))
        else:
            out.index_spaces[name] = list(vals)
    out.scalars = dict(data.scalars)
    return out


def aggregate_periods(seq: SequentialModel,
                      groups: list[tuple[int, int]]) -> SequentialModel:
    """Collapse period ranges into single periods: data aggregated per its
    policies, integrality dropped, group-scaled upper bounds widened."""
    ph = seq.symbolic.placeholder(seq.meta.period_placeholder)
    period_space = ph.domain if ph.domain is not None else ph.name
    data2 = aggregate_bundle(seq.data, seq.meta, groups, period_space)
    sym2 = replace(
        seq.symbolic,
        variables=tuple(replace(v, integer=False) for v in seq.symbolic.variables))
    meta2 = replace(seq.meta, period_count=len(groups))
    out = build_sequential(sym2, data2, meta2)
    if seq.meta.bound_group_scaled:
        sizes = np.asarray([0] + [hi - lo + 1 for lo, hi in groups],
                           dtype=np.float64)
        scaled_fams = {f for f in seq.meta.bound_group_scaled}
        for code, fam in enumerate(out.base.families):
            if fam not in scaled_fams:
                continue
            mask = (out.base.col_family == code) & \
                np.isfinite(out.base.col_upper)
            out.base.col_upper[mask] *= sizes[out.var_period[mask]]
    return out


# ---------------------------------------------------------------------------
# Row/column slicing
# ---------------------------------------------------------------------------

def slice_model(m: CanonicalModel, row_mask: np.ndarray,
                col_mask: np.ndarray):
    """Sub-model with the masked rows/columns. Requires that kept rows only
    reference kept columns (block triangularity gives this for period
    windows). Returns (model, kept_cols, kept_rows) with the id maps."""
    kept_cols = np.flatnonzero(col_mask)
    kept_rows = np.flatnonzero(row_mask)
    col_new = np.full(m.num_vars, -1, dtype=np.int64)
    col_new[kept_cols] = np.arange(len(kept_cols))
    row_new = np.full(m.num_rows, -1, dtype=np.int64)
    row_new[kept_rows] = np.arange(len(kept_rows))

    keep_e = row_mask[m.entry_row]
    if np.any(keep_e & ~col_mask[m.entry_col]):
        raise ValueError("kept rows reference dropped columns")
    er = row_new[m.entry_row[keep_e]]
    ec = col_new[m.entry_col[keep_e]]
    ev = m.entry_val[keep_e]

    widths = np.diff(m.col_index_offsets)
    flat_keep = np.repeat(col_mask, widths)
    new_widths = widths[kept_cols]
    offsets = np.zeros(len(kept_cols) + 1, dtype=np.int64)
    np.cumsum(new_widths, out=offsets[1:])

    gwidths = np.diff(m.row_gstar_offsets)
    gflat_keep = np.repeat(row_mask, gwidths)
    new_gw = gwidths[kept_rows]
    goffsets = np.zeros(len(kept_rows) + 1, dtype=np.int64)
    np.cumsum(new_gw, out=goffsets[1:])

    nrows = len(kept_rows)
    row_offsets = np.searchsorted(er, np.arange(nrows + 1))

    sub = CanonicalModel(
        families=list(m.families),
        col_family=m.col_family[kept_cols],
        col_index_flat=m.col_index_flat[flat_keep],
        col_index_offsets=offsets,
        col_lower=m.col_lower[kept_cols].copy(),
        col_upper=m.col_upper[kept_cols].copy(),
        col_integer=m.col_integer[kept_cols].copy(),
        objective=m.objective[kept_cols].copy(),
        entry_row=er,
        entry_col=ec,
        entry_val=ev,
        row_offsets=row_offsets.astype(np.int64),
        row_sign=m.row_sign[kept_rows],
        row_rhs=m.row_rhs[kept_rows].copy(),
        row_block=m.row_block[kept_rows],
        row_gstar_flat=m.row_gstar_flat[gflat_keep],
        row_gstar_offsets=goffsets,
    )
    return sub, kept_cols, kept_rows


def extend_model(m: CanonicalModel, new_cols, new_rows) -> CanonicalModel:
    """Append columns and rows (used for guidance slacks and links).

    new_cols: (family, index, lower, upper, obj_coef) tuples.
    new_rows: (entries, sign_code, rhs, block, gstar) with entries over the
    extended column space.
    """
    fam_code = {f: i for i, f in enumerate(m.families)}
    families = list(m.families)
    add_fam = np.empty(len(new_cols), dtype=np.int32)
    add_flat, add_w = [], []
    add_lo = np.empty(len(new_cols))
    add_hi = np.empty(len(new_cols))
    add_obj = np.empty(len(new_cols))
    for k, (fam, idx, lo, hi, oc) in enumerate(new_cols):
        if fam not in fam_code:
            fam_code[fam] = len(families)
            families.append(fam)
        add_fam[k] = fam_code[fam]
        add_flat.extend(idx)
        add_w.append(len(idx))
        add_lo[k] = lo
        add_hi[k] = hi
        add_obj[k] = oc

    offsets = np.concatenate([
        m.col_index_offsets,
        m.col_index_offsets[-1] + np.cumsum(np.asarray(add_w, dtype=np.int64))
    ]) if new_cols else m.col_index_offsets

    er = [m.entry_row]
    ec = [m.entry_col]
    ev = [m.entry_val]
    base_rows = m.num_rows
    add_sign = np.empty(len(new_rows), dtype=np.int8)
    add_rhs = np.empty(len(new_rows))
    add_block = np.empty(len(new_rows), dtype=np.int32)
    add_gflat, add_gw = [], []
    for r, (entries, sign, rhs, block, gstar) in enumerate(new_rows):
        cols = np.asarray([c for c, _ in entries], dtype=np.int64)
        vals = np.asarray([v for _, v in entries], dtype=np.float64)
        order = np.argsort(cols, kind="stable")
        er.append(np.full(len(entries), base_rows + r, dtype=np.int64))
        ec.append(cols[order])
        ev.append(vals[order])
        add_sign[r] = sign
        add_rhs[r] = rhs
        add_block[r] = block
        add_gflat.extend(gstar)
        add_gw.append(len(gstar))

    entry_row = np.concatenate(er)
    entry_col = np.concatenate(ec)
    entry_val = np.concatenate(ev)
    nrows = base_rows + len(new_rows)
    row_offsets = np.searchsorted(entry_row, np.arange(nrows + 1))
    goffsets = np.concatenate([
        m.row_gstar_offsets,
        m.row_gstar_offsets[-1] + np.cumsum(np.asarray(add_gw, dtype=np.int64))
    ]) if new_rows else m.row_gstar_offsets

    return CanonicalModel(
        families=families,
        col_family=np.concatenate([m.col_family, add_fam]),
        col_index_flat=np.concatenate(
            [m.col_index_flat, np.asarray(add_flat, dtype=np.int64)]),
        col_index_offsets=offsets,
        col_lower=np.concatenate([m.col_lower, add_lo]),
        col_upper=np.concatenate([m.col_upper, add_hi]),
        col_integer=np.concatenate(
            [m.col_integer, np.zeros(len(new_cols), dtype=bool)]),
        objective=np.concatenate([m.objective, add_obj]),
        entry_row=entry_row,
        entry_col=entry_col,
        entry_val=entry_val,
        row_offsets=row_offsets.astype(np.int64),
        row_sign=np.concatenate([m.row_sign, add_sign]),
        row_rhs=np.concatenate([m.row_rhs, add_rhs]),
        row_block=np.concatenate([m.row_block, add_block]),
        row_gstar_flat=np.concatenate(
            [m.row_gstar_flat, np.asarray(add_gflat, dtype=np.int64)]),
        row_gstar_offsets=goffsets,
    )
