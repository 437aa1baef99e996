"""Seeded benchmark/test model generators.

All randomness flows through SplitMix64 so a (parameters, seed) pair yields
the same DataBundle bytes on any platform. Generators return symbolic
models plus data; the production-planning generator also returns the period
metadata that makes the model sequential.
"""

from __future__ import annotations

import numpy as np

from .data import DataBundle
from .errors import GenerationError
from .ir import (GLOBAL, LOCAL, Add, BoundOverride, ConstraintBlock,
                 DataPlaceholder, IndexPlaceholder, MultidimExpression,
                 ParamCoef, Sub, Sum, SymbolicModel, Term, VariableDecl,
                 number_sums)
from .rng import SplitMix64
from .sequential import SequentialMeta


def _expr(gnames, root) -> MultidimExpression:
    return number_sums(MultidimExpression(tuple(gnames), root))


def _sum(binding, set_ref, term) -> Sum:
    return Sum(0, tuple(binding), set_ref, term)


# ---------------------------------------------------------------------------
# Minimum-cost flow
# ---------------------------------------------------------------------------

def flow_symbolic() -> SymbolicModel:
    """min sum c_ij x_ij  s.t.  flow out - flow in = s_i for every node."""
    balance = _expr(("i",), Sub(
        _sum(("i", "j"), "E", Term("x", ("i", "j"), 1.0)),
        _sum(("j", "i"), "E", Term("x", ("j", "i"), 1.0))))
    objective = _expr((), _sum(("i", "j"), "E",
                               Term("x", ("i", "j"), ParamCoef("c", ("i", "j")))))
    return SymbolicModel(
        variables=(VariableDecl("x", 2, domains=("V", "V")),),
        constants=(DataPlaceholder("E", "index_set", 2),
                   DataPlaceholder("c", "parameter_array", 2),
                   DataPlaceholder("s", "parameter_array", 1)),
        index_placeholders=(IndexPlaceholder("i", GLOBAL, "V"),
                            IndexPlaceholder("j", LOCAL, "V")),
        objective=objective,
        sense="min",
        constraints=(ConstraintBlock(balance, "=", "s"),),
    )


def paper_flow_instance() -> tuple[SymbolicModel, DataBundle]:
    """The worked 4-node instance: V = {1,2,3,4},
    E = {(1,2),(2,4),(1,3),(3,4)}, unit costs, unit supply 1 -> 4."""
    edges = [(1, 2), (2, 4), (1, 3), (3, 4)]
    data = DataBundle(
        index_sets={"E": list(edges)},
        parameter_arrays={
            "c": {e: 1.0 for e in edges},
            "s": {(1,): 1.0, (2,): 0.0, (3,): 0.0, (4,): -1.0},
        },
        index_spaces={"V": [1, 2, 3, 4]},
    )
    return flow_symbolic(), data


def gen_min_cost_flow(nodes: int, edges: int, seed: int,
                      unit_costs: bool = False) -> tuple[SymbolicModel, DataBundle]:
    """Random connected digraph with one unit of supply routed from node 1
    to node ``nodes``. A spanning path guarantees feasibility."""
    if nodes < 2:
        raise GenerationError("need at least 2 nodes")
    if edges < nodes - 1:
        raise GenerationError(f"{edges} edges cannot connect {nodes} nodes")
    if edges > nodes * (nodes - 1):
        raise GenerationError("more edges than ordered pairs")
    rng = SplitMix64(seed)

    if nodes > 2:
        mid = np.argsort(rng.next_u64_array(nodes - 2), kind="stable") + 2
        path = np.concatenate(([1], mid, [nodes]))
    else:
        path = np.asarray([1, 2])
    heads = [path[:-1]]
    tails = [path[1:]]
    chosen = set((int(u) << 32) | int(v) for u, v in zip(path[:-1], path[1:]))
    need = edges - (nodes - 1)
    while need > 0:
        batch = max(need + 16, int(need * 1.3))
        u = rng.randint_array(1, nodes, batch)
        v = rng.randint_array(1, nodes, batch)
        keep_u, keep_v = [], []
        for a, b in zip(u.tolist(), v.tolist()):
            if a == b:
                continue
            key = (a << 32) | b
            if key in chosen:
                continue
            chosen.add(key)
            keep_u.append(a)
            keep_v.append(b)
            if len(keep_u) == need:
                break
        if keep_u:
            heads.append(np.asarray(keep_u, dtype=np.int64))
            tails.append(np.asarray(keep_v, dtype=np.int64))
            need -= len(keep_u)

    eh = np.concatenate(heads)
    et = np.concatenate(tails)
    emat = np.column_stack([eh, et])
    edge_list = [tuple(r) for r in emat.tolist()]
    if unit_costs:
        cost_vals = np.ones(len(edge_list))
    else:
        cost_vals = rng.randint_array(1, 10, len(edge_list)).astype(np.float64)
    supplies = {(i,): 0.0 for i in range(1, nodes + 1)}
    supplies[(1,)] = 1.0
    supplies[(nodes,)] = -1.0
    data = DataBundle(
        index_sets={"E": edge_list},
        parameter_arrays={
            "c": dict(zip(edge_list, cost_vals.tolist())),
            "s": supplies,
        },
        index_spaces={"V": list(range(1, nodes + 1))},
    )
    data._set_arrays["E"] = emat
    return flow_symbolic(), data


# ---------------------------------------------------------------------------
# P-median
# ---------------------------------------------------------------------------

def pmedian_symbolic(facilities: int) -> SymbolicModel:
    """Assignment + open-facility-count model; the open count is baked into
    the cardinality row as a literal."""
    assign = _expr(("u",), _sum(("u", "f"), "CF", Term("y", ("u", "f"), 1.0)))
    link = _expr(("u", "f"), Sub(
        _sum(("u", "f"), "CF", Term("y", ("u", "f"), 1.0)),
        _sum(("u", "f"), "CF", Term("open", ("f",), 1.0))))
    card = _expr((), _sum(("f",), "F1", Term("open", ("f",), 1.0)))
    objective = _expr((), _sum(("u", "f"), "CF",
                               Term("y", ("u", "f"), ParamCoef("d", ("u", "f")))))
    return SymbolicModel(
        variables=(VariableDecl("y", 2, domains=("CS", "FS")),
                   VariableDecl("open", 1, integer=True, domains=("FS",))),
        constants=(DataPlaceholder("CF", "index_set", 2),
                   DataPlaceholder("F1", "index_set", 1),
                   DataPlaceholder("d", "parameter_array", 2)),
        index_placeholders=(IndexPlaceholder("u", GLOBAL, "CS"),
                            IndexPlaceholder("f", GLOBAL, "FS")),
        objective=objective,
        sense="min",
        constraints=(
            ConstraintBlock(assign, "=", 1.0),
            ConstraintBlock(link, "<=", 0.0),
            ConstraintBlock(card, "=", float(facilities)),
        ),
        bounds=(BoundOverride("open", upper=1.0),
                BoundOverride("y", upper=1.0)),
    )


def gen_p_median(customers: int, candidates: int, facilities: int,
                 seed: int) -> tuple[SymbolicModel, DataBundle]:
    """Classic p-median: assign every customer to exactly one open facility,
    open exactly p of them, pay the assignment distance."""
    if facilities > candidates:
        raise GenerationError("cannot open more facilities than candidates")
    if facilities < 1:
        raise GenerationError("need at least one facility")
    rng = SplitMix64(seed)
    cu = np.repeat(np.arange(1, customers + 1, dtype=np.int64), candidates)
    fa = np.tile(np.arange(1, candidates + 1, dtype=np.int64), customers)
    cf = np.column_stack([cu, fa])
    pairs = [tuple(r) for r in cf.tolist()]
    dist = rng.randint_array(1, 100, len(pairs)).astype(np.float64)
    data = DataBundle(
        index_sets={"CF": pairs,
                    "F1": [(f,) for f in range(1, candidates + 1)]},
        parameter_arrays={"d": dict(zip(pairs, dist.tolist()))},
        index_spaces={"CS": list(range(1, customers + 1)),
                      "FS": list(range(1, candidates + 1))},
    )
    data._set_arrays["CF"] = cf
    return pmedian_symbolic(facilities), data


# ---------------------------------------------------------------------------
# Production planning (sequential)
# ---------------------------------------------------------------------------

def production_symbolic() -> SymbolicModel:
    """Three-family production planning over (period, plant, item).

    Inventory balance (every item), delay tracking (demanded items), and a
    replacement cap per bill-of-material edge that admits alternatives:

      inv[t] - inv[t-1] - made - bought - replaced_in
             + consumed + replaced_out + delivered     = exogenous inflow
      m[t] - m[t-1] + delivered                        = demand
      sum of alternative use on an edge - ratio * production of the parent <= 0

    Variables: x production, pur purchases (capacity-bounded), z deliveries,
    rp alternative-material use, inv inventory (state), m delay (state).
    """
    t, p, i = "t", "p", "i"
    stock_change = Sub(
        _sum((t, p, i), "P", Term("inv", (t, p, i), 1.0)),
        _sum((t, p, i, "tp"), "PL", Term("inv", ("tp", p, i), 1.0)))
    inbound = Add(
        Add(_sum((t, p, i), "PPROD", Term("x", (t, p, i), 1.0)),
            _sum((t, p, i), "PRAW", Term("pur", (t, p, i), 1.0))),
        _sum((t, p, i, "ia", "j"), "RP",
             Term("rp", (t, p, i, "ia", "j"), 1.0)))
    outbound = Add(
        Add(_sum((t, p, i, "j"), "BOMC",
                 Term("x", (t, p, "j"), ParamCoef("B", (t, p, i, "j")))),
            _sum((t, p, "iq", i, "j"), "RP",
                 Term("rp", (t, p, "iq", i, "j"), 1.0))),
        _sum((t, p, i), "PDEM", Term("z", (t, p, i), 1.0)))
    inv_expr = _expr((t, p, i), Add(Sub(stock_change, inbound), outbound))

    delay_expr = _expr((t, p, i), Add(
        Sub(_sum((t, p, i), "PDEM", Term("m", (t, p, i), 1.0)),
            _sum((t, p, i, "tp"), "PLM", Term("m", ("tp", p, i), 1.0))),
        _sum((t, p, i), "PDEM", Term("z", (t, p, i), 1.0))))

    rp_expr = _expr((t, p, i, "j"), Sub(
        _sum((t, p, i, "ia", "j"), "RP", Term("rp", (t, p, i, "ia", "j"), 1.0)),
        _sum((t, p, i, "j"), "BOMA",
             Term("x", (t, p, "j"), ParamCoef("B", (t, p, i, "j"))))))

    objective = _expr((), Add(
        Add(
            Add(_sum((t, p, i), "PDEM",
                     Term("m", (t, p, i), ParamCoef("cm", (t, p, i)))),
                _sum((t, p, i), "PPROD",
                     Term("x", (t, p, i), ParamCoef("cx", (t, p, i))))),
            _sum((t, p, i), "PRAW",
                 Term("pur", (t, p, i), ParamCoef("cpur", (t, p, i))))),
        _sum((t, p, i, "ia", "j"), "RP",
             Term("rp", (t, p, i, "ia", "j"), ParamCoef("crp", (t, p, i, "ia", "j"))))))

    return SymbolicModel(
        variables=(
            VariableDecl("x", 3, domains=("TS", "PS", "IS")),
            VariableDecl("pur", 3, domains=("TS", "PS", "IS")),
            VariableDecl("z", 3, domains=("TS", "PS", "IS")),
            VariableDecl("rp", 5, domains=("TS", "PS", "IS", "IS", "IS")),
            VariableDecl("inv", 3, domains=("TS", "PS", "IS")),
            VariableDecl("m", 3, domains=("TS", "PS", "IS")),
        ),
        constants=(
            DataPlaceholder("P", "index_set", 3),
            DataPlaceholder("PPROD", "index_set", 3),
            DataPlaceholder("PRAW", "index_set", 3),
            DataPlaceholder("PDEM", "index_set", 3),
            DataPlaceholder("PL", "index_set", 4),
            DataPlaceholder("PLM", "index_set", 4),
            DataPlaceholder("BOMC", "index_set", 4),
            DataPlaceholder("BOMA", "index_set", 4),
            DataPlaceholder("RP", "index_set", 5),
            DataPlaceholder("B", "parameter_array", 4),
            DataPlaceholder("po", "parameter_array", 3),
            DataPlaceholder("D", "parameter_array", 3),
            DataPlaceholder("rcap", "parameter_array", 4),
            DataPlaceholder("cm", "parameter_array", 3),
            DataPlaceholder("cx", "parameter_array", 3),
            DataPlaceholder("cpur", "parameter_array", 3),
            DataPlaceholder("crp", "parameter_array", 5),
        ),
        index_placeholders=(
            IndexPlaceholder("t", GLOBAL, "TS"),
            IndexPlaceholder("p", GLOBAL, "PS"),
            IndexPlaceholder("i", GLOBAL, "IS"),
            IndexPlaceholder("j", GLOBAL, "IS"),
            IndexPlaceholder("tp", LOCAL, "TS"),
            IndexPlaceholder("ia", LOCAL, "IS"),
            IndexPlaceholder("iq", LOCAL, "IS"),
        ),
        objective=objective,
        sense="min",
        constraints=(
            ConstraintBlock(inv_expr, "=", "po"),
            ConstraintBlock(delay_expr, "=", "D"),
            ConstraintBlock(rp_expr, "<=", "rcap"),
        ),
    )


def production_meta(T: int, purchase_cap: float) -> SequentialMeta:
    return SequentialMeta(
        period_placeholder="t",
        period_count=T,
        variable_period_axis={"x": 0, "pur": 0, "z": 0, "rp": 0,
                              "inv": 0, "m": 0},
        state_variables=frozenset({"inv", "m"}),
        set_period_axes={"P": (0,), "PPROD": (0,), "PRAW": (0,),
                         "PDEM": (0,), "PL": (0, 3), "PLM": (0, 3),
                         "BOMC": (0,), "BOMA": (0,), "RP": (0,)},
        lag_sets=frozenset({"PL", "PLM"}),
        param_period_axis={"B": 0, "po": 0, "D": 0, "rcap": 0, "cm": 0,
                           "cx": 0, "cpur": 0, "crp": 0},
        aggregation_policy={"B": "first", "po": "sum", "D": "sum",
                            "rcap": "sum", "cm": "first", "cx": "first",
                            "cpur": "first", "crp": "first"},
        bound_group_scaled=frozenset({"pur"}),
    )


def gen_production_planning(T: int, plants: int, items: int, seed: int,
                            purchase_cap: float = 12.0,
                            demand_scale: float = 4.0,
                            ) -> tuple[SymbolicModel, DataBundle, SequentialMeta]:
    """Layered bill of material (raw -> assembly -> end product), demands
    with a late spike, per-period purchase caps that force building ahead.

    Delay cost dominates the objective, and the delay variable absorbs any
    unmet demand, so every instance is feasible however early decisions are
    taken. Demands/inflows aggregate by sum; ratios and costs carry their
    first-period value; opening inventory is folded into the first period's
    inflow.
    """
    if T < 2:
        raise GenerationError("need T >= 2")
    if items < 3:
        raise GenerationError("need at least 3 items (raw/assembly/end)")
    rng = SplitMix64(seed)
    n_raw = max(1, items // 3)
    n_mid = max(1, (items - n_raw) // 2)
    raw = list(range(1, n_raw + 1))
    mid = list(range(n_raw + 1, n_raw + n_mid + 1))
    end = list(range(n_raw + n_mid + 1, items + 1))
    periods = range(1, T + 1)
    plants_r = range(1, plants + 1)

    # bill of material: each assembly consumes 1-2 raws, each end product
    # consumes 1-2 assemblies; some edges allow one alternative component
    bom_edges = []       # (component, parent, ratio)
    alternates = {}      # (component, parent) -> alternative component
    for j in mid:
        picks = {rng.choice(raw) for _ in range(rng.randint(1, 2))}
        for i in sorted(picks):
            bom_edges.append((i, j, float(rng.randint(1, 2))))
            if len(raw) > 1 and rng.next_float() < 0.5:
                alt = rng.choice([r for r in raw if r != i])
                alternates[(i, j)] = alt
    for j in end:
        picks = {rng.choice(mid) for _ in range(rng.randint(1, 2))}
        for i in sorted(picks):
            bom_edges.append((i, j, float(rng.randint(1, 2))))
            if len(mid) > 1 and rng.next_float() < 0.5:
                alt = rng.choice([m for m in mid if m != i])
                alternates[(i, j)] = alt

    producible = mid + end
    P, PPROD, PRAW, PDEM = [], [], [], []
    PL, PLM = [], []
    BOMC, BOMA, RP = [], [], []
    po, D, B, rcap = {}, {}, {}, {}
    cm, cx, cpur, crp = {}, {}, {}, {}

    spike_start = max(2, (3 * T) // 4)
    for pl in plants_r:
        base_demand = {e: float(rng.randint(1, int(demand_scale)))
                       for e in end}
        for t in periods:
            for it in range(1, items + 1):
                P.append((t, pl, it))
                if t >= 2:
                    PL.append((t, pl, it, t - 1))
                po[(t, pl, it)] = 0.0
            for it in raw:
                PRAW.append((t, pl, it))
                cpur[(t, pl, it)] = float(rng.randint(2, 6))
            for it in producible:
                PPROD.append((t, pl, it))
                cx[(t, pl, it)] = float(rng.randint(1, 3))
            for it in end:
                PDEM.append((t, pl, it))
                if t >= 2:
                    PLM.append((t, pl, it, t - 1))
                cm[(t, pl, it)] = float(rng.randint(60, 120))
                spike = demand_scale * 3 if t >= spike_start else 0.0
                wave = base_demand[it] if (t + it) % 3 == 0 else 0.0
                D[(t, pl, it)] = wave + (spike if (t + it) % 2 == 0 else 0.0)
            for (i, j, ratio) in bom_edges:
                BOMC.append((t, pl, i, j))
                B[(t, pl, i, j)] = ratio
                alt = alternates.get((i, j))
                if alt is not None:
                    BOMA.append((t, pl, i, j))
                    rcap[(t, pl, i, j)] = 0.0
                    RP.append((t, pl, i, alt, j))
                    crp[(t, pl, i, alt, j)] = float(rng.randint(4, 9))
        # opening inventory of raw material lands in period 1's inflow
        for it in raw:
            po[(1, pl, it)] += float(rng.randint(0, 3))

    data = DataBundle(
        index_sets={"P": P, "PPROD": PPROD, "PRAW": PRAW, "PDEM": PDEM,
                    "PL": PL, "PLM": PLM, "BOMC": BOMC, "BOMA": BOMA,
                    "RP": RP},
        parameter_arrays={"B": B, "po": po, "D": D, "rcap": rcap, "cm": cm,
                          "cx": cx, "cpur": cpur, "crp": crp},
        index_spaces={"TS": list(range(1, T + 1)),
                      "PS": list(range(1, plants + 1)),
                      "IS": list(range(1, items + 1))},
    )
    model = production_symbolic()
    model = SymbolicModel(model.variables, model.constants,
                          model.index_placeholders, model.objective,
                          model.sense, model.constraints,
                          bounds=(BoundOverride("pur", upper=purchase_cap),))
    return model, data, production_meta(T, purchase_cap)
