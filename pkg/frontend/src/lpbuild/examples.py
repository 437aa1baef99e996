"""Worked models expressed through the builder API.

These double as executable documentation and as the cross-construction
fixtures: the emitted documents must instantiate to exactly the same
matrices as the core's own generators.
"""

from __future__ import annotations

from .data import Data
from .model import Model, total


def min_cost_flow_model() -> Model:
    """min sum c_ij x_ij  s.t.  flow out - flow in = s_i per node."""
    m = Model()
    i = m.global_index("i", "V")
    j = m.local_index("j", "V")
    E = m.index_set("E", 2)
    c = m.param("c", 2)
    s = m.param("s", 1)
    x = m.var("x", 2, domains=("V", "V"))
    m.minimize(total((i, j), E, c[i, j] * x[i, j]))
    m.constrain("balance",
                total((i, j), E, x[i, j]) - total((j, i), E, x[j, i]),
                "=", s, indexed=(i,))
    return m


def min_cost_flow_paper() -> tuple[str, str]:
    """The worked 4-node instance as (IR document, data document)."""
    edges = [(1, 2), (2, 4), (1, 3), (3, 4)]
    data = (Data()
            .index_set("E", edges)
            .table("c", {e: 1.0 for e in edges})
            .table("s", {(1,): 1.0, (2,): 0.0, (3,): 0.0, (4,): -1.0})
            .space("V", [1, 2, 3, 4]))
    return min_cost_flow_model().emit_ir(), data.emit()


def production_planning_model() -> Model:
    """Three-family production planning over (period, plant, item):
    inventory balance, delay tracking, and the per-edge replacement cap."""
    m = Model()
    t = m.global_index("t", "TS")
    p = m.global_index("p", "PS")
    i = m.global_index("i", "IS")
    j = m.global_index("j", "IS")
    tp = m.local_index("tp", "TS")
    ia = m.local_index("ia", "IS")
    iq = m.local_index("iq", "IS")

    P = m.index_set("P", 3)
    PPROD = m.index_set("PPROD", 3)
    PRAW = m.index_set("PRAW", 3)
    PDEM = m.index_set("PDEM", 3)
    PL = m.index_set("PL", 4)
    PLM = m.index_set("PLM", 4)
    BOMC = m.index_set("BOMC", 4)
    BOMA = m.index_set("BOMA", 4)
    RP = m.index_set("RP", 5)

    B = m.param("B", 4)
    po = m.param("po", 3)
    D = m.param("D", 3)
    rcap = m.param("rcap", 4)
    cm = m.param("cm", 3)
    cx = m.param("cx", 3)
    cpur = m.param("cpur", 3)
    crp = m.param("crp", 5)

    x = m.var("x", 3, domains=("TS", "PS", "IS"))
    pur = m.var("pur", 3, domains=("TS", "PS", "IS"))
    z = m.var("z", 3, domains=("TS", "PS", "IS"))
    rp = m.var("rp", 5, domains=("TS", "PS", "IS", "IS", "IS"))
    inv = m.var("inv", 3, domains=("TS", "PS", "IS"))
    md = m.var("m", 3, domains=("TS", "PS", "IS"))

    stock_change = (total((t, p, i), P, inv[t, p, i])
                    - total((t, p, i, tp), PL, inv[tp, p, i]))
    inbound = (total((t, p, i), PPROD, x[t, p, i])
               + total((t, p, i), PRAW, pur[t, p, i])
               + total((t, p, i, ia, j), RP, rp[t, p, i, ia, j]))
    outbound = (total((t, p, i, j), BOMC, B[t, p, i, j] * x[t, p, j])
                + total((t, p, iq, i, j), RP, rp[t, p, iq, i, j])
                + total((t, p, i), PDEM, z[t, p, i]))
    m.constrain("inventory", stock_change - inbound + outbound, "=", po,
                indexed=(t, p, i))

    m.constrain("delay",
                total((t, p, i), PDEM, md[t, p, i])
                - total((t, p, i, tp), PLM, md[tp, p, i])
                + total((t, p, i), PDEM, z[t, p, i]),
                "=", D, indexed=(t, p, i))

    m.constrain("replacement",
                total((t, p, i, ia, j), RP, rp[t, p, i, ia, j])
                - total((t, p, i, j), BOMA, B[t, p, i, j] * x[t, p, j]),
                "<=", rcap, indexed=(t, p, i, j))

    m.minimize(total((t, p, i), PDEM, cm[t, p, i] * md[t, p, i])
               + total((t, p, i), PPROD, cx[t, p, i] * x[t, p, i])
               + total((t, p, i), PRAW, cpur[t, p, i] * pur[t, p, i])
               + total((t, p, i, ia, j), RP,
                       crp[t, p, i, ia, j] * rp[t, p, i, ia, j]))
    m.bound(pur, upper=12.0)
    return m
