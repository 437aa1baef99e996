"""Programmatic model construction.

A Model collects variable/constant/placeholder declarations and symbolic
expressions built with ordinary Python operators, then serializes the whole
thing to the core's JSON IR. No matrix is ever computed here: the emitted
document is the entire contract with the solver side.

    m = Model()
    V = "V"
    i, j = m.global_index("i", V), m.local_index("j", V)
    E, c, s = m.index_set("E", 2), m.param("c", 2), m.param("s", 1)
    x = m.var("x", 2, domains=(V, V))
    m.minimize(total((i, j), E, c[i, j] * x[i, j]))
    m.constrain("balance", total((i, j), E, x[i, j])
                - total((j, i), E, x[j, i]), "=", s, indexed=(i,))
    text = m.emit_ir()

Builder misuse (wrong arity, foreign handles, double coefficients) raises
BuildError at the offending call, carrying the caller's source location.
"""

from __future__ import annotations

import json
import sys


class BuildError(Exception):
    """Raised at construction time; message carries the caller's location."""


def _caller(depth=2) -> str:
    f = sys._getframe(depth)
    return f"{f.f_code.co_filename}:{f.f_lineno}"


def _err(message, depth=3):
    raise BuildError(f"{message} (at {_caller(depth)})")


# -- expression nodes --------------------------------------------------------

class Expr:
    def __add__(self, other):
        return _binop("add", self, other)

    def __sub__(self, other):
        return _binop("sub", self, other)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, factor):
        if not isinstance(factor, (int, float)):
            _err(f"can only scale an expression by a number, got {factor!r}")
        return self._scaled(float(factor))

    __rmul__ = __mul__

    def _scaled(self, factor):
        raise NotImplementedError


def _binop(op, left, right):
    if not isinstance(left, Expr) or not isinstance(right, Expr):
        _err(f"both operands of {op} must be expressions", depth=4)
    return _Bin(op, left, right)


class _Bin(Expr):
    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def _scaled(self, factor):
        return _Bin(self.op, self.left._scaled(factor),
                    self.right._scaled(factor))


class _Term(Expr):
    def __init__(self, var, index, coef=1.0, coef_param=None):
        self.var = var              # _Var handle
        self.index = index          # tuple of _Placeholder
        self.coef = coef            # literal or scale when coef_param set
        self.coef_param = coef_param  # (param handle, index tuple) or None

    def _scaled(self, factor):
        return _Term(self.var, self.index, self.coef * factor,
                     self.coef_param)


class _Sum(Expr):
    def __init__(self, binding, set_handle, child):
        self.binding = binding
        self.set_handle = set_handle
        self.child = child

    def _scaled(self, factor):
        return _Sum(self.binding, self.set_handle, self.child._scaled(factor))


class _CoefRef:
    """A parameter lookup waiting to be multiplied onto a term."""

    def __init__(self, param, index, scale=1.0):
        self.param = param
        self.index = index
        self.scale = scale

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return _CoefRef(self.param, self.index, self.scale * float(other))
        if isinstance(other, _Term):
            if other.coef_param is not None:
                _err("term already carries a parameter coefficient")
            return _Term(other.var, other.index, other.coef * self.scale,
                         (self.param, self.index))
        _err(f"cannot multiply a parameter reference by {other!r}")

    __rmul__ = __mul__

    def __neg__(self):
        return _CoefRef(self.param, self.index, -self.scale)


def total(binding, index_set, body) -> Expr:
    """Sum of ``body`` over every tuple of ``index_set``; ``binding`` names
    the tuple positions, mixing the expression's indices and sum-locals."""
    if isinstance(binding, _Placeholder):
        binding = (binding,)
    binding = tuple(binding)
    if not isinstance(index_set, _IndexSet):
        _err(f"second argument must be an index set, got {index_set!r}")
    for b in binding:
        if not isinstance(b, _Placeholder):
            _err(f"binding entries must be index placeholders, got {b!r}")
    if len(binding) != index_set.arity:
        _err(f"set {index_set.name!r} has arity {index_set.arity}, "
             f"binding has {len(binding)} names")
    if len({b.name for b in binding}) != len(binding):
        _err("binding repeats a placeholder")
    if not isinstance(body, Expr):
        _err(f"sum body must be an expression, got {body!r}")
    return _Sum(binding, index_set, body)


# -- declaration handles ------------------------------------------------------

class _Placeholder:
    def __init__(self, model, name, kind, domain):
        self.model = model
        self.name = name
        self.kind = kind
        self.domain = domain

    def __repr__(self):
        return f"<index {self.name}>"


class _Var:
    def __init__(self, model, name, rank, lower, integer, domains):
        self.model = model
        self.name = name
        self.rank = rank
        self.lower = lower
        self.integer = integer
        self.domains = domains

    def __getitem__(self, idx):
        idx = idx if isinstance(idx, tuple) else (idx,)
        if len(idx) != self.rank:
            _err(f"variable {self.name!r} has rank {self.rank}, "
                 f"indexed with {len(idx)}")
        for p in idx:
            if not isinstance(p, _Placeholder) or p.model is not self.model:
                _err(f"variable index must be this model's placeholders, "
                     f"got {p!r}")
        return _Term(self, idx)

    def term(self) -> _Term:
        if self.rank != 0:
            _err(f"variable {self.name!r} has rank {self.rank}; index it")
        return _Term(self, ())


class _Param:
    def __init__(self, model, name, arity):
        self.model = model
        self.name = name
        self.arity = arity

    def __getitem__(self, idx):
        idx = idx if isinstance(idx, tuple) else (idx,)
        if len(idx) != self.arity:
            _err(f"parameter {self.name!r} has arity {self.arity}, "
                 f"indexed with {len(idx)}")
        for p in idx:
            if not isinstance(p, _Placeholder) or p.model is not self.model:
                _err(f"parameter index must be this model's placeholders, "
                     f"got {p!r}")
        return _CoefRef(self, idx)


class _IndexSet:
    def __init__(self, model, name, arity):
        self.model = model
        self.name = name
        self.arity = arity


class Model:
    """Declaration registry plus objective/constraint collection."""

    def __init__(self):
        self._placeholders = []
        self._vars = []
        self._sets = []
        self._params = []
        self._names = set()
        self._bounds = []
        self._objective = None
        self._sense = "min"
        self._constraints = []

    # -- declarations ------------------------------------------------------

    def _fresh(self, name):
        if not isinstance(name, str) or not name:
            _err(f"names must be non-empty strings, got {name!r}", depth=4)
        if name in self._names:
            _err(f"name {name!r} already declared", depth=4)
        self._names.add(name)

    def global_index(self, name, domain=None) -> _Placeholder:
        self._fresh(name)
        p = _Placeholder(self, name, "global", domain)
        self._placeholders.append(p)
        return p

    def local_index(self, name, domain=None) -> _Placeholder:
        self._fresh(name)
        p = _Placeholder(self, name, "local", domain)
        self._placeholders.append(p)
        return p

    def var(self, name, rank, lower=0.0, integer=False, domains=None) -> _Var:
        self._fresh(name)
        if domains is not None and len(domains) != rank:
            _err(f"variable {name!r}: {len(domains)} domains for rank {rank}")
        v = _Var(self, name, rank, float(lower), bool(integer),
                 tuple(domains) if domains is not None else None)
        self._vars.append(v)
        return v

    def index_set(self, name, arity) -> _IndexSet:
        self._fresh(name)
        if arity < 1:
            _err(f"index set {name!r} needs arity >= 1")
        s = _IndexSet(self, name, arity)
        self._sets.append(s)
        return s

    def param(self, name, arity) -> _Param:
        self._fresh(name)
        if arity < 1:
            _err(f"parameter {name!r} needs arity >= 1")
        p = _Param(self, name, arity)
        self._params.append(p)
        return p

    def bound(self, var, lower=None, upper=None):
        if not isinstance(var, _Var) or var.model is not self:
            _err(f"bound target must be this model's variable, got {var!r}")
        self._bounds.append((var.name, lower, upper))

    # -- objective / constraints --------------------------------------------

    def minimize(self, expr):
        self._set_objective(expr, "min")

    def maximize(self, expr):
        self._set_objective(expr, "max")

    def _set_objective(self, expr, sense):
        if self._objective is not None:
            _err("objective already set", depth=4)
        if not isinstance(expr, Expr):
            _err(f"objective must be an expression, got {expr!r}", depth=4)
        self._objective = expr
        self._sense = sense

    def constrain(self, name, expr, sign, rhs, indexed=()):
        """Add a constraint family ``expr sign rhs`` indexed by the given
        global placeholders. ``rhs`` is a parameter handle or a number."""
        if not isinstance(expr, Expr):
            _err(f"constraint body must be an expression, got {expr!r}")
        if sign not in ("=", "<=", ">="):
            _err(f"sign must be one of =, <=, >=; got {sign!r}")
        indexed = tuple(indexed) if not isinstance(indexed, _Placeholder) \
            else (indexed,)
        for p in indexed:
            if not isinstance(p, _Placeholder) or p.model is not self:
                _err(f"index tuple must hold this model's placeholders, "
                     f"got {p!r}")
            if p.kind != "global":
                _err(f"constraint index {p.name!r} must be a global "
                     f"placeholder")
        if isinstance(rhs, _Param):
            if rhs.arity != len(indexed):
                _err(f"rhs {rhs.name!r} has arity {rhs.arity}, constraint "
                     f"is indexed by {len(indexed)}")
            rhs_doc = {"param": rhs.name}
        elif isinstance(rhs, (int, float)):
            rhs_doc = float(rhs)
        else:
            _err(f"rhs must be a parameter or a number, got {rhs!r}")
        self._constraints.append((str(name), indexed, expr, sign, rhs_doc))

    # -- emission ------------------------------------------------------------

    def _graph(self, indices, expr):
        nodes = []
        # ids must follow pre-order, but children serialize first; walk once
        # in pre-order to assign, then emit with the assigned ids
        ids = {}
        counter = [0]

        def assign(node):
            if isinstance(node, _Sum):
                counter[0] += 1
                ids[id(node)] = counter[0]
                assign(node.child)
            elif isinstance(node, _Bin):
                assign(node.left)
                assign(node.right)

        assign(expr)

        def emit2(node) -> int:
            if isinstance(node, _Bin):
                left = emit2(node.left)
                right = emit2(node.right)
                nodes.append({"op": node.op, "left": left, "right": right})
            elif isinstance(node, _Sum):
                child = emit2(node.child)
                nodes.append({"op": "sum", "id": ids[id(node)],
                              "binding": [b.name for b in node.binding],
                              "set": node.set_handle.name, "child": child})
            elif isinstance(node, _Term):
                if node.coef_param is not None:
                    param, pidx = node.coef_param
                    coef = {"param": param.name,
                            "index": [p.name for p in pidx],
                            "scale": node.coef}
                else:
                    coef = node.coef
                nodes.append({"op": "term", "var": node.var.name,
                              "index": [p.name for p in node.index],
                              "coef": coef})
            else:
                _err(f"not an expression node: {node!r}", depth=5)
            return len(nodes) - 1

        nodes.clear()
        root = emit2(expr)
        return {"indices": [p.name for p in indices], "root": root,
                "nodes": nodes}

    def emit_ir(self) -> str:
        """The canonical IR document (byte-stable for equal models)."""
        if self._objective is None:
            _err("model has no objective")
        doc = {
            "variables": [
                {"name": v.name, "rank": v.rank, "lower": v.lower,
                 "integer": v.integer,
                 **({"domains": list(v.domains)} if v.domains is not None
                    else {})}
                for v in self._vars
            ],
            "constants": (
                [{"name": s.name, "kind": "index_set", "arity": s.arity}
                 for s in self._sets]
                + [{"name": p.name, "kind": "parameter_array",
                    "arity": p.arity} for p in self._params]
            ),
            "index_placeholders": [
                {"name": p.name, "kind": p.kind,
                 **({"domain": p.domain} if p.domain is not None else {})}
                for p in self._placeholders
            ],
            "expressions": {
                "objective": {"sense": self._sense,
                              "graph": self._graph((), self._objective)},
                "constraints": [self._graph(idx, expr) for _, idx, expr, _, _
                                in self._constraints],
            },
            "constraints": [
                {"expr": i, "sign": sign, "rhs": rhs}
                for i, (_, _, _, sign, rhs) in enumerate(self._constraints)
            ],
            "bounds": [
                {"var": name, "lower": lo, "upper": hi}
                for name, lo, hi in self._bounds
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
