"""Symbolic model core: index placeholders, expression trees, constraint
triples, and the JSON document format they serialize to.

A model is a template. Nothing in this module touches concrete data; binding
data to a template is the instantiator's job. The JSON layout has six
top-level components: ``variables``, ``constants``, ``index_placeholders``,
``expressions``, ``constraints``, ``bounds``. Expression graphs are stored as
flat node arrays with integer child references so parsing stays linear and
nesting depth is never a problem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .errors import IrParseError, ValidationError

GLOBAL = "global"
LOCAL = "local"

SIGNS = ("=", "<=", ">=")

IR_FILE_EXTENSION = ".glir.json"


@dataclass(frozen=True)
class IndexPlaceholder:
    """A symbol ranging over an index space. Global placeholders index whole
    expression families; local ones live inside a single sum operator."""

    name: str
    kind: str  # GLOBAL or LOCAL
    domain: str | None = None  # name of its index space, if declared


@dataclass(frozen=True)
class DataPlaceholder:
    """Named slot for concrete data supplied at instantiation time."""

    name: str
    kind: str  # "index_set" | "parameter_array" | "scalar"
    arity: int


@dataclass(frozen=True)
class ParamCoef:
    """Coefficient drawn from a parameter array, optionally scaled.

    Effective value at a leaf is ``scale * array[index*]``. The scale exists
    so expression negation (max-to-min normalization, subtraction) can stay
    a leaf-local rewrite.
    """

    param: str
    index: tuple[str, ...]
    scale: float = 1.0


class ExprNode:
    """Base class for expression tree nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Add(ExprNode):
    left: ExprNode
    right: ExprNode


@dataclass(frozen=True)
class Sub(ExprNode):
    left: ExprNode
    right: ExprNode


@dataclass(frozen=True)
class Sum(ExprNode):
    """Sum operator with logical condition ``binding in set_ref``.

    ``binding`` is positional: its k-th name labels the k-th component of
    every tuple in the referenced index set. Names that are global
    placeholders tie the sum to the expression family's index; the rest are
    this sum's local placeholders.
    """

    sum_id: int
    binding: tuple[str, ...]
    set_ref: str
    child: ExprNode


@dataclass(frozen=True)
class Term(ExprNode):
    """Leaf: one variable occurrence with its coefficient."""

    variable: str
    index: tuple[str, ...]
    coef: float | ParamCoef = 1.0


@dataclass(frozen=True)
class MultidimExpression:
    """An expression family indexed by a tuple of global placeholders."""

    global_indices: tuple[str, ...]
    root: ExprNode


@dataclass(frozen=True)
class ConstraintBlock:
    """One constraint family: expression, sign, and right-hand side.

    ``rhs`` is either a parameter-array name (looked up per realized index)
    or a literal broadcast to every row of the family.
    """

    expr: MultidimExpression
    sign: str
    rhs: str | float


@dataclass(frozen=True)
class VariableDecl:
    name: str
    rank: int
    lower: float = 0.0
    integer: bool = False
    # Per-position index-space names; required only for dense-column mode.
    domains: tuple[str, ...] | None = None


@dataclass(frozen=True)
class BoundOverride:
    var: str
    lower: float | None = None  # None keeps the declaration's lower
    upper: float | None = None  # None means unbounded above


@dataclass(frozen=True)
class SymbolicModel:
    variables: tuple[VariableDecl, ...]
    constants: tuple[DataPlaceholder, ...]
    index_placeholders: tuple[IndexPlaceholder, ...]
    objective: MultidimExpression
    sense: str  # "min" | "max"
    constraints: tuple[ConstraintBlock, ...]
    bounds: tuple[BoundOverride, ...] = ()

    def placeholder(self, name: str) -> IndexPlaceholder | None:
        for p in self.index_placeholders:
            if p.name == name:
                return p
        return None

    def constant(self, name: str) -> DataPlaceholder | None:
        for c in self.constants:
            if c.name == name:
                return c
        return None

    def variable(self, name: str) -> VariableDecl | None:
        for v in self.variables:
            if v.name == name:
                return v
        return None

    def global_names(self) -> set[str]:
        return {p.name for p in self.index_placeholders if p.kind == GLOBAL}


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    where: str
    message: str

    def __str__(self):
        return f"[{self.code}] {self.where}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, where: str, message: str):
        self.violations.append(Violation(code, where, message))

    def __str__(self):
        if self.ok:
            return "ok"
        return "; ".join(str(v) for v in self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


def walk(node: ExprNode):
    """Pre-order iterator over an expression tree."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, (Add, Sub)):
            stack.append(n.right)
            stack.append(n.left)
        elif isinstance(n, Sum):
            stack.append(n.child)


def sum_nodes_preorder(node: ExprNode) -> list[Sum]:
    out = []

    def rec(n):
        if isinstance(n, Sum):
            out.append(n)
            rec(n.child)
        elif isinstance(n, (Add, Sub)):
            rec(n.left)
            rec(n.right)

    rec(node)
    return out


def validate(model: SymbolicModel) -> ValidationReport:
    """Check every structural invariant a template must satisfy before it can
    be instantiated. Returns a report; an empty report means instantiable."""
    rep = ValidationReport()

    seen = set()
    for v in model.variables:
        if v.name in seen:
            rep.add("DuplicateName", f"variables.{v.name}", "declared twice")
        seen.add(v.name)
        if v.rank < 0:
            rep.add("BadRank", f"variables.{v.name}", f"rank {v.rank} < 0")
        if v.domains is not None and len(v.domains) != v.rank:
            rep.add("ArityMismatch", f"variables.{v.name}",
                    f"{len(v.domains)} domains declared for rank {v.rank}")

    seen = set()
    for c in model.constants:
        if c.name in seen:
            rep.add("DuplicateName", f"constants.{c.name}", "declared twice")
        seen.add(c.name)
        if c.kind == "scalar":
            if c.arity != 0:
                rep.add("ArityMismatch", f"constants.{c.name}",
                        f"scalar with arity {c.arity}")
        elif c.kind in ("index_set", "parameter_array"):
            if c.arity < 1:
                rep.add("ArityMismatch", f"constants.{c.name}",
                        f"{c.kind} needs arity >= 1, got {c.arity}")
        else:
            rep.add("BadKind", f"constants.{c.name}", f"unknown kind {c.kind!r}")

    seen = set()
    for p in model.index_placeholders:
        if p.name in seen:
            rep.add("DuplicateName", f"index_placeholders.{p.name}", "declared twice")
        seen.add(p.name)
        if p.kind not in (GLOBAL, LOCAL):
            rep.add("BadKind", f"index_placeholders.{p.name}",
                    f"unknown kind {p.kind!r}")

    if model.sense not in ("min", "max"):
        rep.add("BadSense", "objective", f"unknown sense {model.sense!r}")

    if model.objective.global_indices:
        rep.add("ObjectiveIndexed", "objective",
                "objective must be a single expression (no global indices)")
    _check_expression(model, model.objective, "objective", rep)

    for bi, blk in enumerate(model.constraints):
        where = f"constraints[{bi}]"
        if blk.sign not in SIGNS:
            rep.add("BadSign", where, f"sign {blk.sign!r} not one of {SIGNS}")
        _check_expression(model, blk.expr, where, rep)
        if isinstance(blk.rhs, str):
            ph = model.constant(blk.rhs)
            if ph is None:
                rep.add("UnboundData", where, f"rhs references undeclared {blk.rhs!r}")
            elif ph.kind != "parameter_array":
                rep.add("BadKind", where, f"rhs {blk.rhs!r} is a {ph.kind}")
            elif ph.arity != len(blk.expr.global_indices):
                rep.add("ArityMismatch", where,
                        f"rhs {blk.rhs!r} arity {ph.arity} != |G| "
                        f"{len(blk.expr.global_indices)}")

    for b in model.bounds:
        if model.variable(b.var) is None:
            rep.add("UnboundData", f"bounds.{b.var}", "no such variable")
        if b.lower is not None and b.upper is not None and b.lower > b.upper:
            rep.add("BadBounds", f"bounds.{b.var}", f"{b.lower} > {b.upper}")

    return rep


def _check_expression(model: SymbolicModel, expr: MultidimExpression,
                      where: str, rep: ValidationReport):
    for g in expr.global_indices:
        ph = model.placeholder(g)
        if ph is None:
            rep.add("UnboundPlaceholder", where, f"global index {g!r} undeclared")
        elif ph.kind != GLOBAL:
            rep.add("BadKind", where, f"{g!r} used as global but declared {ph.kind}")
    if len(set(expr.global_indices)) != len(expr.global_indices):
        rep.add("DuplicateName", where, "repeated global index")

    sum_ids: list[int] = []

    def rec(node: ExprNode, scope: dict[str, str], path: str):
        if isinstance(node, (Add, Sub)):
            rec(node.left, scope, path + ".left")
            rec(node.right, scope, path + ".right")
            return
        if isinstance(node, Sum):
            sum_ids.append(node.sum_id)
            ph = model.constant(node.set_ref)
            if ph is None:
                rep.add("UnboundData", f"{where}{path}",
                        f"sum references undeclared set {node.set_ref!r}")
            elif ph.kind != "index_set":
                rep.add("BadKind", f"{where}{path}",
                        f"sum set {node.set_ref!r} is a {ph.kind}")
            elif ph.arity != len(node.binding):
                rep.add("ArityMismatch", f"{where}{path}",
                        f"binding {node.binding} has {len(node.binding)} names "
                        f"but set {node.set_ref!r} has arity {ph.arity}")
            if len(set(node.binding)) != len(node.binding):
                rep.add("DuplicateName", f"{where}{path}",
                        f"binding {node.binding} repeats a placeholder")
            inner = dict(scope)
            for name in node.binding:
                if model.placeholder(name) is None:
                    rep.add("UnboundPlaceholder", f"{where}{path}",
                            f"binding name {name!r} undeclared")
                    continue
                # a name is global *for this expression* iff it sits in the
                # expression's index tuple; the same symbol may serve as a
                # sum-local elsewhere (the objective does this routinely)
                if name not in expr.global_indices:
                    if name in scope:
                        rep.add("ScopeShadow", f"{where}{path}",
                                f"local {name!r} already bound on this path")
                    inner[name] = "local"
            rec(node.child, inner, path + ".child")
            return
        if isinstance(node, Term):
            if model.variable(node.variable) is None:
                rep.add("UnboundData", f"{where}{path}",
                        f"term references undeclared variable {node.variable!r}")
            else:
                rank = model.variable(node.variable).rank
                if rank != len(node.index):
                    rep.add("ArityMismatch", f"{where}{path}",
                            f"variable {node.variable!r} has rank {rank} but "
                            f"term indexes it with {len(node.index)}")
            refs = list(node.index)
            if isinstance(node.coef, ParamCoef):
                refs.extend(node.coef.index)
                ph = model.constant(node.coef.param)
                if ph is None:
                    rep.add("UnboundData", f"{where}{path}",
                            f"coefficient references undeclared {node.coef.param!r}")
                elif ph.kind != "parameter_array":
                    rep.add("BadKind", f"{where}{path}",
                            f"coefficient array {node.coef.param!r} is a {ph.kind}")
                elif ph.arity != len(node.coef.index):
                    rep.add("ArityMismatch", f"{where}{path}",
                            f"coefficient {node.coef.param!r} arity {ph.arity} "
                            f"!= {len(node.coef.index)} index names")
            for name in refs:
                if name in scope or name in expr.global_indices:
                    continue
                rep.add("UnboundPlaceholder", f"{where}{path}",
                        f"placeholder {name!r} is neither a global of this "
                        f"expression nor bound by an enclosing sum")
            return
        rep.add("BadNode", f"{where}{path}", f"unknown node {type(node).__name__}")

    rec(expr.root, {}, "")

    if sum_ids != list(range(1, len(sum_ids) + 1)):
        rep.add("SumNumbering", where,
                f"sum ids must be 1..{len(sum_ids)} in pre-order, got {sum_ids}")


def number_sums(expr: MultidimExpression) -> MultidimExpression:
    """Rewrite sum ids to consecutive pre-order numbering 1..K."""
    counter = [0]

    def rec(node: ExprNode) -> ExprNode:
        if isinstance(node, Sum):
            counter[0] += 1
            sid = counter[0]
            return Sum(sid, node.binding, node.set_ref, rec(node.child))
        if isinstance(node, Add):
            return Add(rec(node.left), rec(node.right))
        if isinstance(node, Sub):
            return Sub(rec(node.left), rec(node.right))
        return node

    return MultidimExpression(expr.global_indices, rec(expr.root))


def negate(expr: MultidimExpression) -> MultidimExpression:
    """Distribute a sign flip down to every leaf coefficient."""

    def rec(node: ExprNode) -> ExprNode:
        if isinstance(node, Add):
            return Add(rec(node.left), rec(node.right))
        if isinstance(node, Sub):
            return Sub(rec(node.left), rec(node.right))
        if isinstance(node, Sum):
            return Sum(node.sum_id, node.binding, node.set_ref, rec(node.child))
        coef = node.coef
        if isinstance(coef, ParamCoef):
            coef = ParamCoef(coef.param, coef.index, -coef.scale)
        else:
            coef = -coef
        return Term(node.variable, node.index, coef)

    return MultidimExpression(expr.global_indices, rec(expr.root))


def normalized_sense(model: SymbolicModel) -> SymbolicModel:
    """Return an equivalent minimization model (max objectives negated)."""
    if model.sense == "min":
        return model
    return replace(model, objective=negate(model.objective), sense="min")


def require_valid(model: SymbolicModel) -> None:
    rep = validate(model)
    if not rep.ok:
        raise ValidationError(rep)


# ---------------------------------------------------------------------------
# JSON document format
# ---------------------------------------------------------------------------

def _graph_to_obj(expr: MultidimExpression) -> dict:
    nodes: list[dict] = []

    def rec(node: ExprNode) -> int:
        if isinstance(node, Add):
            left, right = rec(node.left), rec(node.right)
            nodes.append({"op": "add", "left": left, "right": right})
        elif isinstance(node, Sub):
            left, right = rec(node.left), rec(node.right)
            nodes.append({"op": "sub", "left": left, "right": right})
        elif isinstance(node, Sum):
            child = rec(node.child)
            nodes.append({"op": "sum", "id": node.sum_id,
                          "binding": list(node.binding),
                          "set": node.set_ref, "child": child})
        elif isinstance(node, Term):
            if isinstance(node.coef, ParamCoef):
                coef = {"param": node.coef.param,
                        "index": list(node.coef.index),
                        "scale": node.coef.scale}
            else:
                coef = node.coef
            nodes.append({"op": "term", "var": node.variable,
                          "index": list(node.index), "coef": coef})
        else:
            raise TypeError(f"unknown node {type(node).__name__}")
        return len(nodes) - 1

    root = rec(expr.root)
    return {"indices": list(expr.global_indices), "root": root, "nodes": nodes}


def _graph_from_obj(obj, path: str) -> MultidimExpression:
    if not isinstance(obj, dict):
        raise IrParseError(path, "expression graph must be an object")
    for key in ("indices", "root", "nodes"):
        if key not in obj:
            raise IrParseError(path, f"missing key {key!r}")
    raw_nodes = obj["nodes"]
    if not isinstance(raw_nodes, list):
        raise IrParseError(path + ".nodes", "must be an array")
    built: list[ExprNode | None] = [None] * len(raw_nodes)

    def child(i, idx, key):
        if not isinstance(idx, int) or not (0 <= idx < i):
            raise IrParseError(f"{path}.nodes[{i}].{key}",
                               f"child reference {idx!r} must point at an "
                               f"earlier node")
        return built[idx]

    for i, raw in enumerate(raw_nodes):
        npath = f"{path}.nodes[{i}]"
        if not isinstance(raw, dict) or "op" not in raw:
            raise IrParseError(npath, "node must be an object with an 'op'")
        op = raw["op"]
        try:
            if op == "add":
                built[i] = Add(child(i, raw["left"], "left"),
                               child(i, raw["right"], "right"))
            elif op == "sub":
                built[i] = Sub(child(i, raw["left"], "left"),
                               child(i, raw["right"], "right"))
            elif op == "sum":
                built[i] = Sum(int(raw["id"]), tuple(raw["binding"]),
                               raw["set"], child(i, raw["child"], "child"))
            elif op == "term":
                coef = raw.get("coef", 1.0)
                if isinstance(coef, dict):
                    coef = ParamCoef(coef["param"], tuple(coef["index"]),
                                     float(coef.get("scale", 1.0)))
                else:
                    coef = float(coef)
                built[i] = Term(raw["var"], tuple(raw["index"]), coef)
            else:
                raise IrParseError(npath, f"unknown op {op!r}")
        except KeyError as e:
            raise IrParseError(npath, f"missing key {e.args[0]!r}") from None
    root = obj["root"]
    if not isinstance(root, int) or not (0 <= root < len(built)):
        raise IrParseError(path + ".root", f"bad root reference {root!r}")
    return MultidimExpression(tuple(obj["indices"]), built[root])


def emit_ir(model: SymbolicModel) -> str:
    """Serialize to the canonical JSON document (deterministic byte output).

    Refuses invalid models; emit is the trust boundary for files on disk.
    """
    require_valid(model)
    doc = {
        "variables": [
            {"name": v.name, "rank": v.rank, "lower": v.lower,
             "integer": v.integer,
             **({"domains": list(v.domains)} if v.domains is not None else {})}
            for v in model.variables
        ],
        "constants": [
            {"name": c.name, "kind": c.kind, "arity": c.arity}
            for c in model.constants
        ],
        "index_placeholders": [
            {"name": p.name, "kind": p.kind,
             **({"domain": p.domain} if p.domain is not None else {})}
            for p in model.index_placeholders
        ],
        "expressions": {
            "objective": {"sense": model.sense,
                          "graph": _graph_to_obj(model.objective)},
            "constraints": [_graph_to_obj(b.expr) for b in model.constraints],
        },
        "constraints": [
            {"expr": i, "sign": b.sign,
             "rhs": ({"param": b.rhs} if isinstance(b.rhs, str) else b.rhs)}
            for i, b in enumerate(model.constraints)
        ],
        "bounds": [
            {"var": b.var, "lower": b.lower, "upper": b.upper}
            for b in model.bounds
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def parse_ir(text: str) -> SymbolicModel:
    """Parse a JSON IR document. Errors carry the JSON path that failed."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise IrParseError("$", f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise IrParseError("$", "document root must be an object")
    for key in ("variables", "constants", "index_placeholders",
                "expressions", "constraints", "bounds"):
        if key not in doc:
            raise IrParseError(f"$.{key}", "missing component")

    variables = []
    for i, raw in enumerate(doc["variables"]):
        path = f"$.variables[{i}]"
        try:
            variables.append(VariableDecl(
                raw["name"], int(raw["rank"]), float(raw.get("lower", 0.0)),
                bool(raw.get("integer", False)),
                tuple(raw["domains"]) if "domains" in raw else None))
        except (KeyError, TypeError) as e:
            raise IrParseError(path, f"bad variable: {e}") from None

    constants = []
    for i, raw in enumerate(doc["constants"]):
        path = f"$.constants[{i}]"
        try:
            constants.append(DataPlaceholder(raw["name"], raw["kind"],
                                             int(raw["arity"])))
        except (KeyError, TypeError) as e:
            raise IrParseError(path, f"bad constant: {e}") from None

    placeholders = []
    for i, raw in enumerate(doc["index_placeholders"]):
        path = f"$.index_placeholders[{i}]"
        try:
            placeholders.append(IndexPlaceholder(raw["name"], raw["kind"],
                                                 raw.get("domain")))
        except (KeyError, TypeError) as e:
            raise IrParseError(path, f"bad placeholder: {e}") from None

    exprs = doc["expressions"]
    if not isinstance(exprs, dict) or "objective" not in exprs \
            or "constraints" not in exprs:
        raise IrParseError("$.expressions",
                           "must hold 'objective' and 'constraints'")
    obj = exprs["objective"]
    if not isinstance(obj, dict) or "sense" not in obj or "graph" not in obj:
        raise IrParseError("$.expressions.objective",
                           "must hold 'sense' and 'graph'")
    objective = _graph_from_obj(obj["graph"], "$.expressions.objective.graph")
    graphs = [
        _graph_from_obj(g, f"$.expressions.constraints[{i}]")
        for i, g in enumerate(exprs["constraints"])
    ]

    blocks = []
    for i, raw in enumerate(doc["constraints"]):
        path = f"$.constraints[{i}]"
        if not isinstance(raw, dict):
            raise IrParseError(path, "constraint must be an object")
        try:
            gi = raw["expr"]
            if not isinstance(gi, int) or not (0 <= gi < len(graphs)):
                raise IrParseError(f"{path}.expr",
                                   f"graph reference {gi!r} out of range")
            rhs = raw["rhs"]
            rhs = rhs["param"] if isinstance(rhs, dict) else float(rhs)
            blocks.append(ConstraintBlock(graphs[gi], raw["sign"], rhs))
        except KeyError as e:
            raise IrParseError(path, f"missing key {e.args[0]!r}") from None

    bounds = []
    for i, raw in enumerate(doc["bounds"]):
        path = f"$.bounds[{i}]"
        try:
            lo = raw.get("lower")
            hi = raw.get("upper")
            bounds.append(BoundOverride(
                raw["var"],
                None if lo is None else float(lo),
                None if hi is None else float(hi)))
        except (KeyError, TypeError) as e:
            raise IrParseError(path, f"bad bound: {e}") from None

    return SymbolicModel(tuple(variables), tuple(constants), tuple(placeholders),
                         objective, obj["sense"], tuple(blocks), tuple(bounds))
