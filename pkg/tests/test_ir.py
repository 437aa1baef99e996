import json

import pytest

from lpforge.errors import IrParseError
from lpforge.ir import (Add, BoundOverride, ConstraintBlock,
                        MultidimExpression, ParamCoef, Sub, Sum,
                        SymbolicModel, Term, VariableDecl, emit_ir, negate,
                        normalized_sense, number_sums, parse_ir, validate)
from lpforge.modelgen import (gen_production_planning, paper_flow_instance,
                              pmedian_symbolic)


def codes(report):
    return [v.code for v in report]


def test_flow_model_validates(flow_fixture):
    model, _ = flow_fixture
    assert validate(model).ok


def test_unbound_placeholder_flagged(flow_fixture):
    model, _ = flow_fixture
    bad_expr = MultidimExpression(
        ("i",), Sum(1, ("i", "j"), "E", Term("x", ("i", "k"), 1.0)))
    bad = SymbolicModel(model.variables, model.constants,
                        model.index_placeholders, model.objective,
                        model.sense,
                        (ConstraintBlock(bad_expr, "=", "s"),))
    rep = validate(bad)
    assert "UnboundPlaceholder" in codes(rep)


def test_arity_mismatch_flagged(flow_fixture):
    model, _ = flow_fixture
    bad_expr = MultidimExpression(
        ("i",), Sum(1, ("i",), "E", Term("x", ("i", "i"), 1.0)))
    bad = SymbolicModel(model.variables, model.constants,
                        model.index_placeholders, model.objective,
                        model.sense,
                        (ConstraintBlock(bad_expr, "=", "s"),))
    assert "ArityMismatch" in codes(validate(bad))


def test_sum_numbering_enforced(flow_fixture):
    model, _ = flow_fixture
    expr = MultidimExpression(
        ("i",), Sum(2, ("i", "j"), "E", Term("x", ("i", "j"), 1.0)))
    bad = SymbolicModel(model.variables, model.constants,
                        model.index_placeholders, model.objective,
                        model.sense, (ConstraintBlock(expr, "=", "s"),))
    assert "SumNumbering" in codes(validate(bad))
    fixed = SymbolicModel(bad.variables, bad.constants,
                          bad.index_placeholders, bad.objective, bad.sense,
                          (ConstraintBlock(number_sums(expr), "=", "s"),))
    assert validate(fixed).ok


def test_local_shadowing_rejected(flow_fixture):
    model, _ = flow_fixture
    expr = number_sums(MultidimExpression(
        ("i",), Sum(0, ("i", "j"), "E",
                    Sum(0, ("j", "i"), "E", Term("x", ("i", "j"), 1.0)))))
    bad = SymbolicModel(model.variables, model.constants,
                        model.index_placeholders, model.objective,
                        model.sense, (ConstraintBlock(expr, "=", "s"),))
    assert "ScopeShadow" in codes(validate(bad))


def test_rhs_arity_checked(flow_fixture):
    model, _ = flow_fixture
    blk = ConstraintBlock(model.constraints[0].expr, "=", "c")  # arity 2 vs G=1
    bad = SymbolicModel(model.variables, model.constants,
                        model.index_placeholders, model.objective,
                        model.sense, (blk,))
    assert "ArityMismatch" in codes(validate(bad))


def test_duplicate_binding_rejected(flow_fixture):
    model, _ = flow_fixture
    expr = number_sums(MultidimExpression(
        ("i",), Sum(0, ("i", "i"), "E", Term("x", ("i", "i"), 1.0))))
    bad = SymbolicModel(model.variables, model.constants,
                        model.index_placeholders, model.objective,
                        model.sense, (ConstraintBlock(expr, "=", "s"),))
    assert "DuplicateName" in codes(validate(bad))


def test_max_sense_normalized(flow_fixture):
    model, _ = flow_fixture
    mx = SymbolicModel(model.variables, model.constants,
                       model.index_placeholders, model.objective, "max",
                       model.constraints)
    mn = normalized_sense(mx)
    assert mn.sense == "min"
    term = mn.objective.root.child
    assert isinstance(term.coef, ParamCoef) and term.coef.scale == -1.0
    # negation distributes through add/sub without touching structure
    e = MultidimExpression((), Add(Term("x", (), 2.0),
                                   Sub(Term("x", (), 1.0), Term("x", (), 0.5))))
    n = negate(e)
    assert n.root.left.coef == -2.0
    assert n.root.right.left.coef == -1.0
    assert n.root.right.right.coef == -0.5


# -- JSON round trips --------------------------------------------------------

def test_round_trip_flow(flow_fixture):
    model, _ = flow_fixture
    doc = emit_ir(model)
    again = parse_ir(doc)
    assert again == model
    assert emit_ir(again) == doc


def test_emit_deterministic(flow_fixture):
    model, _ = flow_fixture
    clone = parse_ir(emit_ir(model))
    assert emit_ir(model) == emit_ir(clone)


def test_flow_document_shape(flow_fixture):
    model, _ = flow_fixture
    doc = json.loads(emit_ir(model))
    assert set(doc) == {"variables", "constants", "index_placeholders",
                        "expressions", "constraints", "bounds"}
    assert doc["variables"] == [{"name": "x", "rank": 2, "lower": 0.0,
                                 "integer": False, "domains": ["V", "V"]}]


def test_empty_model_round_trips():
    m = SymbolicModel(
        variables=(VariableDecl("x", 0),),
        constants=(),
        index_placeholders=(),
        objective=MultidimExpression((), Term("x", (), 1.0)),
        sense="min",
        constraints=(),
    )
    assert validate(m).ok
    doc = emit_ir(m)
    assert parse_ir(doc) == m
    assert json.loads(doc)["constraints"] == []


def test_round_trip_production_and_pmedian():
    prod, _, _ = gen_production_planning(4, 1, 4, 9)
    assert parse_ir(emit_ir(prod)) == prod
    pm = pmedian_symbolic(2)
    assert parse_ir(emit_ir(pm)) == pm


def test_production_fixture_has_three_blocks(fixtures_dir):
    model = parse_ir((fixtures_dir / "production.glir.json").read_text())
    assert len(model.constraints) == 3
    assert validate(model).ok


def test_fixture_round_trip_bytes(fixtures_dir):
    raw = (fixtures_dir / "flow.glir.json").read_text()
    assert emit_ir(parse_ir(raw)) == raw


def test_parse_errors_carry_paths():
    with pytest.raises(IrParseError) as ei:
        parse_ir("{}")
    assert "$." in str(ei.value)
    doc = json.loads(emit_ir(paper_flow_instance()[0]))
    del doc["constraints"]
    with pytest.raises(IrParseError) as ei:
        parse_ir(json.dumps(doc))
    assert "$.constraints" in str(ei.value)
    with pytest.raises(IrParseError):
        parse_ir("not json at all {")


def test_bad_graph_reference_rejected():
    doc = json.loads(emit_ir(paper_flow_instance()[0]))
    doc["constraints"][0]["expr"] = 99
    with pytest.raises(IrParseError) as ei:
        parse_ir(json.dumps(doc))
    assert "expr" in str(ei.value)


def test_bounds_round_trip():
    m = pmedian_symbolic(1)
    assert m.bounds == (BoundOverride("open", upper=1.0),
                        BoundOverride("y", upper=1.0))
    assert parse_ir(emit_ir(m)).bounds == m.bounds
