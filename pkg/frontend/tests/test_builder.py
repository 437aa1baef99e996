import json

import pytest

from lpbuild import BuildError, Data, Model, total
from lpbuild.examples import min_cost_flow_model, min_cost_flow_paper


def flow_parts():
    m = Model()
    i = m.global_index("i", "V")
    j = m.local_index("j", "V")
    E = m.index_set("E", 2)
    x = m.var("x", 2)
    return m, i, j, E, x


def test_emit_produces_six_components():
    ir, data = min_cost_flow_paper()
    doc = json.loads(ir)
    assert set(doc) == {"variables", "constants", "index_placeholders",
                        "expressions", "constraints", "bounds"}
    assert doc["expressions"]["objective"]["sense"] == "min"
    assert len(doc["constraints"]) == 1
    d = json.loads(data)
    assert d["index_sets"]["E"] == [[1, 2], [2, 4], [1, 3], [3, 4]]


def test_emit_deterministic():
    assert min_cost_flow_model().emit_ir() == min_cost_flow_model().emit_ir()


def test_sum_ids_are_preorder():
    ir = min_cost_flow_model().emit_ir()
    doc = json.loads(ir)
    graph = doc["expressions"]["constraints"][0]
    ids = [n["id"] for n in graph["nodes"] if n["op"] == "sum"]
    assert sorted(ids) == [1, 2]
    # the root is sub(left=sum1, right=sum2): pre-order gives the left
    # subtree the smaller id even though it serializes first
    root = graph["nodes"][graph["root"]]
    left_sum = graph["nodes"][root["left"]]
    right_sum = graph["nodes"][root["right"]]
    assert left_sum["id"] == 1 and right_sum["id"] == 2


def test_empty_model_emits_valid_document():
    m = Model()
    x = m.var("x", 0)
    m.minimize(x.term())
    doc = json.loads(m.emit_ir())
    assert doc["constraints"] == []
    assert doc["expressions"]["constraints"] == []


def test_wrong_rank_rejected_with_location():
    m, i, j, E, x = flow_parts()
    with pytest.raises(BuildError) as ei:
        x[i]
    assert "rank 2" in str(ei.value)
    assert "test_builder.py" in str(ei.value)


def test_arity_mismatch_rejected():
    m, i, j, E, x = flow_parts()
    with pytest.raises(BuildError) as ei:
        total((i,), E, x[i, j])
    assert "arity 2" in str(ei.value)


def test_foreign_handle_rejected():
    m1, i1, j1, E1, x1 = flow_parts()
    m2 = Model()
    k = m2.global_index("k", "V")
    with pytest.raises(BuildError):
        x1[k, k]


def test_double_coefficient_rejected():
    m, i, j, E, x = flow_parts()
    c = m.param("c", 2)
    d = m.param("d", 2)
    with pytest.raises(BuildError):
        d[i, j] * (c[i, j] * x[i, j])


def test_duplicate_name_rejected():
    m = Model()
    m.var("x", 1)
    with pytest.raises(BuildError):
        m.index_set("x", 2)


def test_rhs_arity_checked():
    m, i, j, E, x = flow_parts()
    s2 = m.param("s2", 2)
    with pytest.raises(BuildError):
        m.constrain("bad", total((i, j), E, x[i, j]), "=", s2, indexed=(i,))


def test_local_cannot_index_constraint():
    m, i, j, E, x = flow_parts()
    with pytest.raises(BuildError):
        m.constrain("bad", total((i, j), E, x[i, j]), "=", 0.0, indexed=(j,))


def test_scaling_and_negation():
    m, i, j, E, x = flow_parts()
    expr = total((i, j), E, 2 * x[i, j]) - total((i, j), E, -x[i, j])
    m.minimize(expr)
    doc = json.loads(m.emit_ir())
    terms = [n for n in doc["expressions"]["objective"]["graph"]["nodes"]
             if n["op"] == "term"]
    assert sorted(t["coef"] for t in terms) == [-1.0, 2.0]


def test_param_scale_folds_into_coefficient():
    m, i, j, E, x = flow_parts()
    c = m.param("c", 2)
    m.minimize(total((i, j), E, -2 * (c[i, j] * x[i, j])))
    doc = json.loads(m.emit_ir())
    term = [n for n in doc["expressions"]["objective"]["graph"]["nodes"]
            if n["op"] == "term"][0]
    assert term["coef"] == {"param": "c", "index": ["i", "j"], "scale": -2.0}


def test_data_mixed_arity_rejected():
    with pytest.raises(BuildError):
        Data().index_set("E", [(1, 2), (1, 2, 3)])
    with pytest.raises(BuildError):
        Data().table("c", {(1, 2): 1.0, (1,): 2.0})
