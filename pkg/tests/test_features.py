"""Feature enumeration, vector construction, and pruning."""

import numpy as np
import pytest

from rebacminer import features as fs
from rebacminer import model as m
from rebacminer.features import (
    CONSTRAINT,
    RESOURCE_CONDITION,
    SUBJECT_CONDITION,
    FeatureLimits,
    TypedTriple,
)
from rebacminer.model import (
    AtomicCondition,
    AtomicConstraint,
    ClassDecl,
    ClassModel,
    FieldDecl,
    Object,
    ObjectModel,
    SRATuple,
)

FS = frozenset


@pytest.fixture(scope="module")
def toy():
    cm = ClassModel([
        ClassDecl("T"),
        ClassDecl("S", (FieldDecl("flag", "Boolean"),
                        FieldDecl("tags", "T", "many"))),
        ClassDecl("R", (FieldDecl("tags", "T", "many"),
                        FieldDecl("owner", "S"))),
    ])
    om = ObjectModel(cm, [
        Object("t1", "T"), Object("t2", "T"),
        Object("s1", "S", {"flag": True, "tags": FS({"t1"})}),
        Object("s2", "S", {"flag": False, "tags": FS({"t1", "t2"})}),
        Object("r1", "R", {"tags": FS({"t1"}), "owner": "s1"}),
        Object("r2", "R", {"tags": FS({"t2"}), "owner": "s2"}),
    ])
    return cm, om


def test_boolean_field_yields_both_forms(toy):
    cm, om = toy
    feats = fs.enumerate_features(cm, om, FeatureLimits(mspl=1, mrpl=1, mtpl=0), "S", "R")
    bools = [f.payload for f in feats
             if f.kind == SUBJECT_CONDITION and f.payload.path == ("flag",)]
    assert set(bools) == {
        AtomicCondition(("flag",), "in", FS({True})),
        AtomicCondition(("flag",), "in", FS({False})),
    }


def test_set_operators_require_many_on_both_sides(toy):
    cm, om = toy
    feats = fs.enumerate_features(cm, om, FeatureLimits(), "S", "R")
    for f in feats:
        if f.kind != CONSTRAINT:
            continue
        con = f.payload
        _, m1 = cm.resolve_path("S", con.subject_path)
        _, m2 = cm.resolve_path("R", con.resource_path)
        if con.op in m.SET_OPS:
            assert m1 == m.MANY and m2 == m.MANY
        if con.op == m.OP_EQUAL:
            assert m1 != m.MANY and m2 != m.MANY
    # the tags/tags pair is many/many, so all three set operators appear
    ops = {f.payload.op for f in feats if f.kind == CONSTRAINT
           and f.payload.subject_path == ("tags",)
           and f.payload.resource_path == ("tags",)}
    assert ops == set(m.SET_OPS)


def test_empty_constraint_paths_allowed(toy):
    cm, om = toy
    feats = fs.enumerate_features(cm, om, FeatureLimits(), "S", "R")
    assert AtomicConstraint((), "equal", ("owner",)) in {
        f.payload for f in feats if f.kind == CONSTRAINT}


def test_condition_constants_come_from_object_model(toy):
    cm, om = toy
    feats = fs.enumerate_features(cm, om, FeatureLimits(), "S", "R")
    for f in feats:
        if f.kind == CONSTRAINT or f.payload.path[-1] == "flag":
            continue
        cls = "S" if f.kind == SUBJECT_CONDITION else "R"
        observed = set()
        for oid in om.instances(cls):
            v = m.nav(om, oid, f.payload.path)
            observed |= v if isinstance(v, frozenset) else {v}
        vals = (f.payload.val if isinstance(f.payload.val, frozenset)
                else {f.payload.val})
        assert vals <= observed


def test_enumeration_respects_limits(emr_cm, emr_om):
    limits = FeatureLimits(mspl=2, mrpl=1, mtpl=2)
    feats = fs.enumerate_features(emr_cm, emr_om, limits, "Physician", "Consultation")
    for f in feats:
        if f.kind == SUBJECT_CONDITION:
            assert 1 <= len(f.payload.path) <= limits.mspl
        elif f.kind == RESOURCE_CONDITION:
            assert 1 <= len(f.payload.path) <= limits.mrpl
        else:
            assert len(f.payload.subject_path) <= limits.mspl + limits.sped
            assert len(f.payload.resource_path) <= limits.mrpl + limits.rped
            assert (len(f.payload.subject_path)
                    + len(f.payload.resource_path)) <= limits.mtpl


def test_enumeration_deterministic(emr_cm, emr_om):
    a = fs.enumerate_features(emr_cm, emr_om, FeatureLimits(), "Physician", "Consultation")
    b = fs.enumerate_features(emr_cm, emr_om, FeatureLimits(), "Physician", "Consultation")
    assert a == b


def test_allowed_constraint_ops_filter(emr_cm, emr_om):
    allowed = frozenset({"equal", "in", "contains", "supseteq"})
    feats = fs.enumerate_features(emr_cm, emr_om, FeatureLimits(),
                                  "Physician", "Consultation",
                                  allowed_constraint_ops=allowed)
    assert all(f.payload.op in allowed for f in feats if f.kind == CONSTRAINT)


def test_unknown_class_rejected(emr_cm, emr_om):
    with pytest.raises(m.ModelError):
        fs.enumerate_features(emr_cm, emr_om, FeatureLimits(), "Nope", "Consultation")


def test_evaluate_feature_agrees_with_semantics(emr_cm, emr_om):
    feats = fs.enumerate_features(emr_cm, emr_om, FeatureLimits(mtpl=2),
                                  "Physician", "Consultation")
    for f in feats[:80]:
        for s in emr_om.instances("Physician"):
            for r in emr_om.instances("Consultation"):
                got = fs.evaluate_feature(emr_om, f, s, r)
                if f.kind == SUBJECT_CONDITION:
                    want = m.satisfies_condition(emr_om, s, [f.payload])
                elif f.kind == RESOURCE_CONDITION:
                    want = m.satisfies_condition(emr_om, r, [f.payload])
                else:
                    want = m.satisfies_constraint(emr_om, s, r, [f.payload])
                assert got == want


# -- vectors ------------------------------------------------------------------

def _toy_triple():
    return TypedTriple("S", "R", "use")


def test_build_vectors_shape_and_labels(toy):
    cm, om = toy
    feats = fs.enumerate_features(cm, om, FeatureLimits(), "S", "R")
    au = frozenset({SRATuple("s1", "r1", "use"), SRATuple("s2", "r2", "use")})
    vecs = fs.build_vectors(om, au, _toy_triple(), feats)
    assert len(vecs) == 4  # 2 subjects x 2 resources
    assert [(v.subject, v.resource) for v in vecs] == [
        ("s1", "r1"), ("s1", "r2"), ("s2", "r1"), ("s2", "r2")]
    assert sum(v.label for v in vecs) == 2
    for v in vecs:
        assert len(v.bits) == len(feats)


def test_build_vectors_no_resources(toy):
    cm, om = toy
    cm2 = ClassModel(list(cm.classes.values()) + [ClassDecl("Empty")])
    om2 = ObjectModel(cm2, list(om.objects.values()))
    vecs = fs.build_vectors(om2, frozenset(), TypedTriple("S", "Empty", "use"), [])
    assert vecs == []


def test_vector_bits_match_feature_evaluation(toy):
    cm, om = toy
    feats = fs.enumerate_features(cm, om, FeatureLimits(), "S", "R")
    vecs = fs.build_vectors(om, frozenset(), _toy_triple(), feats)
    for v in vecs:
        for j, f in enumerate(feats):
            assert bool(v.bits[j]) == fs.evaluate_feature(om, f, v.subject, v.resource)


# -- pruning ------------------------------------------------------------------

def _mkvecs(cols, labels):
    """cols: list of per-feature bit columns; returns vectors."""
    mat = np.array(cols, dtype=np.uint8).T
    return [fs.LabeledFeatureVector(f"s{i}", "r", mat[i], int(l))
            for i, l in enumerate(labels)]


def _mkfeats(wscs):
    out = []
    for j, w in enumerate(wscs):
        cond = AtomicCondition((f"f{j}",) * max(1, w - 1), "in", FS({f"v{j}"}))
        out.append(fs.Feature(SUBJECT_CONDITION, cond, w))
    return out


def test_prune_constant_single_vector_drops_all():
    feats = _mkfeats([2, 2, 2])
    vecs = _mkvecs([[1], [0], [1]], [1])
    kept, _ = fs.prune_constant_features(vecs, feats)
    assert kept == []


def test_prune_constant_keeps_varying_columns():
    feats = _mkfeats([2, 2, 2])
    vecs = _mkvecs([[1, 1, 1], [0, 1, 0], [0, 0, 0]], [1, 0, 0])
    kept, newvecs = fs.prune_constant_features(vecs, feats)
    assert kept == [feats[1]]
    assert [int(v.bits[0]) for v in newvecs] == [0, 1, 0]


def test_prune_equivalent_drops_higher_wsc():
    feats = _mkfeats([2, 4])
    # identical on the positive vector, different on a negative
    vecs = _mkvecs([[1, 0, 1], [1, 1, 0]], [1, 0, 0])
    kept, _, dropped = fs.prune_equivalent_features(vecs, feats)
    assert kept == [feats[0]]
    assert dropped == [[feats[0], feats[1]]]


def test_prune_equivalent_keeps_all_minimal_ties():
    feats = _mkfeats([2, 2, 5])
    vecs = _mkvecs([[1, 0], [1, 1], [1, 0]], [1, 0])
    kept, _, _ = fs.prune_equivalent_features(vecs, feats)
    assert feats[0] in kept and feats[2] not in kept


def test_prune_equivalent_noop_without_positives():
    feats = _mkfeats([2, 4])
    vecs = _mkvecs([[1, 0], [1, 0]], [0, 0])
    kept, newvecs, dropped = fs.prune_equivalent_features(vecs, feats)
    assert kept == feats and dropped == []


def test_prune_never_merges_distinct_positive_columns():
    feats = _mkfeats([2, 2, 3])
    vecs = _mkvecs([[1, 0, 1], [0, 1, 1], [1, 1, 0]], [1, 1, 0])
    kept, _, _ = fs.prune_equivalent_features(vecs, feats)
    # columns differ on positives pairwise, so nothing may be dropped
    assert kept == feats


def test_triples_of(emr_om, emr_acl):
    triples = fs.triples_of(emr_acl.au, emr_om)
    assert triples == [TypedTriple("Physician", "Consultation", "view")]


def test_feature_limits_validation():
    with pytest.raises(ValueError):
        FeatureLimits(mspl=-1)
