"""Rule simplification, merging, and the whole-policy improvement phase."""

import dataclasses

import numpy as np
import pytest

import oracle
from rebacminer import improve
from rebacminer import model as m
from rebacminer import search as se
from rebacminer.bitmaps import PairContext
from rebacminer.features import FeatureLimits
from rebacminer.model import (
    ACLPolicy,
    AtomicCondition,
    AtomicConstraint,
    Rule,
    policy_meaning,
    rule_meaning,
)

FS = frozenset


@pytest.fixture(scope="module")
def emr_ctx(emr_om, emr_acl):
    return PairContext(emr_om, "Physician", "Consultation", emr_acl.au)


# -- simplify -----------------------------------------------------------------

def test_simplify_rewrites_set_equality(emr_om, emr_acl):
    p1, p2 = ("consultations", "records"), ("patient", "registrations")
    rule = Rule("Physician", FS(), "Consultation", FS(),
                FS({AtomicConstraint(p1, "supseteq", p2),
                    AtomicConstraint(p1, "subseteq", p2)}),
                FS({"view"}))
    ctx = PairContext(emr_om, "Physician", "Consultation",
                      rule_meaning(emr_om, rule))
    out = improve.simplify_rule(rule, ctx)
    assert AtomicConstraint(p1, "seteq", p2) in out.constraint
    assert rule.wsc - out.wsc == len(p1) + len(p2)
    assert rule_meaning(emr_om, out) == rule_meaning(emr_om, rule)


def test_simplify_drops_implied_atom(emr_om, emr_rule, emr_ctx):
    # doubling a constraint with a strictly weaker atom changes nothing
    weaker = AtomicCondition(("isTrainee",), "in", FS({False}))
    redundant = dataclasses.replace(
        emr_rule,
        subject_condition=emr_rule.subject_condition
        | {AtomicCondition(("affiliation", "id"), "in", FS({"hosp1", "hosp2"}))})
    out = improve.simplify_rule(redundant, emr_ctx)
    assert out.wsc <= emr_rule.wsc
    assert rule_meaning(emr_om, out) == rule_meaning(emr_om, redundant)
    assert weaker in out.subject_condition


def test_simplify_is_identity_on_minimal(emr_om, emr_rule, emr_ctx):
    first = improve.simplify_rule(emr_rule, emr_ctx)
    assert improve.simplify_rule(first, emr_ctx) == first


# -- merge --------------------------------------------------------------------

def test_merge_unions_actions(emr_cm, emr_om, emr_rule):
    both = dataclasses.replace(emr_rule, actions=FS({"view", "edit"}))
    au = rule_meaning(emr_om, both)
    ctx = PairContext(emr_om, "Physician", "Consultation", au)
    r1 = dataclasses.replace(emr_rule, actions=FS({"view"}))
    r2 = dataclasses.replace(emr_rule, actions=FS({"edit"}))
    merged = improve.merge_rules(r1, r2, ctx, mcse=5)
    assert merged == both


def test_merge_unions_in_constants(uni_cm, uni_om):
    def with_dept(d):
        return Rule("Student",
                    FS({AtomicCondition(("dept", "id"), "in", FS({d}))}),
                    "Course", FS(), FS(), FS({"enroll"}))
    r1, r2 = with_dept("CompSci"), with_dept("Math")
    au = policy_meaning(uni_om, [r1, r2])
    ctx = PairContext(uni_om, "Student", "Course", au)
    merged = improve.merge_rules(r1, r2, ctx, mcse=5)
    assert merged is not None
    cond = next(iter(merged.subject_condition))
    assert cond.val == FS({"CompSci", "Math"})
    assert rule_meaning(uni_om, merged) == au


def test_merge_rejects_over_grant(uni_cm, uni_om):
    def with_dept(d):
        return Rule("Student",
                    FS({AtomicCondition(("dept", "id"), "in", FS({d}))}),
                    "Course", FS(), FS(), FS({"enroll"}))
    r1, r2 = with_dept("CompSci"), with_dept("Math")
    union = policy_meaning(uni_om, [r1, r2])
    smaller = union - {next(iter(sorted(union, key=m.SRATuple.sort_key)))}
    ctx = PairContext(uni_om, "Student", "Course", frozenset(smaller))
    assert improve.merge_rules(r1, r2, ctx, mcse=5) is None


def test_merge_respects_constant_set_cap(uni_cm, uni_om):
    def with_depts(ds):
        return Rule("Student",
                    FS({AtomicCondition(("dept", "id"), "in", FS(ds))}),
                    "Course", FS(), FS(), FS({"enroll"}))
    r1, r2 = with_depts({"CompSci"}), with_depts({"Math"})
    au = policy_meaning(uni_om, [r1, r2])
    ctx = PairContext(uni_om, "Student", "Course", au)
    assert improve.merge_rules(r1, r2, ctx, mcse=1) is None


def test_merge_requires_same_types(emr_rule):
    other = Rule("Consultation", FS(), "Consultation", FS(), FS(), FS({"view"}))
    assert improve.merge_rules(emr_rule, other, None, mcse=5) is None


# -- improvement phase ----------------------------------------------------------

def _grammars_for(acl, rules):
    out = {}
    for r in rules:
        key = (r.subject_type, r.resource_type)
        if key not in out:
            out[key] = se.specialize_grammar(
                acl.cm, acl.om, FeatureLimits(), key[0], key[1],
                sorted({a for rr in rules for a in rr.actions}))
    return out


def test_improvement_drops_atom_covered_elsewhere(emr_cm, emr_om, emr_acl, emr_rule):
    padded = dataclasses.replace(
        emr_rule,
        resource_condition=FS({AtomicCondition(("physician", "isTrainee"),
                                               "in", FS({False}))}))
    assert rule_meaning(emr_om, padded) == rule_meaning(emr_om, emr_rule)
    rules = [padded]
    cfg = se.SearchConfig(population_size=20, generations=5, improvement_trials=10)
    out = improve.improvement_phase(rules, emr_acl, cfg,
                                    _grammars_for(emr_acl, rules),
                                    np.random.default_rng(0))
    assert sum(r.wsc for r in out) < padded.wsc
    assert policy_meaning(emr_om, out) == emr_acl.au


def test_improvement_fixpoint_on_minimal(uni_cm, uni_om):
    rule = Rule("Student", FS(), "Course", FS(),
                FS({AtomicConstraint(("dept",), "equal", ("dept",))}),
                FS({"enroll"}))
    acl = ACLPolicy(uni_cm, uni_om, FS({"enroll"}), rule_meaning(uni_om, rule))
    cfg = se.SearchConfig(population_size=20, generations=5, improvement_trials=10)
    out = improve.improvement_phase([rule], acl, cfg, _grammars_for(acl, [rule]),
                                    np.random.default_rng(1))
    assert out == [rule]


def test_improvement_preserves_consistency(emr_cm, emr_om, emr_acl, emr_rule):
    # split the planted rule into two narrower rules plus an id rule
    id_rule = se.id_fallback_rule(emr_om, m.SRATuple("doc1", "cons1", "view"))
    narrow = dataclasses.replace(
        emr_rule,
        subject_condition=emr_rule.subject_condition
        | {AtomicCondition(("affiliation", "id"), "in", FS({"hosp1"}))})
    rules = [id_rule, narrow]
    assert policy_meaning(emr_om, rules) == emr_acl.au
    cfg = se.SearchConfig(population_size=40, generations=10, improvement_trials=25)
    out = improve.improvement_phase(rules, emr_acl, cfg,
                                    _grammars_for(emr_acl, rules),
                                    np.random.default_rng(2))
    assert policy_meaning(emr_om, out) == emr_acl.au
    got = oracle.policy_tuples(emr_om, out)
    assert got == {(t.subject, t.resource, t.action) for t in emr_acl.au}
    assert sum(r.wsc for r in out) <= sum(r.wsc for r in rules)


def test_improvement_merges_action_split(emr_cm, emr_om, emr_rule):
    both = dataclasses.replace(emr_rule, actions=FS({"view", "edit"}))
    acl = ACLPolicy(emr_cm, emr_om, FS({"view", "edit"}),
                    rule_meaning(emr_om, both))
    r1 = dataclasses.replace(emr_rule, actions=FS({"view"}))
    r2 = dataclasses.replace(emr_rule, actions=FS({"edit"}))
    cfg = se.SearchConfig(population_size=20, generations=5, improvement_trials=10)
    out = improve.improvement_phase([r1, r2], acl, cfg,
                                    _grammars_for(acl, [r1, r2]),
                                    np.random.default_rng(3))
    assert len(out) == 1 and out[0].actions == FS({"view", "edit"})


def test_drop_redundant(emr_cm, emr_om, emr_acl, emr_rule):
    id_rule = se.id_fallback_rule(emr_om, m.SRATuple("doc1", "cons1", "view"))
    pol = improve.PolicyEvaluator(emr_acl)
    out = improve._drop_redundant([emr_rule, id_rule], pol)
    assert out == [emr_rule]
