"""Candidate-feature enumeration, labeled feature vectors, and pruning.

A feature is a subject atomic condition, resource atomic condition, or
atomic constraint within the configured path-length limits.  Vectors are
built per (subjectType, resourceType, action) triple, one row per typed
subject/resource pair, labeled by membership in AU.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from rebacminer import model as m
from rebacminer.model import (
    BOOLEAN,
    MANY,
    AtomicCondition,
    AtomicConstraint,
    ClassModel,
    ObjectModel,
)

SUBJECT_CONDITION = "subjectCondition"
RESOURCE_CONDITION = "resourceCondition"
CONSTRAINT = "constraint"
_KIND_ORDER = {SUBJECT_CONDITION: 0, RESOURCE_CONDITION: 1, CONSTRAINT: 2}


@dataclass(frozen=True)
class FeatureLimits:
    mspl: int = 3  # max subject-condition path length
    mrpl: int = 3  # max resource-condition path length
    sped: int = 0  # extra subject-path allowance in constraints
    rped: int = 0  # extra resource-path allowance in constraints
    mtpl: int = 4  # max total constraint path length
    mcse: int = 5  # max constant-set cardinality in conditions

    def __post_init__(self):
        for name in ("mspl", "mrpl", "sped", "rped", "mtpl", "mcse"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class Feature:
    kind: str
    payload: object  # AtomicCondition or AtomicConstraint
    wsc: int

    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.wsc, self.payload.sort_key())


@dataclass(frozen=True)
class TypedTriple:
    subject_type: str
    resource_type: str
    action: str

    def sort_key(self):
        return (self.subject_type, self.resource_type, self.action)


@dataclass
class LabeledFeatureVector:
    subject: str
    resource: str
    bits: np.ndarray  # uint8, one entry per feature
    label: int


def condition_feature(cond: AtomicCondition, kind: str) -> Feature:
    return Feature(kind, cond, cond.wsc)


def constraint_feature(con: AtomicConstraint) -> Feature:
    return Feature(CONSTRAINT, con, con.wsc)


def enumerate_paths(cm: ClassModel, start: str, max_len: int):
    """All type-correct non-empty paths from ``start`` up to ``max_len``,
    yielding (path, leaf type, multiplicity)."""
    frontier = [((), start)]
    for _ in range(max_len):
        nxt = []
        for path, cls in frontier:
            if cls in (BOOLEAN, m.STRING):
                continue
            decl = cm.class_decl(cls)
            fields = [decl.field("id")] + list(decl.fields)
            for fd in fields:
                p = path + (fd.name,)
                _, mult = cm.resolve_path(start, p)
                yield p, fd.type, mult
                nxt.append((p, fd.type))
        frontier = nxt


def _observed_condition_constants(om: ObjectModel, cls: str, path, mult: str):
    """Distinct values that ``path`` takes over instances of ``cls``."""
    vals = set()
    for oid in om.instances(cls):
        v = m.nav(om, oid, path)
        if v is None:
            continue
        if isinstance(v, frozenset):
            vals |= v
        else:
            vals.add(v)
    return vals


def _enumerate_conditions(cm: ClassModel, om: ObjectModel, cls: str,
                          max_len: int, kind: str):
    for path, leaf, mult in enumerate_paths(cm, cls, max_len):
        if leaf == BOOLEAN:
            # both forms, regardless of observed values; a many-path to a
            # Boolean leaf needs the set-membership form
            op, wrap = ((m.OP_CONTAINS, lambda v: v) if mult == MANY
                        else (m.OP_IN, lambda v: frozenset({v})))
            yield condition_feature(AtomicCondition(path, op, wrap(True)), kind)
            yield condition_feature(AtomicCondition(path, op, wrap(False)), kind)
            continue
        constants = _observed_condition_constants(om, cls, path, mult)
        if mult == MANY:
            for v in constants:
                yield condition_feature(AtomicCondition(path, m.OP_CONTAINS, v), kind)
        else:
            for v in constants:
                yield condition_feature(
                    AtomicCondition(path, m.OP_IN, frozenset({v})), kind)


def _constraint_paths(cm: ClassModel, start: str, max_len: int):
    """Constraint-side paths: the empty path plus all paths up to max_len."""
    yield (), start, m.ONE
    yield from enumerate_paths(cm, start, max_len)


def _enumerate_constraints(cm: ClassModel, cs: str, cr: str, limits: FeatureLimits):
    s_paths = list(_constraint_paths(cm, cs, limits.mspl + limits.sped))
    r_paths = list(_constraint_paths(cm, cr, limits.mrpl + limits.rped))
    for p1, t1, m1 in s_paths:
        for p2, t2, m2 in r_paths:
            if t1 != t2:
                continue
            if len(p1) + len(p2) > limits.mtpl:
                continue
            single1, single2 = m1 != MANY, m2 != MANY
            if single1 and single2:
                ops = (m.OP_EQUAL,)
            elif single1:
                ops = (m.OP_IN,)
            elif single2:
                ops = (m.OP_CONTAINS,)
            else:
                ops = m.SET_OPS
            for op in ops:
                yield constraint_feature(AtomicConstraint(p1, op, p2))


def enumerate_features(cm: ClassModel, om: ObjectModel, limits: FeatureLimits,
                       cs: str, cr: str,
                       allowed_constraint_ops: Optional[frozenset] = None) -> list[Feature]:
    """All candidate features for the (cs, cr) type pair, deterministically
    ordered by (kind, WSC, structure).

    ``allowed_constraint_ops`` restricts constraint operators (used to
    disable the set-comparison operators for ablation runs).
    """
    cm.class_decl(cs)
    cm.class_decl(cr)
    feats = set()
    feats.update(_enumerate_conditions(cm, om, cs, limits.mspl, SUBJECT_CONDITION))
    feats.update(_enumerate_conditions(cm, om, cr, limits.mrpl, RESOURCE_CONDITION))
    for f in _enumerate_constraints(cm, cs, cr, limits):
        if allowed_constraint_ops is not None and f.payload.op not in allowed_constraint_ops:
            continue
        feats.add(f)
    return sorted(feats, key=Feature.sort_key)


def evaluate_feature(om: ObjectModel, feat: Feature, s: str, r: str) -> bool:
    if feat.kind == SUBJECT_CONDITION:
        return m.satisfies_condition(om, s, [feat.payload])
    if feat.kind == RESOURCE_CONDITION:
        return m.satisfies_condition(om, r, [feat.payload])
    return m.satisfies_constraint(om, s, r, [feat.payload])


def build_vectors(om: ObjectModel, au: frozenset, triple: TypedTriple,
                  features: list[Feature]) -> list[LabeledFeatureVector]:
    """One labeled vector per (subject, resource) pair of the triple's types,
    in (subject id, resource id) order."""
    subjects = om.instances(triple.subject_type)
    resources = om.instances(triple.resource_type)
    positives = {(t.subject, t.resource) for t in au if t.action == triple.action}

    # conditions depend on a single object: evaluate once per object
    s_cols = {}
    r_cols = {}
    for j, f in enumerate(features):
        if f.kind == SUBJECT_CONDITION:
            s_cols[j] = {s: m.satisfies_condition(om, s, [f.payload]) for s in subjects}
        elif f.kind == RESOURCE_CONDITION:
            r_cols[j] = {r: m.satisfies_condition(om, r, [f.payload]) for r in resources}

    vectors = []
    for s in subjects:
        for r in resources:
            bits = np.zeros(len(features), dtype=np.uint8)
            for j, f in enumerate(features):
                if f.kind == SUBJECT_CONDITION:
                    bits[j] = s_cols[j][s]
                elif f.kind == RESOURCE_CONDITION:
                    bits[j] = r_cols[j][r]
                else:
                    bits[j] = m.satisfies_constraint(om, s, r, [f.payload])
            label = 1 if (s, r) in positives else 0
            vectors.append(LabeledFeatureVector(s, r, bits, label))
    return vectors


def prune_constant_features(vectors: list[LabeledFeatureVector],
                            features: list[Feature]):
    """Drop features whose truth value is identical across all vectors."""
    if not vectors:
        raise ValueError("need at least one vector")
    mat = np.stack([v.bits for v in vectors])
    keep = [j for j in range(len(features)) if mat[0:, j].min() != mat[0:, j].max()]
    return _project(vectors, features, keep)


def prune_equivalent_features(vectors: list[LabeledFeatureVector],
                              features: list[Feature]):
    """Among features with identical truth values on all positive-labeled
    vectors, keep only those of minimal WSC.

    Returns (kept features, projected vectors, dropped equivalence classes).
    """
    pos = [v for v in vectors if v.label == 1]
    if not pos:
        return features, vectors, []
    mat = np.stack([v.bits for v in pos])
    groups: dict[bytes, list[int]] = {}
    for j in range(len(features)):
        groups.setdefault(mat[:, j].tobytes(), []).append(j)
    keep = []
    dropped = []
    for idxs in groups.values():
        best = min(features[j].wsc for j in idxs)
        kept = [j for j in idxs if features[j].wsc == best]
        rest = [j for j in idxs if features[j].wsc != best]
        keep.extend(kept)
        if rest:
            dropped.append([features[j] for j in idxs])
    keep.sort()
    feats, vecs = _project(vectors, features, keep)
    return feats, vecs, dropped


def _project(vectors, features, keep):
    idx = np.asarray(keep, dtype=np.intp)
    new_feats = [features[j] for j in keep]
    new_vecs = [
        LabeledFeatureVector(v.subject, v.resource, v.bits[idx], v.label)
        for v in vectors
    ]
    return new_feats, new_vecs


def triples_of(au: Iterable[m.SRATuple], om: ObjectModel) -> list[TypedTriple]:
    """The distinct ⟨subject type, resource type, action⟩ triples in AU."""
    out = {
        TypedTriple(om.type_of(t.subject), om.type_of(t.resource), t.action)
        for t in au
    }
    return sorted(out, key=TypedTriple.sort_key)
