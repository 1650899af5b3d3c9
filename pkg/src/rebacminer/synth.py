"""Synthetic benchmark generation: a fixed class model, seeded pseudorandom
object models, and seeded pseudorandom rule sets, plus the induced ACL
policy whose AU is the rules' meaning.

The class model has five subject classes Sub_1..Sub_5, five resource
classes Res_1..Res_5, and helper classes DirectSingle, Mul2, and
MulSingle_1..MulSingle_2.  Every resource class carries two associations
to every subject class (subOne_i with multiplicity one, subMany_i with
multiplicity many).  Together these support 3 condition types and 10
constraint types, covering every operator including subseteq and
set-equality; docs/synthetic-model.md in the repository describes the
full field list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from rebacminer import model as m
from rebacminer.bitmaps import PairContext
from rebacminer.features import enumerate_paths
from rebacminer.improve import simplify_rule
from rebacminer.model import (
    ACLPolicy,
    AtomicCondition,
    AtomicConstraint,
    ClassDecl,
    ClassModel,
    FieldDecl,
    Object,
    ObjectModel,
    Rule,
)

ACTIONS = ("act1", "act2", "act3", "act4", "act5")

N_SUBJECT_CLASSES = 5
N_RESOURCE_CLASSES = 5
HELPER_INSTANCES = 3

RULES_PER_PAIR_CHOICES = (1, 2, 3, 4)
RULES_PER_PAIR_PROBS = (0.82, 0.12, 0.03, 0.03)
FEATURE_COUNT_CHOICES = (1, 2, 3)
FEATURE_COUNT_PROBS = (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class SynthConfig:
    n_sub: int = 10  # instances per subject class
    seed: int = 0
    n_r: int = 20  # rules per policy

    def __post_init__(self):
        if self.n_sub < 1:
            raise ValueError("n_sub must be >= 1")
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")


@dataclass
class GeneratedBundle:
    cm: ClassModel
    om: ObjectModel
    rules: frozenset
    acl: ACLPolicy


def gen_class_model() -> ClassModel:
    classes = [
        ClassDecl("DirectSingle"),
        ClassDecl("MulSingle_1", (FieldDecl("directSingle", "DirectSingle"),)),
        ClassDecl("MulSingle_2", (FieldDecl("directSingle", "DirectSingle"),)),
        ClassDecl("Mul2", (
            FieldDecl("mulSingle1", "MulSingle_1", m.MANY),
            FieldDecl("mulSingle2", "MulSingle_2", m.MANY),
        )),
    ]
    for i in range(1, N_SUBJECT_CLASSES + 1):
        classes.append(ClassDecl(f"Sub_{i}", (
            FieldDecl("boolF", m.BOOLEAN),
            FieldDecl("directSingle", "DirectSingle"),
            FieldDecl("mulSingle1", "MulSingle_1"),
            FieldDecl("mul2", "Mul2", m.MANY),
        )))
    for j in range(1, N_RESOURCE_CLASSES + 1):
        fields = [
            FieldDecl("boolF", m.BOOLEAN),
            FieldDecl("directSingle", "DirectSingle"),
            FieldDecl("mul2", "Mul2", m.MANY),
        ]
        for i in range(1, N_SUBJECT_CLASSES + 1):
            fields.append(FieldDecl(f"subOne_{i}", f"Sub_{i}"))
            fields.append(FieldDecl(f"subMany_{i}", f"Sub_{i}", m.MANY))
        classes.append(ClassDecl(f"Res_{j}", tuple(fields)))
    return ClassModel(classes)


def subject_classes() -> list[str]:
    return [f"Sub_{i}" for i in range(1, N_SUBJECT_CLASSES + 1)]


def resource_classes() -> list[str]:
    return [f"Res_{j}" for j in range(1, N_RESOURCE_CLASSES + 1)]


def gen_object_model(cm: ClassModel, cfg: SynthConfig) -> ObjectModel:
    """N_sub instances per subject class, 5*N_sub per resource class, and a
    fixed 3 per helper class; fields filled pseudorandomly."""
    rng = np.random.default_rng([cfg.seed, 0x6F626A])
    counts = {"DirectSingle": HELPER_INSTANCES, "MulSingle_1": HELPER_INSTANCES,
              "MulSingle_2": HELPER_INSTANCES, "Mul2": HELPER_INSTANCES}
    for cls in subject_classes():
        counts[cls] = cfg.n_sub
    for cls in resource_classes():
        counts[cls] = N_SUBJECT_CLASSES * cfg.n_sub

    ids = {cls: [f"{cls.lower()}-{k}" for k in range(n)] for cls, n in counts.items()}

    def pick_one(cls: str) -> str:
        pool = ids[cls]
        return pool[int(rng.integers(len(pool)))]

    def pick_many(cls: str) -> frozenset:
        pool = ids[cls]
        size = int(rng.choice([1, max(1, len(pool) - 1), len(pool)]))
        chosen = rng.choice(len(pool), size=size, replace=False)
        return frozenset(pool[k] for k in sorted(chosen))

    objects = []
    for cls in sorted(counts):
        decl = cm.class_decl(cls)
        for oid in ids[cls]:
            values = {}
            for f in decl.fields:
                if f.type == m.BOOLEAN:
                    values[f.name] = bool(rng.integers(2))
                elif f.multiplicity == m.MANY:
                    values[f.name] = pick_many(f.type)
                else:
                    values[f.name] = pick_one(f.type)
            objects.append(Object(oid, cls, values))
    return ObjectModel(cm, objects)


# -- rule generation ----------------------------------------------------------

def default_type_weights() -> dict[str, float]:
    raw = json.loads(
        resources.files("rebacminer.data").joinpath("synth_type_freq.json").read_text())
    return {k: float(v) for k, v in raw.items() if not k.startswith("_")}


def draw_rules_per_pair(rng: np.random.Generator) -> int:
    return int(rng.choice(RULES_PER_PAIR_CHOICES, p=RULES_PER_PAIR_PROBS))


def draw_feature_count(rng: np.random.Generator) -> int:
    return int(rng.choice(FEATURE_COUNT_CHOICES, p=FEATURE_COUNT_PROBS))


def _observed_values(om: ObjectModel, cls: str, path) -> list:
    vals = set()
    for oid in om.instances(cls):
        v = m.nav(om, oid, path)
        if isinstance(v, frozenset):
            vals |= v
        elif v is not None:
            vals.add(v)
    return sorted(vals, key=lambda x: (isinstance(x, str), str(x)))


def _single_ref_paths(cm: ClassModel, cls: str):
    """Length-2 single-multiplicity reference paths from ``cls``."""
    return [p for p, leaf, mult in enumerate_paths(cm, cls, 2)
            if len(p) == 2 and mult != m.MANY and leaf not in (m.BOOLEAN, m.STRING)]


def _many_ref_paths(cm: ClassModel, cls: str):
    return [p for p, leaf, mult in enumerate_paths(cm, cls, 2)
            if mult == m.MANY and leaf not in (m.BOOLEAN, m.STRING)]


def _realize(type_name: str, cm: ClassModel, om: ObjectModel, sub_idx: int,
             sub_cls: str, res_cls: str, rng: np.random.Generator):
    """Concrete atom of the given condition/constraint type, or None when
    the type has no realizable atom; returns (part, atom) with part in
    {'sc', 'rc', 'con'}."""
    i = sub_idx
    if type_name == "cond_bool":
        side = ("sc", "rc")[int(rng.integers(2))]
        val = bool(rng.integers(2))
        return side, AtomicCondition(("boolF",), m.OP_IN, frozenset({val}))
    if type_name == "cond_ref_in":
        side, cls = (("sc", sub_cls), ("rc", res_cls))[int(rng.integers(2))]
        paths = _single_ref_paths(cm, cls)
        if not paths:
            return None
        path = paths[int(rng.integers(len(paths)))]
        vals = _observed_values(om, cls, path)
        if not vals:
            return None
        v = vals[int(rng.integers(len(vals)))]
        return side, AtomicCondition(path, m.OP_IN, frozenset({v}))
    if type_name == "cond_ref_contains":
        side, cls = (("sc", sub_cls), ("rc", res_cls))[int(rng.integers(2))]
        paths = _many_ref_paths(cm, cls)
        if not paths:
            return None
        path = paths[int(rng.integers(len(paths)))]
        vals = _observed_values(om, cls, path)
        if not vals:
            return None
        v = vals[int(rng.integers(len(vals)))]
        return side, AtomicCondition(path, m.OP_CONTAINS, v)

    constraints = {
        "con_sub_equal_subone": ((), m.OP_EQUAL, (f"subOne_{i}",)),
        "con_sub_in_submany": ((), m.OP_IN, (f"subMany_{i}",)),
        "con_ds_equal_subone_ds": (("directSingle",), m.OP_EQUAL,
                                   (f"subOne_{i}", "directSingle")),
        "con_ds_in_submany_ds": (("directSingle",), m.OP_IN,
                                 (f"subMany_{i}", "directSingle")),
        "con_chain_contains_ds": (("mul2", "mulSingle1", "directSingle"),
                                  m.OP_CONTAINS, ("directSingle",)),
        "con_ds_equal_ds": (("directSingle",), m.OP_EQUAL, ("directSingle",)),
        "con_mul2_supseteq": (("mul2",), m.OP_SUPSETEQ, ("mul2",)),
        "con_mul2_subseteq": (("mul2",), m.OP_SUBSETEQ, ("mul2",)),
        "con_mul2_seteq": (("mul2",), m.OP_SETEQ, ("mul2",)),
        "con_mulsingle2_subseteq": (("mul2", "mulSingle2"), m.OP_SUBSETEQ,
                                    ("mul2", "mulSingle2")),
    }
    p1, op, p2 = constraints[type_name]
    return "con", AtomicConstraint(p1, op, p2)


def gen_rules(cm: ClassModel, om: ObjectModel, cfg: SynthConfig,
              type_weights: dict[str, float] | None = None) -> frozenset:
    """n_r pseudorandom rules; each is simplified and has non-empty meaning."""
    rng = np.random.default_rng([cfg.seed, 0x72756C65])
    weights = type_weights if type_weights is not None else default_type_weights()
    names = sorted(weights)
    probs = np.array([weights[n] for n in names], dtype=float)
    probs /= probs.sum()
    ctxs: dict = {}

    rules: list[Rule] = []
    seen = set()
    while len(rules) < cfg.n_r:
        i = int(rng.integers(1, N_SUBJECT_CLASSES + 1))
        j = int(rng.integers(1, N_RESOURCE_CLASSES + 1))
        sub_cls, res_cls = f"Sub_{i}", f"Res_{j}"
        n_here = draw_rules_per_pair(rng)
        for _ in range(n_here):
            if len(rules) >= cfg.n_r:
                break
            rule = _gen_one_rule(cm, om, i, sub_cls, res_cls, names, probs, rng)
            if rule is None:
                continue
            key = (sub_cls, res_cls)
            if key not in ctxs:
                ctxs[key] = PairContext(om, sub_cls, res_cls, frozenset())
            ctx = ctxs[key]
            if ctx.count(ctx.cover_mask(rule)) == 0:
                continue  # unsatisfiable; regenerate
            rule = simplify_rule(rule, ctx)
            if rule in seen:
                continue
            seen.add(rule)
            rules.append(rule)
    return frozenset(rules)


def _gen_one_rule(cm, om, sub_idx, sub_cls, res_cls, names, probs, rng):
    n_feats = draw_feature_count(rng)
    parts = {"sc": set(), "rc": set(), "con": set()}
    for _ in range(n_feats):
        for _attempt in range(20):
            name = names[int(rng.choice(len(names), p=probs))]
            got = _realize(name, cm, om, sub_idx, sub_cls, res_cls, rng)
            if got is None:
                continue
            part, atom = got
            if atom in parts[part]:
                continue
            parts[part].add(atom)
            break
        else:
            return None
    action = ACTIONS[int(rng.integers(len(ACTIONS)))]
    return Rule(sub_cls, frozenset(parts["sc"]), res_cls, frozenset(parts["rc"]),
                frozenset(parts["con"]), frozenset({action}))


def compute_au(cm: ClassModel, om: ObjectModel, rules, actions=ACTIONS) -> ACLPolicy:
    au = m.policy_meaning(om, rules)
    return ACLPolicy(cm, om, frozenset(actions), au)


def generate_bundle(cfg: SynthConfig,
                    type_weights: dict[str, float] | None = None) -> GeneratedBundle:
    cm = gen_class_model()
    om = gen_object_model(cm, cfg)
    rules = gen_rules(cm, om, cfg, type_weights)
    acl = compute_au(cm, om, rules)
    return GeneratedBundle(cm, om, rules, acl)
