"""JSON document formats for policy artifacts, reports, and run configs.

One schema-versioned document per artifact kind.  Serialization is
canonical (sorted keys, sorted collections) so equal values are
byte-equal, and parse(serialize(x)) == x.
"""

from __future__ import annotations

import json
import os
import tempfile

from rebacminer import model as m
from rebacminer import nn, search, synth
from rebacminer.features import FeatureLimits
from rebacminer.metrics import SimilarityReport
from rebacminer.miner import ALGORITHMS, MinerConfig, MiningReport
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
    SRATuple,
)
from rebacminer.synth import SynthConfig

SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


# -- generic helpers ----------------------------------------------------------

def _atom_key(v):
    return (isinstance(v, str), str(v))


def _sorted_atoms(vals):
    return sorted(vals, key=_atom_key)


def _require(doc: dict, kind: str) -> dict:
    if not isinstance(doc, dict):
        raise FormatError(f"expected a JSON object for {kind}")
    if doc.get("schema") != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema version {doc.get('schema')!r}")
    if doc.get("kind") != kind:
        raise FormatError(f"expected kind {kind!r}, got {doc.get('kind')!r}")
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_document(path: str, doc: dict) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    text = dumps(doc)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_document(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


# -- class model --------------------------------------------------------------

def dump_class_model(cm: ClassModel) -> dict:
    classes = []
    for name in sorted(cm.classes):
        decl = cm.class_decl(name)
        classes.append({
            "name": name,
            "fields": [{"name": f.name, "type": f.type,
                        "multiplicity": f.multiplicity}
                       for f in sorted(decl.fields, key=lambda f: f.name)],
        })
    return {"schema": SCHEMA_VERSION, "kind": "classModel", "classes": classes}


def load_class_model(doc: dict) -> ClassModel:
    doc = _require(doc, "classModel")
    decls = []
    for c in doc["classes"]:
        fields = tuple(FieldDecl(f["name"], f["type"], f["multiplicity"])
                       for f in c["fields"])
        decls.append(ClassDecl(c["name"], fields))
    return ClassModel(decls)


# -- object model -------------------------------------------------------------

def _dump_value(v):
    if isinstance(v, frozenset):
        return _sorted_atoms(v)
    return v


def dump_object_model(om: ObjectModel) -> dict:
    objects = []
    for oid in sorted(om.objects):
        obj = om.objects[oid]
        values = {name: _dump_value(v) for name, v in obj.fields.items()}
        objects.append({"id": obj.id, "class": obj.type, "values": values})
    return {"schema": SCHEMA_VERSION, "kind": "objectModel", "objects": objects}


def load_object_model(doc: dict, cm: ClassModel) -> ObjectModel:
    doc = _require(doc, "objectModel")
    objects = []
    for o in doc["objects"]:
        decl = cm.class_decl(o["class"])
        values = {}
        for name, v in o["values"].items():
            f = decl.field(name)
            if f is None:
                raise FormatError(f"unknown field {name!r} on {o['class']}")
            values[name] = frozenset(v) if f.multiplicity == m.MANY else v
        objects.append(Object(o["id"], o["class"], values))
    return ObjectModel(cm, objects)


# -- rules --------------------------------------------------------------------

def _dump_condition(c: AtomicCondition) -> dict:
    val = _sorted_atoms(c.val) if c.op == m.OP_IN else c.val
    return {"path": list(c.path), "op": c.op, "val": val}


def _load_condition(d: dict) -> AtomicCondition:
    val = frozenset(d["val"]) if d["op"] == m.OP_IN else d["val"]
    return AtomicCondition(tuple(d["path"]), d["op"], val)


def _dump_constraint(c: AtomicConstraint) -> dict:
    return {"subjectPath": list(c.subject_path), "op": c.op,
            "resourcePath": list(c.resource_path)}


def _load_constraint(d: dict) -> AtomicConstraint:
    return AtomicConstraint(tuple(d["subjectPath"]), d["op"],
                            tuple(d["resourcePath"]))


def _dump_rule(r: Rule) -> dict:
    return {
        "subjectType": r.subject_type,
        "subjectCondition": [_dump_condition(c) for c in
                             sorted(r.subject_condition, key=AtomicCondition.sort_key)],
        "resourceType": r.resource_type,
        "resourceCondition": [_dump_condition(c) for c in
                              sorted(r.resource_condition, key=AtomicCondition.sort_key)],
        "constraint": [_dump_constraint(c) for c in
                       sorted(r.constraint, key=AtomicConstraint.sort_key)],
        "actions": sorted(r.actions),
    }


def _load_rule(d: dict) -> Rule:
    return Rule(
        d["subjectType"],
        frozenset(_load_condition(c) for c in d["subjectCondition"]),
        d["resourceType"],
        frozenset(_load_condition(c) for c in d["resourceCondition"]),
        frozenset(_load_constraint(c) for c in d["constraint"]),
        frozenset(d["actions"]),
    )


def dump_rules(rules) -> dict:
    body = [_dump_rule(r) for r in sorted(rules, key=Rule.sort_key)]
    return {"schema": SCHEMA_VERSION, "kind": "rules", "rules": body}


def load_rules(doc: dict) -> frozenset:
    doc = _require(doc, "rules")
    return frozenset(_load_rule(d) for d in doc["rules"])


# -- acl ----------------------------------------------------------------------

def dump_acl(acl: ACLPolicy) -> dict:
    au = sorted(acl.au, key=SRATuple.sort_key)
    return {"schema": SCHEMA_VERSION, "kind": "acl",
            "actions": sorted(acl.actions),
            "au": [[t.subject, t.resource, t.action] for t in au]}


def load_acl(doc: dict, cm: ClassModel, om: ObjectModel) -> ACLPolicy:
    doc = _require(doc, "acl")
    au = frozenset(SRATuple(s, r, a) for s, r, a in doc["au"])
    return ACLPolicy(cm, om, frozenset(doc["actions"]), au)


# -- reports ------------------------------------------------------------------

def dump_mining_report(rep: MiningReport) -> dict:
    # elapsed time is deliberately not serialized: report files from
    # identical seeded runs must be byte-equal
    return {"schema": SCHEMA_VERSION, "kind": "miningReport",
            "algorithm": rep.algorithm, "seed": rep.seed,
            "consistent": rep.consistent, "wsc": rep.wsc,
            "ruleCount": len(rep.rules),
            "iterations": rep.iterations, "warnings": sorted(rep.warnings)}


def dump_similarity_report(rep: SimilarityReport) -> dict:
    return {"schema": SCHEMA_VERSION, "kind": "similarityReport",
            "synSim": rep.syn_sim, "perRuleSemSim": rep.per_rule_sem_sim,
            "wscMined": rep.wsc_mined, "wscInput": rep.wsc_input,
            "wscRatio": rep.wsc_ratio}


# -- run config ---------------------------------------------------------------

_SECTION_FIELDS = {
    "miner": ("algorithm", "f_u", "max_outer_iterations", "allowed_constraint_ops"),
    "train": ("hidden_size", "n_tr", "rho", "eps"),
    "search": ("population_size", "generations", "improvement_trials",
               "tournament_size", "random_seed_fraction", "operator_weights"),
    "limits": ("mspl", "mrpl", "sped", "rped", "mtpl", "mcse"),
    "synth": ("n_sub", "n_r"),
}


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise FormatError(f"config section {name!r} must be an object")
    unknown = set(sec) - set(_SECTION_FIELDS[name])
    if unknown:
        raise FormatError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return sec


def parse_run_config(doc: dict) -> dict:
    """Parse a run-config document into config objects.

    Returns {"miner": MinerConfig, "synth": SynthConfig}.  Unknown keys
    at any level are rejected.
    """
    if not isinstance(doc, dict):
        raise FormatError("run config must be a JSON object")
    unknown = set(doc) - ({"seed"} | set(_SECTION_FIELDS))
    if unknown:
        raise FormatError(f"unknown top-level keys: {sorted(unknown)}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise FormatError("seed must be an integer")

    miner_sec = dict(_section(doc, "miner"))
    if "algorithm" in miner_sec and miner_sec["algorithm"] not in ALGORITHMS:
        raise FormatError(f"unknown algorithm {miner_sec['algorithm']!r}")
    if miner_sec.get("allowed_constraint_ops") is not None:
        ops = frozenset(miner_sec["allowed_constraint_ops"])
        bad = ops - frozenset(m.CONSTRAINT_OPS)
        if bad:
            raise FormatError(f"unknown constraint operators: {sorted(bad)}")
        miner_sec["allowed_constraint_ops"] = ops

    train_sec = dict(_section(doc, "train"))
    search_sec = dict(_section(doc, "search"))
    if "operator_weights" in search_sec:
        search_sec["operator_weights"] = tuple(
            sorted(dict(search_sec["operator_weights"]).items()))
    limits_sec = _section(doc, "limits")
    synth_sec = _section(doc, "synth")

    try:
        miner = MinerConfig(
            seed=seed,
            train=nn.TrainConfig(seed=seed, **train_sec),
            search=search.SearchConfig(**search_sec),
            limits=FeatureLimits(**limits_sec),
            **miner_sec,
        )
        synth_cfg = SynthConfig(seed=seed, **synth_sec)
    except (TypeError, ValueError) as exc:
        raise FormatError(str(exc)) from exc
    return {"miner": miner, "synth": synth_cfg}


def default_run_config_document() -> dict:
    """Config document spelling out every supported key at its default."""
    miner = MinerConfig()
    tr, sr, lim = miner.train, miner.search, miner.limits
    sy = synth.SynthConfig()
    return {
        "seed": 0,
        "miner": {"algorithm": miner.algorithm, "f_u": miner.f_u,
                  "max_outer_iterations": miner.max_outer_iterations,
                  "allowed_constraint_ops": None},
        "train": {"hidden_size": tr.hidden_size, "n_tr": tr.n_tr,
                  "rho": tr.rho, "eps": tr.eps},
        "search": {"population_size": sr.population_size,
                   "generations": sr.generations,
                   "improvement_trials": sr.improvement_trials,
                   "tournament_size": sr.tournament_size,
                   "random_seed_fraction": sr.random_seed_fraction,
                   "operator_weights": dict(sr.operator_weights)},
        "limits": {"mspl": lim.mspl, "mrpl": lim.mrpl, "sped": lim.sped,
                   "rped": lim.rped, "mtpl": lim.mtpl, "mcse": lim.mcse},
        "synth": {"n_sub": sy.n_sub, "n_r": sy.n_r},
    }
