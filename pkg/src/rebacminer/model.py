"""Core policy data model: class/object models, rules, navigation and
satisfaction semantics, weighted structural complexity, consistency.

Objects are referenced by their id strings throughout.  Field values are
``None`` (absent), ``bool``, ``str`` (an id or string constant), or a
``frozenset`` of those for many-multiplicity fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

ONE = "one"
OPTIONAL = "optional"
MANY = "many"
MULTIPLICITIES = (ONE, OPTIONAL, MANY)

BOOLEAN = "Boolean"
STRING = "String"

Atom = Union[bool, str]
Value = Union[None, bool, str, frozenset]


class ModelError(ValueError):
    """Raised for ill-formed class models, object models, or rules."""


class PathTypeError(ModelError):
    """Raised when a path is not type-correct from its start class."""


@dataclass(frozen=True)
class FieldDecl:
    name: str
    type: str  # class name, "Boolean", or "String"
    multiplicity: str = ONE


@dataclass(frozen=True)
class ClassDecl:
    name: str
    fields: tuple[FieldDecl, ...] = ()

    def field(self, name: str) -> Optional[FieldDecl]:
        if name == "id":
            return FieldDecl("id", STRING, ONE)
        for f in self.fields:
            if f.name == name:
                return f
        return None


class ClassModel:
    def __init__(self, classes: Iterable[ClassDecl]):
        self.classes: dict[str, ClassDecl] = {}
        for cd in classes:
            if cd.name in self.classes:
                raise ModelError(f"duplicate class {cd.name!r}")
            self.classes[cd.name] = cd
        self._validate()

    def _validate(self) -> None:
        for cd in self.classes.values():
            seen = set()
            for f in cd.fields:
                if f.name == "id":
                    raise ModelError(f"{cd.name}: explicit redeclaration of 'id'")
                if f.name in seen:
                    raise ModelError(f"{cd.name}: duplicate field {f.name!r}")
                seen.add(f.name)
                if f.multiplicity not in MULTIPLICITIES:
                    raise ModelError(f"{cd.name}.{f.name}: bad multiplicity {f.multiplicity!r}")
                if f.type == BOOLEAN and f.multiplicity != ONE:
                    raise ModelError(f"{cd.name}.{f.name}: Boolean fields must have multiplicity one")
                if f.type not in (BOOLEAN, STRING) and f.type not in self.classes:
                    raise ModelError(f"{cd.name}.{f.name}: unknown class {f.type!r}")

    def class_decl(self, name: str) -> ClassDecl:
        try:
            return self.classes[name]
        except KeyError:
            raise ModelError(f"unknown class {name!r}") from None

    def resolve_path(self, start: str, path: tuple[str, ...]) -> tuple[str, str]:
        """Return (leaf type, multiplicity) of ``path`` from class ``start``.

        The empty path has type ``start`` and multiplicity one.  Raises
        PathTypeError if any step does not exist or leaves the class graph.
        """
        cur = start
        mult = ONE
        for i, fname in enumerate(path):
            if cur in (BOOLEAN, STRING):
                raise PathTypeError(f"cannot navigate {'.'.join(path)} past primitive at step {i}")
            fd = self.class_decl(cur).field(fname)
            if fd is None:
                raise PathTypeError(f"class {cur!r} has no field {fname!r}")
            if fd.multiplicity == MANY:
                mult = MANY
            elif fd.multiplicity == OPTIONAL and mult != MANY:
                mult = OPTIONAL
            cur = fd.type
        return cur, mult

    def is_path_valid(self, start: str, path: tuple[str, ...]) -> bool:
        try:
            self.resolve_path(start, path)
            return True
        except ModelError:
            return False


@dataclass(frozen=True)
class Object:
    id: str
    type: str
    fields: Mapping[str, Value] = field(default_factory=dict)


class ObjectModel:
    def __init__(self, cm: ClassModel, objects: Iterable[Object]):
        self.cm = cm
        self.objects: dict[str, Object] = {}
        self._by_type: dict[str, list[str]] = {}
        for obj in objects:
            if obj.id in self.objects:
                raise ModelError(f"duplicate object id {obj.id!r}")
            self.objects[obj.id] = obj
            self._by_type.setdefault(obj.type, []).append(obj.id)
        for ids in self._by_type.values():
            ids.sort()
        self._validate()

    def _validate(self) -> None:
        for obj in self.objects.values():
            cd = self.cm.class_decl(obj.type)
            declared = {f.name for f in cd.fields}
            for fname in obj.fields:
                if fname not in declared:
                    raise ModelError(f"object {obj.id!r}: undeclared field {fname!r}")
            for f in cd.fields:
                v = obj.fields.get(f.name)
                self._check_value(obj, f, v)

    def _check_value(self, obj: Object, f: FieldDecl, v: Value) -> None:
        where = f"object {obj.id!r} field {f.name!r}"
        if f.multiplicity == MANY:
            if not isinstance(v, frozenset):
                raise ModelError(f"{where}: many-field value must be a frozenset")
            for el in v:
                self._check_atom(where, f.type, el)
            return
        if v is None:
            if f.multiplicity == ONE:
                raise ModelError(f"{where}: multiplicity one requires a value")
            return
        if isinstance(v, frozenset):
            raise ModelError(f"{where}: single-valued field holds a set")
        self._check_atom(where, f.type, v)

    def _check_atom(self, where: str, ftype: str, v: Atom) -> None:
        if ftype == BOOLEAN:
            if not isinstance(v, bool):
                raise ModelError(f"{where}: expected bool, got {v!r}")
        elif ftype == STRING:
            if not isinstance(v, str):
                raise ModelError(f"{where}: expected string, got {v!r}")
        else:
            if not isinstance(v, str) or v not in self.objects:
                raise ModelError(f"{where}: dangling reference {v!r}")
            if self.objects[v].type != ftype:
                raise ModelError(f"{where}: reference {v!r} is not a {ftype}")

    def instances(self, cls: str) -> list[str]:
        return self._by_type.get(cls, [])

    def type_of(self, oid: str) -> str:
        try:
            return self.objects[oid].type
        except KeyError:
            raise ModelError(f"unknown object {oid!r}") from None


# operators over conditions
OP_IN = "in"
OP_CONTAINS = "contains"
# operators over constraints (plus in/contains)
OP_EQUAL = "equal"
OP_SUPSETEQ = "supseteq"
OP_SUBSETEQ = "subseteq"
OP_SETEQ = "seteq"

CONDITION_OPS = (OP_IN, OP_CONTAINS)
CONSTRAINT_OPS = (OP_EQUAL, OP_IN, OP_CONTAINS, OP_SUPSETEQ, OP_SUBSETEQ, OP_SETEQ)
SET_OPS = (OP_SUPSETEQ, OP_SUBSETEQ, OP_SETEQ)


def _atom_sort_key(v: Atom):
    return (isinstance(v, str), str(v))


@dataclass(frozen=True)
class AtomicCondition:
    path: tuple[str, ...]
    op: str
    val: Union[Atom, frozenset]

    def __post_init__(self):
        if not self.path:
            raise ModelError("condition path must be non-empty")
        if self.op == OP_IN:
            if not isinstance(self.val, frozenset):
                raise ModelError("op 'in' requires a set constant")
        elif self.op == OP_CONTAINS:
            if isinstance(self.val, frozenset):
                raise ModelError("op 'contains' requires an atomic constant")
        else:
            raise ModelError(f"bad condition operator {self.op!r}")

    @property
    def wsc(self) -> int:
        n = len(self.val) if isinstance(self.val, frozenset) else 1
        return len(self.path) + n

    def sort_key(self):
        vals = (
            tuple(sorted((_atom_sort_key(v) for v in self.val)))
            if isinstance(self.val, frozenset)
            else (_atom_sort_key(self.val),)
        )
        return (self.path, self.op, vals)


@dataclass(frozen=True)
class AtomicConstraint:
    subject_path: tuple[str, ...]
    op: str
    resource_path: tuple[str, ...]

    def __post_init__(self):
        if self.op not in CONSTRAINT_OPS:
            raise ModelError(f"bad constraint operator {self.op!r}")

    @property
    def wsc(self) -> int:
        return len(self.subject_path) + len(self.resource_path)

    def sort_key(self):
        return (self.subject_path, self.op, self.resource_path)


@dataclass(frozen=True)
class Rule:
    subject_type: str
    subject_condition: frozenset  # of AtomicCondition
    resource_type: str
    resource_condition: frozenset  # of AtomicCondition
    constraint: frozenset  # of AtomicConstraint
    actions: frozenset  # of str, non-empty

    def __post_init__(self):
        if not self.actions:
            raise ModelError("rule must have at least one action")

    @property
    def wsc(self) -> int:
        return (
            sum(a.wsc for a in self.subject_condition)
            + sum(a.wsc for a in self.resource_condition)
            + sum(a.wsc for a in self.constraint)
            + len(self.actions)
        )

    def sort_key(self):
        return (
            self.subject_type,
            self.resource_type,
            tuple(sorted(a.sort_key() for a in self.subject_condition)),
            tuple(sorted(a.sort_key() for a in self.resource_condition)),
            tuple(sorted(a.sort_key() for a in self.constraint)),
            tuple(sorted(self.actions)),
        )


def make_rule(subject_type, subject_condition, resource_type, resource_condition,
              constraint, actions) -> Rule:
    return Rule(
        subject_type,
        frozenset(subject_condition),
        resource_type,
        frozenset(resource_condition),
        frozenset(constraint),
        frozenset(actions),
    )


@dataclass(frozen=True)
class SRATuple:
    subject: str
    resource: str
    action: str

    def sort_key(self):
        return (self.subject, self.resource, self.action)


@dataclass(frozen=True)
class ACLPolicy:
    cm: ClassModel
    om: ObjectModel
    actions: frozenset
    au: frozenset  # of SRATuple

    def __post_init__(self):
        for t in self.au:
            if t.action not in self.actions:
                raise ModelError(f"AU action {t.action!r} not declared")
            self.om.type_of(t.subject)
            self.om.type_of(t.resource)


@dataclass(frozen=True)
class ReBACPolicy:
    cm: ClassModel
    om: ObjectModel
    actions: frozenset
    rules: frozenset  # of Rule

    def __post_init__(self):
        for rule in self.rules:
            validate_rule(self.cm, rule)

    @property
    def wsc(self) -> int:
        return sum(r.wsc for r in self.rules)


def validate_rule(cm: ClassModel, rule: Rule) -> None:
    """Check path type-correctness and operator/multiplicity compatibility."""
    cm.class_decl(rule.subject_type)
    cm.class_decl(rule.resource_type)
    for start, conds in ((rule.subject_type, rule.subject_condition),
                         (rule.resource_type, rule.resource_condition)):
        for c in conds:
            _, mult = cm.resolve_path(start, c.path)
            if c.op == OP_IN and mult == MANY:
                raise ModelError(f"'in' condition on many-path {'.'.join(c.path)}")
            if c.op == OP_CONTAINS and mult != MANY:
                raise ModelError(f"'contains' condition on single path {'.'.join(c.path)}")
    for c in rule.constraint:
        t1, m1 = cm.resolve_path(rule.subject_type, c.subject_path)
        t2, m2 = cm.resolve_path(rule.resource_type, c.resource_path)
        if t1 != t2:
            raise ModelError(f"constraint relates {t1} to {t2}")
        ok = {
            OP_EQUAL: m1 != MANY and m2 != MANY,
            OP_IN: m1 != MANY and m2 == MANY,
            OP_CONTAINS: m1 == MANY and m2 != MANY,
            OP_SUPSETEQ: m1 == MANY and m2 == MANY,
            OP_SUBSETEQ: m1 == MANY and m2 == MANY,
            OP_SETEQ: m1 == MANY and m2 == MANY,
        }[c.op]
        if not ok:
            raise ModelError(f"operator {c.op!r} incompatible with multiplicities {m1}/{m2}")


def nav(om: ObjectModel, oid: str, path: tuple[str, ...]) -> Value:
    """OCL-style path navigation starting from the object with id ``oid``.

    Traversing a many-field flattens into a frozenset; navigating from
    absent values drops them; the empty path is the identity.
    """
    om.type_of(oid)
    cur: Value = oid
    for fname in path:
        if cur is None:
            return None
        if isinstance(cur, frozenset):
            out = set()
            for el in cur:
                v = _step(om, el, fname)
                if v is None:
                    continue
                if isinstance(v, frozenset):
                    out |= v
                else:
                    out.add(v)
            cur = frozenset(out)
        else:
            cur = _step(om, cur, fname)
    return cur


def _step(om: ObjectModel, oid, fname: str) -> Value:
    if not isinstance(oid, str):
        raise PathTypeError(f"cannot navigate field {fname!r} from {oid!r}")
    obj = om.objects.get(oid)
    if obj is None:
        raise PathTypeError(f"cannot navigate field {fname!r} from non-object {oid!r}")
    if fname == "id":
        return obj.id
    fd = om.cm.class_decl(obj.type).field(fname)
    if fd is None:
        raise PathTypeError(f"class {obj.type!r} has no field {fname!r}")
    if fd.multiplicity == MANY:
        return obj.fields.get(fname, frozenset())
    return obj.fields.get(fname)


def _as_set(v: Value) -> frozenset:
    # absent values in set positions denote the empty set
    if v is None:
        return frozenset()
    if isinstance(v, frozenset):
        return v
    return frozenset({v})


def satisfies_condition(om: ObjectModel, oid: str, conds: Iterable[AtomicCondition]) -> bool:
    for c in conds:
        v = nav(om, oid, c.path)
        if c.op == OP_IN:
            if v is None or isinstance(v, frozenset) or v not in c.val:
                return False
        else:  # contains
            if c.val not in _as_set(v):
                return False
    return True


def satisfies_constraint(om: ObjectModel, s: str, r: str,
                         cons: Iterable[AtomicConstraint]) -> bool:
    for c in cons:
        v1 = nav(om, s, c.subject_path)
        v2 = nav(om, r, c.resource_path)
        if c.op == OP_EQUAL:
            if v1 is None or v2 is None or v1 != v2:
                return False
        elif c.op == OP_IN:
            if v1 is None or v1 not in _as_set(v2):
                return False
        elif c.op == OP_CONTAINS:
            if v2 is None or v2 not in _as_set(v1):
                return False
        elif c.op == OP_SUPSETEQ:
            if not _as_set(v1) >= _as_set(v2):
                return False
        elif c.op == OP_SUBSETEQ:
            if not _as_set(v1) <= _as_set(v2):
                return False
        else:  # seteq
            if _as_set(v1) != _as_set(v2):
                return False
    return True


def satisfies_rule(om: ObjectModel, s: str, r: str, a: str, rule: Rule) -> bool:
    return (
        om.type_of(s) == rule.subject_type
        and om.type_of(r) == rule.resource_type
        and a in rule.actions
        and satisfies_condition(om, s, rule.subject_condition)
        and satisfies_condition(om, r, rule.resource_condition)
        and satisfies_constraint(om, s, r, rule.constraint)
    )


def rule_meaning(om: ObjectModel, rule: Rule) -> frozenset:
    """All SRA-tuples satisfying ``rule``, by enumerating typed pairs."""
    out = set()
    for s in om.instances(rule.subject_type):
        if not satisfies_condition(om, s, rule.subject_condition):
            continue
        for r in om.instances(rule.resource_type):
            if not satisfies_condition(om, r, rule.resource_condition):
                continue
            if not satisfies_constraint(om, s, r, rule.constraint):
                continue
            for a in rule.actions:
                out.add(SRATuple(s, r, a))
    return frozenset(out)


def policy_meaning(om: ObjectModel, rules: Iterable[Rule]) -> frozenset:
    out: set = set()
    for rule in rules:
        out |= rule_meaning(om, rule)
    return frozenset(out)


def consistency_diff(policy: ReBACPolicy, acl: ACLPolicy):
    """Return (over_granted, missing) tuples of ``policy`` w.r.t. ``acl``."""
    meaning = policy_meaning(policy.om, policy.rules)
    return meaning - acl.au, acl.au - meaning


def is_consistent(policy: ReBACPolicy, acl: ACLPolicy) -> bool:
    if policy.cm is not acl.cm and policy.cm.classes != acl.cm.classes:
        return False
    if policy.om is not acl.om and policy.om.objects != acl.om.objects:
        return False
    if policy.actions != acl.actions:
        return False
    extra, missing = consistency_diff(policy, acl)
    return not extra and not missing
