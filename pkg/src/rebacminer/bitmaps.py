"""Packed-bitset evaluation context for one (subjectType, resourceType) pair.

The pair space is the cross product of typed subjects and resources; each
atom (atomic condition or constraint) has a truth bitmap over that space.
Rule coverage is the AND of its atoms' bitmaps, and fitness counts are
popcounts against per-action authorization masks.  The bit-level work is
done by the kernel backend in rebacminer._core.
"""

from __future__ import annotations

import numpy as np

from rebacminer import _core as kernel
from rebacminer import model as m
from rebacminer.model import ObjectModel, Rule, SRATuple


def _as_set(v):
    if v is None:
        return frozenset()
    if isinstance(v, frozenset):
        return v
    return frozenset({v})


_CONSTRAINT_CHECKS = {
    m.OP_EQUAL: lambda v1, v2: v1 is not None and v2 is not None and v1 == v2,
    m.OP_IN: lambda v1, v2: v1 is not None and v1 in _as_set(v2),
    m.OP_CONTAINS: lambda v1, v2: v2 is not None and v2 in _as_set(v1),
    m.OP_SUPSETEQ: lambda v1, v2: _as_set(v1) >= _as_set(v2),
    m.OP_SUBSETEQ: lambda v1, v2: _as_set(v1) <= _as_set(v2),
    m.OP_SETEQ: lambda v1, v2: _as_set(v1) == _as_set(v2),
}


def _pack(bools: np.ndarray) -> np.ndarray:
    """Pack a boolean vector into little-endian uint64 words."""
    packed = np.packbits(bools.astype(np.uint8), bitorder="little")
    pad = (-packed.size) % 8
    if pad:
        packed = np.concatenate([packed, np.zeros(pad, dtype=np.uint8)])
    return packed.view(np.uint64).copy()


class PairContext:
    def __init__(self, om: ObjectModel, subject_type: str, resource_type: str,
                 au: frozenset):
        self.om = om
        self.subject_type = subject_type
        self.resource_type = resource_type
        self.subjects = om.instances(subject_type)
        self.resources = om.instances(resource_type)
        self.n_subjects = len(self.subjects)
        self.n_resources = len(self.resources)
        self.n_pairs = self.n_subjects * self.n_resources
        self.n_words = max(1, (self.n_pairs + 63) // 64)

        tail = np.zeros(self.n_words * 64, dtype=bool)
        tail[: self.n_pairs] = True
        self.valid_mask = _pack(tail)

        self._s_index = {s: i for i, s in enumerate(self.subjects)}
        self._r_index = {r: i for i, r in enumerate(self.resources)}
        self._atom_masks: dict = {}

        self.au_masks: dict[str, np.ndarray] = {}
        for t in au:
            if (om.type_of(t.subject) == subject_type
                    and om.type_of(t.resource) == resource_type):
                mask = self.au_masks.get(t.action)
                if mask is None:
                    mask = np.zeros(self.n_words, dtype=np.uint64)
                    self.au_masks[t.action] = mask
                self._set_bit(mask, t.subject, t.resource)

    def _set_bit(self, mask: np.ndarray, s: str, r: str) -> None:
        idx = self._s_index[s] * self.n_resources + self._r_index[r]
        mask[idx >> 6] |= np.uint64(1) << np.uint64(idx & 63)

    def au_mask(self, action: str) -> np.ndarray:
        mask = self.au_masks.get(action)
        if mask is None:
            mask = np.zeros(self.n_words, dtype=np.uint64)
        return mask

    # -- atom bitmaps ------------------------------------------------------

    def atom_mask(self, atom) -> np.ndarray:
        """Truth bitmap of a single atomic condition/constraint over the
        pair space.  ``atom`` is an AtomicConstraint, or a (kind, AtomicCondition)
        pair with kind 's' or 'r'."""
        key = self._atom_key(atom)
        cached = self._atom_masks.get(key)
        if cached is not None:
            return cached
        mask = self._evaluate_atom(atom)
        self._atom_masks[key] = mask
        return mask

    @staticmethod
    def _atom_key(atom):
        if isinstance(atom, m.AtomicConstraint):
            return ("c",) + atom.sort_key()
        side, cond = atom
        return (side,) + cond.sort_key()

    def _evaluate_atom(self, atom) -> np.ndarray:
        nr = self.n_resources
        bools = np.zeros(self.n_words * 64, dtype=bool)
        if isinstance(atom, m.AtomicConstraint):
            svals = [m.nav(self.om, s, atom.subject_path) for s in self.subjects]
            rvals = [m.nav(self.om, r, atom.resource_path) for r in self.resources]
            check = _CONSTRAINT_CHECKS[atom.op]
            for i, v1 in enumerate(svals):
                base = i * nr
                for j, v2 in enumerate(rvals):
                    bools[base + j] = check(v1, v2)
        else:
            side, cond = atom
            if side == "s":
                for i, s in enumerate(self.subjects):
                    if m.satisfies_condition(self.om, s, [cond]):
                        bools[i * nr: (i + 1) * nr] = True
            else:
                col = np.array(
                    [m.satisfies_condition(self.om, r, [cond]) for r in self.resources],
                    dtype=bool,
                )
                for i in range(self.n_subjects):
                    bools[i * nr: (i + 1) * nr] = col
        return _pack(bools)

    # -- rule evaluation ---------------------------------------------------

    def rule_atoms(self, rule: Rule) -> list:
        atoms: list = [("s", c) for c in rule.subject_condition]
        atoms += [("r", c) for c in rule.resource_condition]
        atoms += list(rule.constraint)
        return atoms

    def cover_mask(self, rule: Rule) -> np.ndarray:
        """Bitmap of (s, r) pairs satisfying the rule's conditions and
        constraint (actions not considered)."""
        return self.atoms_cover_mask(self.rule_atoms(rule))

    def atoms_cover_mask(self, atoms: list) -> np.ndarray:
        out = np.empty(self.n_words, dtype=np.uint64)
        if not atoms:
            return self.valid_mask.copy()
        mat = np.stack([self.atom_mask(a) for a in atoms])
        kernel.and_reduce(mat, out)
        out &= self.valid_mask
        return out

    def count(self, mask: np.ndarray) -> int:
        return kernel.popcount(mask)

    def count_and(self, a: np.ndarray, b: np.ndarray) -> int:
        return kernel.popcount_and(a, b)

    def count_andnot(self, a: np.ndarray, b: np.ndarray) -> int:
        return kernel.popcount_andnot(a, b)

    def mask_to_tuples(self, mask: np.ndarray, action: str) -> set:
        out = set()
        bits = np.unpackbits(mask.view(np.uint8), bitorder="little")[: self.n_pairs]
        for idx in np.nonzero(bits)[0]:
            s = self.subjects[idx // self.n_resources]
            r = self.resources[idx % self.n_resources]
            out.add(SRATuple(s, r, action))
        return out

    def rule_meaning(self, rule: Rule) -> set:
        cover = self.cover_mask(rule)
        out: set = set()
        for a in rule.actions:
            out |= self.mask_to_tuples(cover, a)
        return out
