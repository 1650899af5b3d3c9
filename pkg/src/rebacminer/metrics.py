"""Policy similarity metrics: Jaccard, syntactic similarity, per-rule
semantic similarity, and the WSC ratio.

Computed in exact rational arithmetic; the report converts to floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from rebacminer.model import ObjectModel, Rule, rule_meaning


@dataclass(frozen=True)
class SimilarityReport:
    syn_sim: float
    per_rule_sem_sim: float
    wsc_mined: int
    wsc_input: int

    @property
    def wsc_ratio(self) -> float:
        if self.wsc_input == 0:
            return float("inf") if self.wsc_mined else 1.0
        return self.wsc_mined / self.wsc_input


def jaccard(s1, s2) -> Fraction:
    """|S1 ∩ S2| / |S1 ∪ S2|; two empty sets count as identical."""
    s1, s2 = set(s1), set(s2)
    union = s1 | s2
    if not union:
        return Fraction(1)
    return Fraction(len(s1 & s2), len(union))


def rule_syn_sim(r1: Rule, r2: Rule) -> Fraction:
    """Mean of the six component Jaccards (types as singleton sets)."""
    parts = (
        jaccard({r1.subject_type}, {r2.subject_type}),
        jaccard(r1.subject_condition, r2.subject_condition),
        jaccard({r1.resource_type}, {r2.resource_type}),
        jaccard(r1.resource_condition, r2.resource_condition),
        jaccard(r1.constraint, r2.constraint),
        jaccard(r1.actions, r2.actions),
    )
    return sum(parts, Fraction(0)) / 6


def _best_match_average(rules1, rules2, sim) -> Fraction:
    rules1, rules2 = list(rules1), list(rules2)
    if not rules1:
        return Fraction(1) if not rules2 else Fraction(0)
    if not rules2:
        return Fraction(0)
    total = Fraction(0)
    for r in rules1:
        total += max(sim(r, r2) for r2 in rules2)
    return total / len(rules1)


def policy_syn_sim(rules1: Iterable[Rule], rules2: Iterable[Rule]) -> Fraction:
    """Average over rules1 of the best syntactic match in rules2.

    Asymmetric by design; callers report syn_sim(mined, input)."""
    return _best_match_average(rules1, rules2, rule_syn_sim)


def per_rule_sem_sim(rules1: Iterable[Rule], rules2: Iterable[Rule],
                     om: ObjectModel) -> Fraction:
    """Average over rules1 of the best Jaccard of rule meanings in rules2."""
    rules1 = list(rules1)
    meanings1 = {r: rule_meaning(om, r) for r in set(rules1)}
    meanings2 = {r: rule_meaning(om, r) for r in set(rules2)}
    return _best_match_average(
        rules1, list(meanings2), lambda a, b: jaccard(meanings1[a], meanings2[b]))


def similarity_report(mined: Iterable[Rule], original: Iterable[Rule],
                      om: ObjectModel) -> SimilarityReport:
    mined, original = list(mined), list(original)
    return SimilarityReport(
        syn_sim=float(policy_syn_sim(mined, original)),
        per_rule_sem_sim=float(per_rule_sem_sim(mined, original, om)),
        wsc_mined=sum(r.wsc for r in mined),
        wsc_input=sum(r.wsc for r in original),
    )
