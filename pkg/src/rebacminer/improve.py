"""Phase-2 policy improvement: mutations judged by whole-policy quality,
rule simplification, and merging of similar rules.

Every transformation here preserves the policy's meaning exactly and
never increases its WSC.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

import numpy as np

from rebacminer import model as m
from rebacminer import search as se
from rebacminer.bitmaps import PairContext
from rebacminer.model import AtomicCondition, AtomicConstraint, Rule


def simplify_rule(rule: Rule, ctx: PairContext) -> Rule:
    """Rewrite supseteq+subseteq pairs to set-equality, then drop atoms
    whose removal leaves the rule's meaning unchanged, to fixpoint."""
    rule = _rewrite_set_equality(rule)
    changed = True
    while changed:
        changed = False
        cover = ctx.cover_mask(rule)
        for kind, atom in sorted(_rule_atom_slots(rule), key=lambda t: (t[0], t[1].sort_key())):
            candidate = _without_atom(rule, kind, atom)
            if np.array_equal(ctx.cover_mask(candidate), cover):
                rule = candidate
                changed = True
                break
    return rule


def _rewrite_set_equality(rule: Rule) -> Rule:
    cons = set(rule.constraint)
    for c in sorted(rule.constraint, key=AtomicConstraint.sort_key):
        if c.op != m.OP_SUPSETEQ or c not in cons:
            continue
        twin = AtomicConstraint(c.subject_path, m.OP_SUBSETEQ, c.resource_path)
        if twin in cons:
            cons.discard(c)
            cons.discard(twin)
            cons.add(AtomicConstraint(c.subject_path, m.OP_SETEQ, c.resource_path))
    return replace(rule, constraint=frozenset(cons))


def _rule_atom_slots(rule: Rule):
    for a in rule.subject_condition:
        yield "sc", a
    for a in rule.resource_condition:
        yield "rc", a
    for a in rule.constraint:
        yield "con", a


def _without_atom(rule: Rule, kind: str, atom) -> Rule:
    if kind == "sc":
        return replace(rule, subject_condition=rule.subject_condition - {atom})
    if kind == "rc":
        return replace(rule, resource_condition=rule.resource_condition - {atom})
    return replace(rule, constraint=rule.constraint - {atom})


def merge_rules(r1: Rule, r2: Rule, ctx: PairContext, mcse: int) -> Optional[Rule]:
    """Merge two same-typed rules: identical-but-actions rules union their
    actions; rules differing in one 'in' condition on the same path take
    the union of the constant sets (capped at mcse).  The merge is kept
    only when it over-grants nothing and strictly lowers total WSC."""
    if (r1.subject_type, r1.resource_type) != (r2.subject_type, r2.resource_type):
        return None
    merged = None
    if (r1.subject_condition == r2.subject_condition
            and r1.resource_condition == r2.resource_condition
            and r1.constraint == r2.constraint):
        merged = replace(r1, actions=r1.actions | r2.actions)
    else:
        merged = _merge_one_condition(r1, r2, mcse)
    if merged is None:
        return None
    if merged.wsc >= r1.wsc + r2.wsc:
        return None
    cover = ctx.cover_mask(merged)
    for a in merged.actions:
        if ctx.count_andnot(cover, ctx.au_mask(a)) != 0:
            return None
    return merged


def _merge_one_condition(r1: Rule, r2: Rule, mcse: int) -> Optional[Rule]:
    if r1.actions != r2.actions or r1.constraint != r2.constraint:
        return None
    for side in ("subject_condition", "resource_condition"):
        c1, c2 = getattr(r1, side), getattr(r2, side)
        other = "resource_condition" if side == "subject_condition" else "subject_condition"
        if getattr(r1, other) != getattr(r2, other):
            continue
        only1 = c1 - c2
        only2 = c2 - c1
        if len(only1) != 1 or len(only2) != 1:
            continue
        a1, a2 = next(iter(only1)), next(iter(only2))
        if a1.path != a2.path or a1.op != m.OP_IN or a2.op != m.OP_IN:
            continue
        union = a1.val | a2.val
        if len(union) > mcse:
            continue
        bound = AtomicCondition(a1.path, m.OP_IN, union)
        return replace(r1, **{side: (c1 - {a1}) | {bound}})
    return None


class PolicyEvaluator:
    """Coverage bookkeeping for whole-policy meaning-preservation checks."""

    def __init__(self, acl: m.ACLPolicy):
        self.acl = acl
        self._ctxs: dict[tuple[str, str], PairContext] = {}

    def ctx(self, cs: str, cr: str) -> PairContext:
        key = (cs, cr)
        if key not in self._ctxs:
            self._ctxs[key] = PairContext(self.acl.om, cs, cr, self.acl.au)
        return self._ctxs[key]

    def rule_ctx(self, rule: Rule) -> PairContext:
        return self.ctx(rule.subject_type, rule.resource_type)

    def _union_mask(self, rules: list[Rule], skip: int, ctx: PairContext,
                    pair_key, action: str) -> np.ndarray:
        out = np.zeros(ctx.n_words, dtype=np.uint64)
        for j, r in enumerate(rules):
            if j == skip:
                continue
            if (r.subject_type, r.resource_type) != pair_key or action not in r.actions:
                continue
            out |= ctx.cover_mask(r)
        return out

    def replacement_keeps_meaning(self, rules: list[Rule], idx: int,
                                  candidate: Optional[Rule]) -> bool:
        """True iff replacing rules[idx] with ``candidate`` (or dropping it
        when candidate is None) leaves the policy meaning equal to AU."""
        old = rules[idx]
        pair_key = (old.subject_type, old.resource_type)
        ctx = self.ctx(*pair_key)
        cand_cover = None
        cand_actions: frozenset = frozenset()
        if candidate is not None:
            if (candidate.subject_type, candidate.resource_type) != pair_key:
                return False
            cand_cover = ctx.cover_mask(candidate)
            cand_actions = candidate.actions
        for a in sorted(old.actions | cand_actions):
            union = self._union_mask(rules, idx, ctx, pair_key, a)
            if a in cand_actions:
                union = union | cand_cover
            if not np.array_equal(union, ctx.au_mask(a)):
                return False
        return True


def improvement_phase(rules: list[Rule], acl: m.ACLPolicy, cfg: se.SearchConfig,
                      grammars: dict, rng: np.random.Generator,
                      mcse: int = 5) -> list[Rule]:
    """Improve a consistent policy: run a second evolutionary search per rule
    judged on whole-policy quality, then simplify, merge, and drop redundant
    rules.  Repeats to fixpoint (bounded).

    ``grammars`` maps (subjectType, resourceType) to the Grammar used for
    mutation proposals; pairs absent from the map skip the search pass.
    """
    pol = PolicyEvaluator(acl)
    rules = sorted(rules, key=Rule.sort_key)

    for _pass in range(3):
        before = list(rules)

        # systematic, policy-context-aware atom elimination
        for i in range(len(rules)):
            rules[i] = _drop_atoms_in_context(rules, i, pol)

        # per-rule improvement search judged on policy WSC; a replacement
        # may make other rules redundant, which counts in its favor
        i = 0
        while i < len(rules):
            rules = _improvement_search(rules, i, pol, grammars, cfg, rng)
            i += 1

        rules = [simplify_rule(r, pol.rule_ctx(r)) for r in rules]
        rules = _merge_all(rules, pol, mcse)
        rules = _drop_redundant(rules, pol)
        rules = sorted(set(rules), key=Rule.sort_key)
        if rules == sorted(set(before), key=Rule.sort_key):
            break
    return rules


def _drop_atoms_in_context(rules: list[Rule], i: int, pol: PolicyEvaluator) -> Rule:
    changed = True
    while changed:
        changed = False
        rule = rules[i]
        for kind, atom in sorted(_rule_atom_slots(rule), key=lambda t: (t[0], t[1].sort_key())):
            candidate = _without_atom(rule, kind, atom)
            if pol.replacement_keeps_meaning(rules, i, candidate):
                rules[i] = candidate
                changed = True
                break
    return rules[i]


def _improvement_search(rules: list[Rule], i: int, pol: PolicyEvaluator,
                        grammars: dict, cfg: se.SearchConfig,
                        rng: np.random.Generator) -> list[Rule]:
    """Evolutionary search over variants of rules[i], scored by the change in
    policy WSC (a variant is credited for same-pair rules it subsumes).
    Returns the updated rule list; an accepted variant replaces rules[i] and
    removes the rules it made redundant."""
    rule = rules[i]
    pair_key = (rule.subject_type, rule.resource_type)
    grammar = grammars.get(pair_key)
    if grammar is None:
        return rules
    try:
        genome = se.genome_of_rule(rule, grammar)
    except se.GrammarError:
        return rules
    ctx = pol.rule_ctx(rule)
    actions = rule.actions
    others = {a: pol._union_mask(rules, i, ctx, pair_key, a) for a in actions}
    au = {a: ctx.au_mask(a) for a in actions}
    # same-pair rules a wider variant could subsume
    subsumable = [
        (j, r, ctx.cover_mask(r)) for j, r in enumerate(rules)
        if j != i and (r.subject_type, r.resource_type) == pair_key
        and r.actions <= actions
    ]

    cache: dict = {}

    def evaluate(g: se.RuleGenome):
        key = g.key()
        hit = cache.get(key)
        if hit is not None:
            return hit
        cand = g.to_rule(grammar)
        cover = ctx.cover_mask(cand)
        valid = all(np.array_equal(others[a] | cover, au[a]) for a in actions)
        savings = sum(r.wsc for _, r, cov in subsumable
                      if ctx.count_andnot(cov, cover) == 0)
        entry = ((0 if valid else 1, cand.wsc - savings), cand, cover)
        cache[key] = entry
        return entry

    weights = dict(cfg.operator_weights)
    ops = [op for op in ("single", "double") if weights.get(op, 0) > 0] or ["single"]
    probs = np.array([weights[op] for op in ops], dtype=float)
    probs /= probs.sum()
    seed_action = next(iter(actions))

    population = [genome]
    while len(population) < cfg.population_size:
        op = ops[int(rng.choice(len(ops), p=probs))]
        population.append(se.apply_operator(op, genome, None, grammar, rng,
                                            actions, seed_action))

    best_key, best_genome = evaluate(genome)[0] + (genome.key(),), genome
    fits = []
    for g in population:
        score = evaluate(g)[0]
        fits.append(score)
        if score + (g.key(),) < best_key:
            best_key, best_genome = score + (g.key(),), g
    for _ in range(cfg.improvement_trials):
        new_pop = [best_genome]
        new_fits = [best_key[:2]]
        while len(new_pop) < cfg.population_size:
            k1, k2 = int(rng.integers(len(population))), int(rng.integers(len(population)))
            parent = population[k1] if fits[k1] <= fits[k2] else population[k2]
            op = ops[int(rng.choice(len(ops), p=probs))]
            child = se.apply_operator(op, parent, None, grammar, rng,
                                      actions, seed_action)
            score = evaluate(child)[0]
            new_pop.append(child)
            new_fits.append(score)
            if score + (child.key(),) < best_key:
                best_key, best_genome = score + (child.key(),), child
        population, fits = new_pop, new_fits

    if best_key[0] != 0 or best_genome.key() == genome.key():
        return rules
    _, cand, cover = evaluate(best_genome)
    removed = {j for j, r, cov in subsumable if ctx.count_andnot(cov, cover) == 0}
    new_wsc = cand.wsc
    old_wsc = rule.wsc + sum(rules[j].wsc for j in removed)
    if new_wsc >= old_wsc:
        return rules
    out = [cand if j == i else r for j, r in enumerate(rules) if j == i or j not in removed]
    return out


def _merge_all(rules: list[Rule], pol: PolicyEvaluator, mcse: int) -> list[Rule]:
    rules = list(rules)
    merged = True
    while merged:
        merged = False
        rules.sort(key=Rule.sort_key)
        for i in range(len(rules)):
            for j in range(i + 1, len(rules)):
                combo = merge_rules(rules[i], rules[j], pol.rule_ctx(rules[i]), mcse)
                if combo is not None:
                    rules = [r for k, r in enumerate(rules) if k not in (i, j)]
                    rules.append(combo)
                    merged = True
                    break
            if merged:
                break
    return rules


def _drop_redundant(rules: list[Rule], pol: PolicyEvaluator) -> list[Rule]:
    rules = sorted(rules, key=lambda r: (-r.wsc,) + r.sort_key())
    i = 0
    while i < len(rules):
        if pol.replacement_keeps_meaning(rules, i, None):
            del rules[i]
        else:
            i += 1
    return rules
