"""Grammar specialization, fitness, seed populations, operators, and the
evolution loop."""

import numpy as np
import pytest

from rebacminer import model as m
from rebacminer import search as se
from rebacminer.bitmaps import PairContext
from rebacminer.features import FeatureLimits
from rebacminer.model import Rule, SRATuple, validate_rule

FS = frozenset


@pytest.fixture(scope="module")
def emr_grammar(emr_cm, emr_om, emr_acl):
    return se.specialize_grammar(emr_cm, emr_om, FeatureLimits(),
                                 "Physician", "Consultation", ["view"])


@pytest.fixture(scope="module")
def emr_ctx(emr_om, emr_acl):
    return PairContext(emr_om, "Physician", "Consultation", emr_acl.au)


def _eval_ctx(state_ctx, grammar, au):
    uncov = {}
    total = 0
    for t in au:
        mask = uncov.get(t.action)
        if mask is None:
            mask = np.zeros(state_ctx.n_words, dtype=np.uint64)
            uncov[t.action] = mask
        state_ctx._set_bit(mask, t.subject, t.resource)
        total += 1
    return se.EvalContext(state_ctx, grammar, uncov, total)


# -- grammar ------------------------------------------------------------------

def test_restricted_grammar_atom_count(emr_cm, emr_om):
    from rebacminer.features import enumerate_features
    feats = enumerate_features(emr_cm, emr_om, FeatureLimits(),
                               "Physician", "Consultation")
    sub = feats[: 9]
    g = se.specialize_grammar(emr_cm, emr_om, FeatureLimits(), "Physician",
                              "Consultation", ["view"], restrict_to=sub)
    assert g.n_atoms == 9


def test_empty_grammar_rejected(emr_cm, emr_om):
    with pytest.raises(se.GrammarError):
        se.specialize_grammar(emr_cm, emr_om, FeatureLimits(), "Physician",
                              "Consultation", ["view"], restrict_to=[])


def test_sampled_genomes_yield_well_formed_rules(emr_cm, emr_grammar):
    rng = np.random.default_rng(0)
    for _ in range(300):
        genome = se.random_genome(emr_grammar, rng, "view")
        rule = genome.to_rule(emr_grammar)
        validate_rule(emr_cm, rule)


def test_genome_round_trip(emr_grammar):
    rng = np.random.default_rng(1)
    for _ in range(50):
        genome = se.random_genome(emr_grammar, rng, "view")
        rule = genome.to_rule(emr_grammar)
        assert se.genome_of_rule(rule, emr_grammar).key() == genome.key()


def test_foreign_atom_not_derivable(emr_grammar):
    rule = Rule("Physician",
                FS({m.AtomicCondition(("affiliation", "id"), "in",
                                      FS({"not-a-real-hospital"}))}),
                "Consultation", FS(), FS(), FS({"view"}))
    with pytest.raises(se.GrammarError):
        se.genome_of_rule(rule, emr_grammar)


# -- fitness ------------------------------------------------------------------

def test_fitness_exact_cover(emr_grammar, emr_ctx, emr_acl, emr_rule):
    eval_ctx = _eval_ctx(emr_ctx, emr_grammar, emr_acl.au)
    genome = se.genome_of_rule(emr_rule, emr_grammar)
    fit, far_full, _ = eval_ctx.evaluate(genome)
    assert (fit.far, fit.frr) == (0, 0)
    assert far_full == 0
    assert fit.wsc == emr_rule.wsc
    assert fit.idc == 0


def test_fitness_disjoint_counts(emr_cm, emr_om, emr_acl):
    # rule meaning disjoint from uncovAU: FAR = |meaning|, FRR = |uncovAU|
    trainee = Rule("Physician",
                   FS({m.AtomicCondition(("isTrainee",), "in", FS({True}))}),
                   "Consultation", FS(), FS(), FS({"view"}))
    meaning = m.rule_meaning(emr_om, trainee)
    assert meaning and not (meaning & emr_acl.au)
    grammar = se.specialize_grammar(emr_cm, emr_om, FeatureLimits(),
                                    "Physician", "Consultation", ["view"])
    ctx = PairContext(emr_om, "Physician", "Consultation", emr_acl.au)
    eval_ctx = _eval_ctx(ctx, grammar, emr_acl.au)
    fit, far_full, _ = eval_ctx.evaluate(se.genome_of_rule(trainee, grammar))
    assert fit.far == len(meaning)
    assert fit.frr == len(emr_acl.au)
    assert far_full == len(meaning)


def test_id_count():
    idc = m.AtomicCondition(("id",), "in", FS({"x"}))
    base = Rule("A", FS(), "B", FS(), FS(), FS({"a"}))
    import dataclasses
    one = dataclasses.replace(base, subject_condition=FS({idc}))
    two = dataclasses.replace(one, resource_condition=FS({idc}))
    assert se.id_count(base) == 0
    assert se.id_count(one) == 1
    assert se.id_count(two) == 2


def test_fitness_total_order():
    fits = [se.Fitness(1, 0, 0, 5), se.Fitness(0, 9, 2, 1), se.Fitness(0, 9, 1, 9)]
    ordered = sorted(fits, key=se.Fitness.as_tuple)
    assert ordered[0] == se.Fitness(0, 9, 1, 9)
    assert ordered[-1] == se.Fitness(1, 0, 0, 5)


# -- seed population ----------------------------------------------------------

def test_seed_population_composition(emr_grammar, emr_ctx, emr_om):
    seed = SRATuple("doc1", "cons1", "view")
    cfg = se.SearchConfig(population_size=40)
    rng = np.random.default_rng(0)
    pop = se.seed_population(seed, emr_grammar, emr_ctx, cfg, rng, FS({"view"}))
    assert len(pop) == 40
    assert se.RuleGenome((), (), (), FS({"view"})) in pop
    # one single-constraint seed per satisfied constraint terminal
    satisfied = [ci for ci, con in enumerate(emr_grammar.c_atoms)
                 if m.satisfies_constraint(emr_om, "doc1", "cons1", [con])]
    for ci in satisfied:
        assert se.RuleGenome((), (), (ci,), FS({"view"})) in pop
    # every such seed rule covers the seed tuple
    for ci in satisfied:
        rule = se.RuleGenome((), (), (ci,), FS({"view"})).to_rule(emr_grammar)
        assert m.satisfies_rule(emr_om, "doc1", "cons1", "view", rule)


def test_seed_population_degenerate_seed(emr_cm, emr_om, emr_acl):
    # restrict the grammar to condition atoms only: no constraint is
    # satisfied, the atom-free rule still seeds the population
    from rebacminer.features import SUBJECT_CONDITION, enumerate_features
    feats = [f for f in enumerate_features(emr_cm, emr_om, FeatureLimits(),
                                           "Physician", "Consultation")
             if f.kind == SUBJECT_CONDITION][:4]
    g = se.specialize_grammar(emr_cm, emr_om, FeatureLimits(), "Physician",
                              "Consultation", ["view"], restrict_to=feats)
    ctx = PairContext(emr_om, "Physician", "Consultation", emr_acl.au)
    pop = se.seed_population(SRATuple("doc1", "cons1", "view"), g, ctx,
                             se.SearchConfig(population_size=10),
                             np.random.default_rng(0), FS({"view"}))
    assert pop[0] == se.RuleGenome((), (), (), FS({"view"}))


# -- operators ----------------------------------------------------------------

def test_simplify_removes_last_atom(emr_grammar):
    genome = se.RuleGenome((0,), (), (), FS({"view"}))
    rng = np.random.default_rng(0)
    out = se.mutate_simplify(genome, emr_grammar, rng)
    assert out == se.RuleGenome((), (), (), FS({"view"}))


def test_action_mutation_keeps_seed_action(emr_grammar):
    rng = np.random.default_rng(0)
    genome = se.RuleGenome((), (), (), FS({"view"}))
    seed_actions = FS({"view", "edit"})
    for _ in range(200):
        genome = se.mutate_action(genome, emr_grammar, rng, seed_actions, "view")
        assert "view" in genome.acts
        assert genome.acts <= seed_actions


def test_crossover_swaps_single_part(emr_grammar):
    g1 = se.RuleGenome((0,), (1,), (2,), FS({"view"}))
    g2 = se.RuleGenome((3,), (4,), (5,), FS({"view"}))
    rng = np.random.default_rng(0)
    for _ in range(50):
        child = se.crossover(g1, g2, emr_grammar, rng)
        diffs = [p for p in ("sc", "rc", "con")
                 if child.part(p) != g1.part(p)]
        assert len(diffs) <= 1


def test_operator_fuzz_yields_well_formed(emr_cm, emr_grammar):
    rng = np.random.default_rng(5)
    genome = se.RuleGenome((), (), (), FS({"view"}))
    mate = se.random_genome(emr_grammar, rng, "view")
    for _ in range(2000):
        op = se.OPERATORS[int(rng.integers(len(se.OPERATORS)))]
        genome = se.apply_operator(op, genome, mate, emr_grammar, rng,
                                   FS({"view"}), "view")
        rule = genome.to_rule(emr_grammar)
        validate_rule(emr_cm, rule)
        assert rule.actions


def test_search_config_validation():
    with pytest.raises(ValueError):
        se.SearchConfig(population_size=1)
    with pytest.raises(ValueError):
        se.SearchConfig(operator_weights=(("single", 1.0),))
    with pytest.raises(ValueError):
        se.SearchConfig(operator_weights=tuple(
            (op, 0.0) for op in se.OPERATORS))


# -- evolution ----------------------------------------------------------------

def test_elitism_returns_perfect_seed(emr_grammar, emr_ctx, emr_acl, emr_rule):
    eval_ctx = _eval_ctx(emr_ctx, emr_grammar, emr_acl.au)
    target = se.genome_of_rule(emr_rule, emr_grammar)
    cfg = se.SearchConfig(population_size=20, generations=5)
    rng = np.random.default_rng(0)
    seed = SRATuple("doc1", "cons1", "view")
    pop = [target] + se.seed_population(seed, emr_grammar, emr_ctx, cfg, rng,
                                        FS({"view"}))[:19]
    best, fit, valid = se.evolve(pop, eval_ctx, cfg, rng, seed, FS({"view"}))
    assert valid
    assert (fit.far, fit.frr) == (0, 0)
    assert fit.wsc <= emr_rule.wsc


def test_best_fitness_monotone(emr_grammar, emr_ctx, emr_acl):
    eval_ctx = _eval_ctx(emr_ctx, emr_grammar, emr_acl.au)
    cfg = se.SearchConfig(population_size=30, generations=15)
    rng = np.random.default_rng(3)
    seed = SRATuple("doc1", "cons1", "view")
    pop = se.seed_population(seed, emr_grammar, emr_ctx, cfg, rng, FS({"view"}))
    trajectory = []
    se.evolve(pop, eval_ctx, cfg, rng, seed, FS({"view"}),
              trace=lambda gen, best: trajectory.append(best))
    assert trajectory == sorted(trajectory, reverse=True) or all(
        a >= b for a, b in zip(trajectory, trajectory[1:]))


def test_evolve_finds_planted_rule(emr_cm, emr_om, emr_acl, emr_grammar, emr_ctx):
    # the planted policy is recoverable within a modest budget
    eval_ctx = _eval_ctx(emr_ctx, emr_grammar, emr_acl.au)
    cfg = se.SearchConfig(population_size=60, generations=40)
    rng = np.random.default_rng(7)
    seed = SRATuple("doc1", "cons1", "view")
    pop = se.seed_population(seed, emr_grammar, emr_ctx, cfg, rng, FS({"view"}))
    best, fit, valid = se.evolve(pop, eval_ctx, cfg, rng, seed, FS({"view"}))
    assert valid and fit.far == 0
    rule = best.to_rule(emr_grammar)
    assert m.rule_meaning(emr_om, rule) <= emr_acl.au


def test_id_fallback_rule(emr_om):
    seed = SRATuple("doc1", "cons1", "view")
    rule = se.id_fallback_rule(emr_om, seed)
    assert m.rule_meaning(emr_om, rule) == FS({seed})
    assert se.id_count(rule) == 2
