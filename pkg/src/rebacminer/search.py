"""Grammar-constrained evolutionary search for candidate rules.

Rules are derivation trees of a shallow grammar specialized to one
(subjectType, resourceType) pair: each of the three atom parts (subject
condition, resource condition, constraint) derives a list of atom
terminals drawn from pre-computed pools.  Genomes store the chosen
terminal indices per part; the genetic operators manipulate those
subtrees directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from rebacminer import model as m
from rebacminer.bitmaps import PairContext
from rebacminer.features import (
    CONSTRAINT,
    RESOURCE_CONDITION,
    SUBJECT_CONDITION,
    Feature,
    FeatureLimits,
    enumerate_features,
)
from rebacminer.model import Rule, SRATuple

_MAX_SAMPLED_ATOMS = 3

OPERATORS = ("single", "double", "action", "simplify", "crossover")
DEFAULT_OPERATOR_WEIGHTS = {
    "single": 3.0,
    "double": 2.0,
    "action": 1.0,
    "simplify": 2.0,
    "crossover": 2.0,
}


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 100
    generations: int = 100
    improvement_trials: int = 50  # mutation attempts per rule in phase 2
    tournament_size: int = 2
    random_seed_fraction: float = 0.2
    operator_weights: tuple = tuple(sorted(DEFAULT_OPERATOR_WEIGHTS.items()))

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        weights = dict(self.operator_weights)
        if set(weights) != set(OPERATORS):
            raise ValueError(f"operator_weights must cover {OPERATORS}")
        if any(w < 0 for w in weights.values()) or not any(weights.values()):
            raise ValueError("operator weights must be non-negative, not all zero")


class Grammar:
    """Atom terminal pools for one type pair, optionally restricted to a
    useful-feature set."""

    def __init__(self, subject_type: str, resource_type: str,
                 features: list[Feature], actions: list[str]):
        self.subject_type = subject_type
        self.resource_type = resource_type
        self.s_atoms = [f.payload for f in features if f.kind == SUBJECT_CONDITION]
        self.r_atoms = [f.payload for f in features if f.kind == RESOURCE_CONDITION]
        self.c_atoms = [f.payload for f in features if f.kind == CONSTRAINT]
        self.actions = sorted(actions)
        if not (self.s_atoms or self.r_atoms or self.c_atoms):
            raise GrammarError(
                f"no atoms for ({subject_type}, {resource_type}): nothing to mine")

    @property
    def n_atoms(self) -> int:
        return len(self.s_atoms) + len(self.r_atoms) + len(self.c_atoms)

    def pool(self, part: str) -> list:
        return {"sc": self.s_atoms, "rc": self.r_atoms, "con": self.c_atoms}[part]


def specialize_grammar(cm, om, limits: FeatureLimits, cs: str, cr: str,
                       actions: list[str],
                       restrict_to: Optional[list[Feature]] = None,
                       allowed_constraint_ops: Optional[frozenset] = None) -> Grammar:
    if restrict_to is not None:
        feats = restrict_to
    else:
        feats = enumerate_features(cm, om, limits, cs, cr,
                                   allowed_constraint_ops=allowed_constraint_ops)
    return Grammar(cs, cr, feats, actions)


@dataclass(frozen=True)
class RuleGenome:
    """Derivation choices: sorted terminal indices per part plus actions."""
    sc: tuple[int, ...]
    rc: tuple[int, ...]
    con: tuple[int, ...]
    acts: frozenset

    def key(self):
        return (self.sc, self.rc, self.con, tuple(sorted(self.acts)))

    def part(self, name: str) -> tuple[int, ...]:
        return getattr(self, {"sc": "sc", "rc": "rc", "con": "con"}[name])

    def with_part(self, name: str, idxs) -> "RuleGenome":
        norm = tuple(sorted(set(idxs)))
        return replace(self, **{name: norm})

    def to_rule(self, g: Grammar) -> Rule:
        return Rule(
            g.subject_type,
            frozenset(g.s_atoms[i] for i in self.sc),
            g.resource_type,
            frozenset(g.r_atoms[i] for i in self.rc),
            frozenset(g.c_atoms[i] for i in self.con),
            self.acts,
        )

    def n_atoms(self) -> int:
        return len(self.sc) + len(self.rc) + len(self.con)


def genome_of_rule(rule: Rule, g: Grammar) -> RuleGenome:
    """Parse a rule back into the grammar; raises if an atom is not a
    terminal of the grammar."""
    def find(pool, atoms):
        idxs = []
        for a in atoms:
            try:
                idxs.append(pool.index(a))
            except ValueError:
                raise GrammarError(f"atom {a} not derivable in grammar") from None
        return tuple(sorted(idxs))

    return RuleGenome(
        find(g.s_atoms, rule.subject_condition),
        find(g.r_atoms, rule.resource_condition),
        find(g.c_atoms, rule.constraint),
        rule.actions,
    )


# -- fitness ---------------------------------------------------------------

@dataclass(frozen=True)
class Fitness:
    far: int
    frr: int
    idc: int
    wsc: int

    def as_tuple(self):
        return (self.far, self.frr, self.idc, self.wsc)


def id_count(rule: Rule) -> int:
    """2 if both conditions use an atomic condition with path "id", 1 if
    exactly one does, else 0."""
    sid = any(c.path == ("id",) for c in rule.subject_condition)
    rid = any(c.path == ("id",) for c in rule.resource_condition)
    return int(sid) + int(rid)


class EvalContext:
    """Per-search fitness evaluation against the current uncovered set."""

    def __init__(self, ctx: PairContext, grammar: Grammar,
                 uncov_masks: dict, total_uncov: int):
        self.ctx = ctx
        self.grammar = grammar
        self.uncov_masks = uncov_masks  # action -> bitmap over this pair space
        self.total_uncov = total_uncov
        self._zero = np.zeros(ctx.n_words, dtype=np.uint64)
        self._cache: dict = {}

    def _uncov(self, action: str) -> np.ndarray:
        return self.uncov_masks.get(action, self._zero)

    def genome_atoms(self, genome: RuleGenome) -> list:
        g = self.grammar
        atoms: list = [("s", g.s_atoms[i]) for i in genome.sc]
        atoms += [("r", g.r_atoms[i]) for i in genome.rc]
        atoms += [g.c_atoms[i] for i in genome.con]
        return atoms

    def evaluate(self, genome: RuleGenome):
        """Return (Fitness, far_against_full_AU, cover_mask)."""
        key = genome.key()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        cover = self.ctx.atoms_cover_mask(self.genome_atoms(genome))
        far = 0
        far_full = 0
        covered_uncov = 0
        for a in genome.acts:
            far += self.ctx.count_andnot(cover, self._uncov(a))
            far_full += self.ctx.count_andnot(cover, self.ctx.au_mask(a))
            covered_uncov += self.ctx.count_and(cover, self._uncov(a))
        frr = self.total_uncov - covered_uncov
        rule = genome.to_rule(self.grammar)
        fit = Fitness(far, frr, id_count(rule), rule.wsc)
        result = (fit, far_full, cover)
        self._cache[key] = result
        return result

    def covered_uncovered(self, genome: RuleGenome) -> int:
        _, _, cover = self.evaluate(genome)
        return sum(self.ctx.count_and(cover, self._uncov(a)) for a in genome.acts)


# -- sampling and operators --------------------------------------------------

def _sample_part(rng: np.random.Generator, pool_size: int) -> tuple[int, ...]:
    if pool_size == 0:
        return ()
    out = set()
    while len(out) < _MAX_SAMPLED_ATOMS and rng.random() < 0.5:
        out.add(int(rng.integers(pool_size)))
    return tuple(sorted(out))


def random_genome(g: Grammar, rng: np.random.Generator, action: str) -> RuleGenome:
    return RuleGenome(
        _sample_part(rng, len(g.s_atoms)),
        _sample_part(rng, len(g.r_atoms)),
        _sample_part(rng, len(g.c_atoms)),
        frozenset({action}),
    )


def _regenerate(part: tuple[int, ...], pool_size: int,
                rng: np.random.Generator) -> tuple[int, ...]:
    # keep a random prefix of the derivation, re-derive the tail
    cut = int(rng.integers(len(part) + 1))
    return tuple(sorted(set(part[:cut]) | set(_sample_part(rng, pool_size))))


def mutate_single(genome: RuleGenome, g: Grammar, rng) -> RuleGenome:
    part = ("sc", "rc", "con")[int(rng.integers(3))]
    return genome.with_part(part, _regenerate(genome.part(part), len(g.pool(part)), rng))


def mutate_double(genome: RuleGenome, g: Grammar, rng) -> RuleGenome:
    parts = ["sc", "rc", "con"]
    i = int(rng.integers(3))
    j = int(rng.integers(2))
    first = parts.pop(i)
    second = parts[j]
    out = genome.with_part(first, _regenerate(genome.part(first), len(g.pool(first)), rng))
    return out.with_part(second, _regenerate(out.part(second), len(g.pool(second)), rng))


def mutate_action(genome: RuleGenome, g: Grammar, rng,
                  seed_actions: frozenset, seed_action: str) -> RuleGenome:
    addable = sorted(seed_actions - genome.acts)
    removable = sorted(genome.acts - {seed_action})
    do_add = bool(addable) and (not removable or rng.random() < 0.5)
    if do_add:
        a = addable[int(rng.integers(len(addable)))]
        return replace(genome, acts=genome.acts | {a})
    if removable:
        a = removable[int(rng.integers(len(removable)))]
        return replace(genome, acts=genome.acts - {a})
    return genome


def mutate_simplify(genome: RuleGenome, g: Grammar, rng) -> RuleGenome:
    slots = (
        [("sc", i) for i in genome.sc]
        + [("rc", i) for i in genome.rc]
        + [("con", i) for i in genome.con]
    )
    if not slots:
        return genome
    part, idx = slots[int(rng.integers(len(slots)))]
    return genome.with_part(part, tuple(i for i in genome.part(part) if i != idx))


def crossover(g1: RuleGenome, g2: RuleGenome, g: Grammar, rng) -> RuleGenome:
    part = ("sc", "rc", "con")[int(rng.integers(3))]
    p1, p2 = g1.part(part), g2.part(part)
    cut1 = int(rng.integers(len(p1) + 1))
    cut2 = int(rng.integers(len(p2) + 1))
    return g1.with_part(part, p1[:cut1] + p2[cut2:])


def apply_operator(op: str, genome: RuleGenome, mate: Optional[RuleGenome],
                   g: Grammar, rng, seed_actions: frozenset,
                   seed_action: str) -> RuleGenome:
    if op == "single":
        return mutate_single(genome, g, rng)
    if op == "double":
        return mutate_double(genome, g, rng)
    if op == "action":
        return mutate_action(genome, g, rng, seed_actions, seed_action)
    if op == "simplify":
        return mutate_simplify(genome, g, rng)
    if op == "crossover":
        return crossover(genome, mate if mate is not None else genome, g, rng)
    raise ValueError(f"unknown operator {op!r}")


# -- population and evolution -------------------------------------------------

def seed_population(seed: SRATuple, g: Grammar, ctx: PairContext,
                    cfg: SearchConfig, rng: np.random.Generator,
                    seed_actions: frozenset) -> list[RuleGenome]:
    """One single-constraint candidate per constraint terminal satisfied by
    the seed pair, the atom-free candidate, random variants of those, and
    fully random genomes, filled to the population size."""
    s, r, a = seed.subject, seed.resource, seed.action
    base: list[RuleGenome] = [RuleGenome((), (), (), frozenset({a}))]
    for ci, con in enumerate(g.c_atoms):
        if m.satisfies_constraint(ctx.om, s, r, [con]):
            base.append(RuleGenome((), (), (ci,), frozenset({a})))

    population = list(base[: cfg.population_size])
    n_random = int(round(cfg.random_seed_fraction * cfg.population_size))
    weights = dict(cfg.operator_weights)
    names = [op for op in OPERATORS if weights[op] > 0]
    probs = np.array([weights[op] for op in names], dtype=float)
    probs /= probs.sum()
    while len(population) < cfg.population_size - n_random:
        parent = base[int(rng.integers(len(base)))]
        op = names[int(rng.choice(len(names), p=probs))]
        mate = base[int(rng.integers(len(base)))]
        population.append(
            apply_operator(op, parent, mate, g, rng, seed_actions, a))
    while len(population) < cfg.population_size:
        population.append(random_genome(g, rng, a))
    return population


def _tournament(population, fits, cfg: SearchConfig, rng) -> RuleGenome:
    best = None
    best_key = None
    for _ in range(cfg.tournament_size):
        i = int(rng.integers(len(population)))
        key = (fits[i].as_tuple(), population[i].key())
        if best_key is None or key < best_key:
            best, best_key = population[i], key
    return best


def evolve(population: list[RuleGenome], eval_ctx: EvalContext,
           cfg: SearchConfig, rng: np.random.Generator,
           seed: SRATuple, seed_actions: frozenset,
           trace: Optional[Callable] = None):
    """Generational loop with elitism; returns (genome, fitness, valid).

    Only genomes whose meaning stays within AU (zero over-grant) are valid;
    if none is found the overall fitness-best genome is returned flagged
    invalid.
    """
    weights = dict(cfg.operator_weights)
    names = [op for op in OPERATORS if weights[op] > 0]
    probs = np.array([weights[op] for op in names], dtype=float)
    probs /= probs.sum()

    best_valid = None  # (fit_tuple, genome_key, genome)
    best_any = None

    def observe(genome):
        nonlocal best_valid, best_any
        fit, far_full, _ = eval_ctx.evaluate(genome)
        entry = (fit.as_tuple(), genome.key(), genome, fit)
        if best_any is None or entry[:2] < best_any[:2]:
            best_any = entry
        if far_full == 0 and (best_valid is None or entry[:2] < best_valid[:2]):
            best_valid = entry
        return fit

    fits = [observe(genome) for genome in population]

    for gen in range(cfg.generations):
        elite_i = min(range(len(population)),
                      key=lambda i: (fits[i].as_tuple(), population[i].key()))
        new_pop = [population[elite_i]]
        while len(new_pop) < cfg.population_size:
            op = names[int(rng.choice(len(names), p=probs))]
            parent = _tournament(population, fits, cfg, rng)
            mate = _tournament(population, fits, cfg, rng) if op == "crossover" else None
            new_pop.append(apply_operator(op, parent, mate, eval_ctx.grammar,
                                          rng, seed_actions, seed.action))
        population = new_pop
        fits = [observe(genome) for genome in population]
        if trace is not None:
            trace(gen, min(f.as_tuple() for f in fits))

    if best_valid is not None:
        return best_valid[2], best_valid[3], True
    return best_any[2], best_any[3], False


def id_fallback_rule(om, seed: SRATuple) -> Rule:
    """Single-tuple rule on id conditions; guarantees phase-1 progress."""
    return Rule(
        om.type_of(seed.subject),
        frozenset({m.AtomicCondition(("id",), m.OP_IN, frozenset({seed.subject}))}),
        om.type_of(seed.resource),
        frozenset({m.AtomicCondition(("id",), m.OP_IN, frozenset({seed.resource}))}),
        frozenset(),
        frozenset({seed.action}),
    )
