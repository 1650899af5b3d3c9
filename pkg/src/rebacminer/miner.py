"""Mining drivers: plain evolutionary search (SEA), one-shot feature
selection (FS-SEA1), and the iterated pipeline (FS-SEA*).

All three produce a policy whose meaning equals AU exactly; the report
carries per-iteration statistics and the consistency verdict.
"""

from __future__ import annotations

import hashlib
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from rebacminer import features as fs
from rebacminer import improve
from rebacminer import model as m
from rebacminer import nn
from rebacminer import search as se
from rebacminer.bitmaps import PairContext
from rebacminer.features import FeatureLimits, TypedTriple
from rebacminer.model import ACLPolicy, ReBACPolicy, Rule, SRATuple

ALGORITHMS = ("sea", "fs-sea1", "fs-sea-star")
DEFAULT_F_U = {"sea": 1.0, "fs-sea1": 0.15, "fs-sea-star": 0.05}


@dataclass(frozen=True)
class MinerConfig:
    algorithm: str = "fs-sea-star"
    f_u: Optional[float] = None  # None -> per-algorithm default
    train: nn.TrainConfig = nn.TrainConfig()
    search: se.SearchConfig = se.SearchConfig()
    limits: FeatureLimits = FeatureLimits()
    max_outer_iterations: int = 20
    seed: int = 0
    allowed_constraint_ops: Optional[frozenset] = None  # None -> all operators

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.f_u is not None and not 0 < self.f_u <= 1:
            raise ValueError("f_u must be in (0, 1]")

    @property
    def effective_f_u(self) -> float:
        return self.f_u if self.f_u is not None else DEFAULT_F_U[self.algorithm]


@dataclass
class MiningReport:
    algorithm: str
    seed: int
    rules: list[Rule]
    consistent: bool
    elapsed: float
    iterations: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def wsc(self) -> int:
        return sum(r.wsc for r in self.rules)


def _substream(seed: int, label: str, *extra: int) -> np.random.Generator:
    digest = hashlib.sha256(label.encode()).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng([seed, key, *extra])


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("REBAC_MINER_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    workers = _max_workers()
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class MiningState:
    """Candidate policy, uncovered-tuple bookkeeping, and pair contexts."""

    def __init__(self, acl: ACLPolicy):
        self.acl = acl
        self.rules: list[Rule] = []
        self.uncov: set = set(acl.au)
        self._ctxs: dict[tuple[str, str], PairContext] = {}

    def ctx(self, cs: str, cr: str) -> PairContext:
        key = (cs, cr)
        if key not in self._ctxs:
            self._ctxs[key] = PairContext(self.acl.om, cs, cr, self.acl.au)
        return self._ctxs[key]

    def uncov_masks(self, ctx: PairContext) -> dict:
        masks: dict = {}
        om = self.acl.om
        for t in self.uncov:
            if (om.type_of(t.subject) == ctx.subject_type
                    and om.type_of(t.resource) == ctx.resource_type):
                mask = masks.get(t.action)
                if mask is None:
                    mask = np.zeros(ctx.n_words, dtype=np.uint64)
                    masks[t.action] = mask
                ctx._set_bit(mask, t.subject, t.resource)
        return masks

    def add_rule(self, rule: Rule) -> int:
        """Add ``rule`` to the candidate policy; returns how many
        previously-uncovered tuples it covers."""
        ctx = self.ctx(rule.subject_type, rule.resource_type)
        meaning = ctx.rule_meaning(rule)
        newly = len(self.uncov & meaning)
        self.rules.append(rule)
        self.uncov -= meaning
        return newly

    def next_seed(self) -> SRATuple:
        om = self.acl.om
        return min(
            self.uncov,
            key=lambda t: (om.type_of(t.subject), om.type_of(t.resource),
                           t.action, t.subject, t.resource),
        )

    def seed_actions(self, seed: SRATuple) -> frozenset:
        """Actions the seed subject can perform on the seed resource per AU."""
        return frozenset(
            t.action for t in self.acl.au
            if t.subject == seed.subject and t.resource == seed.resource
        )


def _triple_label(triple: TypedTriple) -> str:
    return f"{triple.subject_type}/{triple.resource_type}/{triple.action}"


def _triple_of(om, t: SRATuple) -> TypedTriple:
    return TypedTriple(om.type_of(t.subject), om.type_of(t.resource), t.action)


def _pair_actions(acl: ACLPolicy, cs: str, cr: str) -> list[str]:
    om = acl.om
    return sorted({
        t.action for t in acl.au
        if om.type_of(t.subject) == cs and om.type_of(t.resource) == cr
    })


class GrammarCache:
    """Unrestricted grammars per type pair (shared by SEA and phase 2)."""

    def __init__(self, acl: ACLPolicy, cfg: MinerConfig):
        self.acl = acl
        self.cfg = cfg
        self._grammars: dict[tuple[str, str], se.Grammar] = {}

    def get(self, cs: str, cr: str) -> se.Grammar:
        key = (cs, cr)
        if key not in self._grammars:
            self._grammars[key] = se.specialize_grammar(
                self.acl.cm, self.acl.om, self.cfg.limits, cs, cr,
                _pair_actions(self.acl, cs, cr),
                allowed_constraint_ops=self.cfg.allowed_constraint_ops,
            )
        return self._grammars[key]

    def known(self) -> dict:
        return dict(self._grammars)


def _search_one(state: MiningState, seed: SRATuple, grammar: se.Grammar,
                cfg: MinerConfig, rng: np.random.Generator):
    """One evolutionary search seeded by ``seed``; returns (rule, newly,
    valid) where newly counts the uncovered tuples the rule would cover."""
    ctx = state.ctx(grammar.subject_type, grammar.resource_type)
    eval_ctx = se.EvalContext(ctx, grammar, state.uncov_masks(ctx), len(state.uncov))
    seed_actions = state.seed_actions(seed)
    population = se.seed_population(seed, grammar, ctx, cfg.search, rng, seed_actions)
    genome, _, valid = se.evolve(population, eval_ctx, cfg.search, rng,
                                 seed, seed_actions)
    rule = genome.to_rule(grammar)
    newly = eval_ctx.covered_uncovered(genome)
    return rule, newly, valid


def phase1(state: MiningState, cfg: MinerConfig, grammar_provider,
           stats: list) -> None:
    """Add one rule per seed tuple until AU is covered; a seed whose search
    yields no valid progress falls back to the id-based single-tuple rule."""
    step = 0
    while state.uncov:
        seed = state.next_seed()
        triple = _triple_of(state.acl.om, seed)
        grammar = grammar_provider(triple)
        rng = _substream(cfg.seed, f"phase1/{triple.sort_key()}", step)
        rule, newly, valid = _search_one(state, seed, grammar, cfg, rng)
        if not valid or newly == 0:
            rule = se.id_fallback_rule(state.acl.om, seed)
        covered = state.add_rule(rule)
        stats.append({"uncovered": len(state.uncov), "rules_added": 1,
                      "newly_covered": covered})
        step += 1


def _feature_select(acl: ACLPolicy, triple: TypedTriple, cfg: MinerConfig,
                    positives: set, warnings: list[str]):
    """Run FS for one triple; returns (useful features or None for
    unrestricted, training accuracy or None)."""
    feats = fs.enumerate_features(
        acl.cm, acl.om, cfg.limits, triple.subject_type, triple.resource_type,
        allowed_constraint_ops=cfg.allowed_constraint_ops)
    pos_au = frozenset(
        t for t in positives
        if _triple_of(acl.om, t) == triple
    )
    vectors = fs.build_vectors(acl.om, pos_au, triple, feats)
    # already-covered permitted pairs are neither positive nor negative here;
    # drop them so the network never learns to reject true permissions
    au_pairs = {(t.subject, t.resource) for t in acl.au
                if t.action == triple.action
                and _triple_of(acl.om, t) == triple}
    vectors = [v for v in vectors
               if v.label or (v.subject, v.resource) not in au_pairs]
    # need both classes present; otherwise the class-weighted loss degenerates
    if not any(v.label for v in vectors) or all(v.label for v in vectors):
        return None, None
    feats, vectors = fs.prune_constant_features(vectors, feats)
    feats, vectors, _ = fs.prune_equivalent_features(vectors, feats)
    if not feats:
        return None, None
    tseed = _substream(cfg.seed, f"nn/{triple.sort_key()}").integers(2**32)
    result = nn.train(vectors, replace(cfg.train, seed=int(tseed)))
    if not result.converged:
        warnings.append(
            f"NN for {_triple_label(triple)} stopped at accuracy {result.accuracy:.4f} "
            f"after {result.iterations} iterations")
    scores = nn.score_features(result.weights)
    useful = nn.select_useful(scores, feats, cfg.effective_f_u)
    return useful.features, result.accuracy


def _finish(state: MiningState, cfg: MinerConfig, cache: GrammarCache,
            stats: list, warnings: list[str], t0: float,
            algorithm: str) -> MiningReport:
    rng = _substream(cfg.seed, "improve")
    grammars = {}
    for rule in state.rules:
        key = (rule.subject_type, rule.resource_type)
        if key not in grammars:
            grammars[key] = cache.get(*key)
    rules = improve.improvement_phase(state.rules, state.acl, cfg.search,
                                      grammars, rng, mcse=cfg.limits.mcse)
    policy = ReBACPolicy(state.acl.cm, state.acl.om, state.acl.actions,
                         frozenset(rules))
    consistent = m.is_consistent(policy, state.acl)
    return MiningReport(
        algorithm=algorithm,
        seed=cfg.seed,
        rules=sorted(rules, key=Rule.sort_key),
        consistent=consistent,
        elapsed=time.perf_counter() - t0,
        iterations=stats,
        warnings=warnings,
    )


def run_sea(acl: ACLPolicy, cfg: MinerConfig) -> MiningReport:
    t0 = time.perf_counter()
    state = MiningState(acl)
    cache = GrammarCache(acl, cfg)
    stats: list = []
    phase1(state, cfg,
           lambda triple: cache.get(triple.subject_type, triple.resource_type),
           stats)
    return _finish(state, cfg, cache, stats, [], t0, "sea")


def run_fssea1(acl: ACLPolicy, cfg: MinerConfig) -> MiningReport:
    t0 = time.perf_counter()
    state = MiningState(acl)
    cache = GrammarCache(acl, cfg)
    warnings: list[str] = []
    stats: list = []

    triples = fs.triples_of(acl.au, acl.om)
    selected = _map(
        lambda triple: _feature_select(acl, triple, cfg, set(acl.au), warnings),
        triples)
    restricted: dict[TypedTriple, se.Grammar] = {}
    for triple, (useful, accuracy) in zip(triples, selected):
        if useful is None:
            restricted[triple] = cache.get(triple.subject_type, triple.resource_type)
        else:
            restricted[triple] = se.specialize_grammar(
                acl.cm, acl.om, cfg.limits,
                triple.subject_type, triple.resource_type,
                _pair_actions(acl, triple.subject_type, triple.resource_type),
                restrict_to=useful)
        stats.append({"triple": _triple_label(triple), "nn_accuracy": accuracy,
                      "useful_features": None if useful is None else len(useful)})

    phase1(state, cfg, lambda triple: restricted[triple], stats)
    return _finish(state, cfg, cache, stats, warnings, t0, "fs-sea1")


def run_fssea_star(acl: ACLPolicy, cfg: MinerConfig) -> MiningReport:
    t0 = time.perf_counter()
    state = MiningState(acl)
    cache = GrammarCache(acl, cfg)
    warnings: list[str] = []
    stats: list = []

    for outer in range(cfg.max_outer_iterations):
        if not state.uncov:
            break
        before = len(state.uncov)
        triples = sorted({_triple_of(acl.om, t) for t in state.uncov},
                         key=TypedTriple.sort_key)
        # FS focuses on the still-uncovered tuples; negatives stay all
        # pairs outside AU, so covered permissions are never relabeled.
        selected = _map(
            lambda triple: _feature_select(acl, triple, cfg, state.uncov, warnings),
            triples)
        accuracies = {}
        candidates = []
        for triple, (useful, accuracy) in zip(triples, selected):
            accuracies[_triple_label(triple)] = accuracy
            if useful is None:
                grammar = cache.get(triple.subject_type, triple.resource_type)
            else:
                grammar = se.specialize_grammar(
                    acl.cm, acl.om, cfg.limits,
                    triple.subject_type, triple.resource_type,
                    _pair_actions(acl, triple.subject_type, triple.resource_type),
                    restrict_to=useful)
            seed = min(
                (t for t in state.uncov if _triple_of(acl.om, t) == triple),
                key=SRATuple.sort_key)
            rng = _substream(cfg.seed, f"star/{triple.sort_key()}", outer)
            rule, newly, valid = _search_one(state, seed, grammar, cfg, rng)
            if valid and newly > 0:
                candidates.append(rule)
        added = 0
        for rule in candidates:
            if state.add_rule(rule) > 0:
                added += 1
            else:
                state.rules.pop()  # rule became redundant within this batch
        stats.append({"outer_iteration": outer, "uncovered": len(state.uncov),
                      "rules_added": added, "nn_accuracies": accuracies})
        if len(state.uncov) >= before:
            warnings.append("no progress in outer iteration; "
                            "falling back to unrestricted search")
            break

    if state.uncov:
        phase1(state, cfg,
               lambda triple: cache.get(triple.subject_type, triple.resource_type),
               stats)
    return _finish(state, cfg, cache, stats, warnings, t0, "fs-sea-star")


def mine(acl: ACLPolicy, cfg: MinerConfig) -> MiningReport:
    runner = {"sea": run_sea, "fs-sea1": run_fssea1,
              "fs-sea-star": run_fssea_star}[cfg.algorithm]
    return runner(acl, cfg)
