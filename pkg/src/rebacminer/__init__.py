"""Relationship-based access control policy mining.

Mines ReBAC rules from ACL-style authorization tuples using neural-network
feature selection and grammar-constrained evolutionary search, plus a
synthetic benchmark generator and policy similarity metrics.
"""

from rebacminer._core import BACKEND
from rebacminer.metrics import SimilarityReport, similarity_report
from rebacminer.miner import ALGORITHMS, MinerConfig, MiningReport, mine
from rebacminer.model import (
    ACLPolicy,
    AtomicCondition,
    AtomicConstraint,
    ClassDecl,
    ClassModel,
    FieldDecl,
    Object,
    ObjectModel,
    ReBACPolicy,
    Rule,
    SRATuple,
)
from rebacminer.synth import GeneratedBundle, SynthConfig, generate_bundle

__version__ = "0.1.0"

__all__ = [
    "ACLPolicy", "ALGORITHMS", "AtomicCondition", "AtomicConstraint",
    "BACKEND", "ClassDecl", "ClassModel", "FieldDecl", "GeneratedBundle",
    "MinerConfig", "MiningReport", "Object", "ObjectModel", "ReBACPolicy",
    "Rule", "SRATuple", "SimilarityReport", "SynthConfig", "generate_bundle",
    "mine", "similarity_report",
]
