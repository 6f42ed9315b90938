"""Conditional independence and causal effect estimation over joined relations."""
from .relcore import (
    Relation, count, empirical_ci, entropy_measures, functional_dependency_holds,
    natural_join, probability, project, read_csv, validate_foreign_key, write_csv,
)
from .gaxioms import CISet, CIStatement, ci, closure, derivable, parse_ci
from .joinprop import JoinSpec, EmvdStatement, infer_join_cis, propagate_ci
from .ugm import UndirectedGraph, separated, union_imap, verify_map

__all__ = [
    "Relation", "count", "empirical_ci", "entropy_measures", "functional_dependency_holds",
    "natural_join", "probability", "project", "read_csv", "validate_foreign_key", "write_csv",
    "CISet", "CIStatement", "ci", "closure", "derivable", "parse_ci",
    "JoinSpec", "EmvdStatement", "infer_join_cis", "propagate_ci",
    "UndirectedGraph", "separated", "union_imap", "verify_map",
]
