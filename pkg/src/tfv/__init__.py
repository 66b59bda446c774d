"""Tree-formed verification data: Merkle trees built in a bank of protected registers."""

from .builder import (
    Forest,
    ForestPlan,
    TreeBuilder,
    build_tree,
    capacity,
    extend_count,
    formation_cost_bound,
    plan_forest,
)
from .digest import NIL, HashAlgorithm, extend, hash_leaf
from .registers import RegisterBank
from .sml import SmlRecord, SmlTree, deserialize, expand_to_full, locate, node_at, serialize
from .validate import build_reference, classify, diagnostic_validate, linear_validate

__all__ = [
    "Forest", "ForestPlan", "TreeBuilder", "build_tree", "capacity", "extend_count",
    "formation_cost_bound", "plan_forest", "NIL", "HashAlgorithm", "extend", "hash_leaf",
    "RegisterBank", "SmlRecord", "SmlTree", "deserialize", "expand_to_full", "locate",
    "node_at", "serialize", "build_reference", "classify", "diagnostic_validate",
    "linear_validate",
]
