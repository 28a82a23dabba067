"""Adapted epsilon-greedy selection over the search tree.

Domain adaptations on top of the canonical rule:
  * root throttling  -- the root becomes ineligible once it has n_root direct
    children (first-hop edits stop paying off quickly);
  * dead-branch pruning -- a node with more than n_child children, all of which
    failed, is ineligible (stop feeding a branch that only produces failures);
  * leaf-biased exploration -- the epsilon branch draws uniformly from eligible
    childless nodes rather than from everything.

All functions are pure over a tree snapshot plus an explicit random.Random
stream owned by the caller.  Stream discipline for select():
one uniform variate decides the branch; the exploration branch always consumes
exactly one more for the leaf draw.  The greedy branch consumes nothing further.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .tree import INFINITY, NodeId, SearchTree, score

ROOT_THROTTLED = "root_throttled"
DEAD_BRANCH = "dead_branch"


class PolicyExhausted(RuntimeError):
    """No node is eligible for selection; the run cannot continue."""


@dataclass(frozen=True)
class PolicyParams:
    epsilon: float = 0.3
    n_root: int = 5
    n_child: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.n_root < 1 or self.n_child < 1:
            raise ValueError("n_root and n_child must be positive")


@dataclass(frozen=True)
class EligibilityReport:
    eligible: set[NodeId]
    ineligible_reasons: dict[NodeId, str]


@dataclass(frozen=True)
class SelectionInfo:
    branch: str  # "explore" | "exploit"
    candidates: tuple[NodeId, ...] = field(default=())


def is_root_throttled(tree: SearchTree, params: PolicyParams) -> bool:
    return len(tree.children(tree.root)) >= params.n_root


def is_dead_branch(tree: SearchTree, node_id: NodeId, params: PolicyParams) -> bool:
    children = tree.children(node_id)
    if len(children) <= params.n_child:
        return False
    return all(score(tree.node(c)) == INFINITY for c in children)


def eligible(tree: SearchTree, params: PolicyParams) -> EligibilityReport:
    """Every node, minus a throttled root, minus dead branches.

    Failed nodes stay eligible: selecting one routes the attempt to the debug
    agent rather than the planner.
    """
    ok: set[NodeId] = set()
    reasons: dict[NodeId, str] = {}
    for node_id in tree.nodes:
        if node_id == tree.root and is_root_throttled(tree, params):
            reasons[node_id] = ROOT_THROTTLED
        elif is_dead_branch(tree, node_id, params):
            reasons[node_id] = DEAD_BRANCH
        else:
            ok.add(node_id)
    return EligibilityReport(eligible=ok, ineligible_reasons=reasons)


def expandable_leaves(tree: SearchTree, params: PolicyParams) -> set[NodeId]:
    """Eligible childless nodes; falls back to the whole eligible set when none exist."""
    report = eligible(tree, params)
    leaves = {n for n in report.eligible if not tree.children(n)}
    return leaves if leaves else set(report.eligible)


def select_with_info(
    tree: SearchTree, params: PolicyParams, rng: random.Random
) -> tuple[NodeId, SelectionInfo]:
    """Pick the node to refine next and report which branch fired."""
    report = eligible(tree, params)
    if not report.eligible:
        raise PolicyExhausted("no eligible node to select")
    u = rng.random()
    if u < params.epsilon:
        leaves = sorted(expandable_leaves(tree, params))
        draw = rng.random()
        idx = min(int(draw * len(leaves)), len(leaves) - 1)
        return leaves[idx], SelectionInfo(branch="explore", candidates=tuple(leaves))
    chosen = min(report.eligible, key=lambda n: (score(tree.node(n)), n))
    return chosen, SelectionInfo(branch="exploit", candidates=(chosen,))


def select(tree: SearchTree, params: PolicyParams, rng: random.Random) -> NodeId:
    node_id, _ = select_with_info(tree, params, rng)
    return node_id
