"""Shared test helpers: outcome builders, the six-node example tree, random
trees, and independent brute-force evaluations of the window formulas."""

from __future__ import annotations

import random

from kernelsearch.tree import EvaluationOutcome, SearchTree, init_tree


def ok(runtime_ms: float) -> EvaluationOutcome:
    return EvaluationOutcome(compiled=True, correct=True, runtime_ms=runtime_ms)


def fail(compiled: bool = False, compiler_log: str = "boom", execution_log: str = "") -> EvaluationOutcome:
    return EvaluationOutcome(
        compiled=compiled, correct=False, compiler_log=compiler_log, execution_log=execution_log
    )


def build_example_tree() -> SearchTree:
    """The worked example: root 0 -> {1,2}; 1 -> {3,4}; 2 -> {5}.

    Scores: 0:100, 1:90, 2:inf, 3:80, 4:inf, 5:70.
    """
    tree = init_tree("src0", ok(100.0))
    tree.add_child(0, "src1", "p1", "s1", ok(90.0))
    tree.add_child(0, "src2", "p2", "s2", fail())
    tree.add_child(1, "src3", "p3", "s3", ok(80.0))
    tree.add_child(1, "src4", "p4", "s4", fail(compiled=True, execution_log="wrong values"))
    tree.add_child(2, "src5", "p5", "s5", ok(70.0))
    return tree


def random_tree(rng: random.Random, max_nodes: int = 40) -> SearchTree:
    """Random tree with unique kernel sources and mixed failure statuses."""
    tree = init_tree("src0", ok(100.0))
    n = rng.randint(1, max_nodes - 1)
    for k in range(1, n + 1):
        parent = rng.randrange(k)  # any existing node
        roll = rng.random()
        if roll < 0.4:
            outcome = ok(rng.uniform(1.0, 200.0))
        elif roll < 0.7:
            outcome = fail(compiled=True, execution_log="mismatch")
        else:
            outcome = fail(compiled=False)
        tree.add_child(parent, f"src{k}", f"plan{k}", f"scaffold{k}", outcome)
    return tree


# -- independent window-formula evaluation (parent fields only) ----------------


def _parent(tree: SearchTree, i: int):
    return tree.nodes[i].parent


def _children_by_parent(tree: SearchTree, i: int) -> set[int]:
    return {j for j, node in tree.nodes.items() if node.parent == i}


def _siblings_by_parent(tree: SearchTree, i: int) -> set[int]:
    p = _parent(tree, i)
    if p is None:
        return {i}
    return {j for j in tree.nodes if _parent(tree, j) == p}


def _subtree_by_parent(tree: SearchTree, i: int) -> set[int]:
    out = {i}
    changed = True
    while changed:
        changed = False
        for j, node in tree.nodes.items():
            if node.parent in out and j not in out:
                out.add(j)
                changed = True
    return out


def _brute_leaders(tree: SearchTree, r: int, exclude_subtree_of: int) -> list[int]:
    excluded = _subtree_by_parent(tree, exclude_subtree_of)
    correct = [
        (node.outcome.runtime_ms, j)
        for j, node in tree.nodes.items()
        if node.outcome.compiled and node.outcome.correct and j not in excluded
    ]
    ranked = [j for _, j in sorted(correct)]
    # sources are unique in these fixtures, so dedup is a no-op here
    return ranked[:r]


def brute_plan_members(tree: SearchTree, i: int, r: int) -> set[int]:
    return (
        {i, 0}
        | _children_by_parent(tree, i)
        | set(_brute_leaders(tree, r, exclude_subtree_of=i))
    )


def brute_code_members(tree: SearchTree, i: int) -> set[int]:
    cousins = {j for j in tree.nodes if _parent(tree, j) in _siblings_by_parent(tree, i)}
    return {i, 0} | _children_by_parent(tree, i) | cousins


def brute_debug_members(tree: SearchTree, i: int) -> set[int]:
    return {i, 0} | _siblings_by_parent(tree, i)
