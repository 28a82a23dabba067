import math
import random

import pytest

from helpers import fail, ok, random_tree
from kernelsearch.tree import (
    EvaluationOutcome,
    Node,
    SearchTree,
    TreeSchemaError,
    UnknownNodeError,
    init_tree,
    normalize_kernel_source,
    score,
)


class TestOutcome:
    def test_success_requires_runtime(self):
        with pytest.raises(ValueError):
            EvaluationOutcome(compiled=True, correct=True, runtime_ms=None)

    def test_runtime_forbidden_on_failure(self):
        with pytest.raises(ValueError):
            EvaluationOutcome(compiled=True, correct=False, runtime_ms=5.0)

    def test_correct_implies_compiled(self):
        with pytest.raises(ValueError):
            EvaluationOutcome(compiled=False, correct=True, runtime_ms=5.0)


class TestInit:
    def test_fresh_tree_has_single_root(self):
        tree = init_tree("ref.py", ok(100.0))
        assert len(tree) == 1
        assert score(tree.node(0)) == 100.0
        assert tree.node(0).attempt_index == 0

    def test_failed_baseline_rejected(self):
        with pytest.raises(ValueError, match="baseline must be correct"):
            init_tree("ref.py", fail())

    def test_round_trip_identity(self, example_tree):
        restored = SearchTree.from_json(example_tree.to_json())
        assert restored.to_document() == example_tree.to_document()
        assert restored.children_index == example_tree.children_index


class TestAddChild:
    def test_first_child_of_root(self):
        tree = init_tree("ref", ok(100.0))
        child = tree.add_child(0, "k", "p", "s", ok(50.0))
        assert child == 1
        assert tree.children(0) == [1]

    def test_two_adds_ordered(self, example_tree):
        a = example_tree.add_child(1, "ka", "p", "s", ok(10.0))
        b = example_tree.add_child(1, "kb", "p", "s", ok(9.0))
        assert (a, b) == (6, 7)
        assert example_tree.children(1) == [3, 4, 6, 7]

    def test_thirty_adds_yield_31_nodes(self):
        tree = init_tree("ref", ok(100.0))
        for k in range(30):
            tree.add_child(k % (len(tree)), f"k{k}", "", "", fail())
        assert len(tree) == 31
        assert max(tree.nodes) == 30

    def test_unknown_parent(self, example_tree):
        with pytest.raises(UnknownNodeError):
            example_tree.add_child(99, "k", "p", "s", ok(1.0))


class TestScore:
    def test_correct_node(self):
        node = Node(1, 0, "k", "", "", ok(42.0), 1)
        assert score(node) == 42.0

    def test_compiled_but_incorrect(self):
        node = Node(1, 0, "k", "", "", fail(compiled=True), 1)
        assert score(node) == math.inf

    def test_not_compiled(self):
        node = Node(1, 0, "k", "", "", fail(compiled=False), 1)
        assert score(node) == math.inf


class TestRelations:
    def test_siblings_include_self(self, example_tree):
        assert example_tree.siblings(1) == {1, 2}

    def test_siblings_of_root_is_singleton(self, example_tree):
        assert example_tree.siblings(0) == {0}

    def test_children_of_siblings(self, example_tree):
        assert example_tree.children_of_siblings(1) == {3, 4, 5}

    def test_subtree(self, example_tree):
        assert example_tree.subtree(1) == {1, 3, 4}
        assert example_tree.subtree(0) == {0, 1, 2, 3, 4, 5}

    def test_unknown_id(self, example_tree):
        for op in (example_tree.children, example_tree.siblings,
                   example_tree.children_of_siblings, example_tree.subtree):
            with pytest.raises(UnknownNodeError):
                op(42)


class TestLeaderboard:
    def test_exclude_subtree(self, example_tree):
        assert example_tree.leaderboard_top(2, exclude_subtree_of=1) == [5, 0]

    def test_exclude_everything(self, example_tree):
        assert example_tree.leaderboard_top(2, exclude_subtree_of=0) == []

    def test_no_exclusion(self, example_tree):
        assert example_tree.leaderboard_top(2) == [5, 3]

    def test_full_ranking_when_r_large(self, example_tree):
        assert example_tree.leaderboard_top(10) == [5, 3, 1, 0]

    def test_duplicate_kernels_collapse(self):
        tree = init_tree("ref", ok(100.0))
        tree.add_child(0, "same\n\n\nsrc  ", "", "", ok(50.0))
        tree.add_child(0, "same\n\nsrc", "", "", ok(60.0))
        tree.add_child(0, "other", "", "", ok(70.0))
        assert tree.leaderboard_top(3) == [1, 3, 0]

    def test_tie_breaks_to_lower_id(self):
        tree = init_tree("ref", ok(100.0))
        tree.add_child(0, "a", "", "", ok(50.0))
        tree.add_child(0, "b", "", "", ok(50.0))
        assert tree.leaderboard_top(2) == [1, 2]


class TestBest:
    def test_fresh_tree(self):
        tree = init_tree("ref", ok(100.0))
        assert tree.best() == 0

    def test_example(self, example_tree):
        assert example_tree.best() == 5

    def test_all_children_failed(self):
        tree = init_tree("ref", ok(100.0))
        tree.add_child(0, "a", "", "", fail())
        tree.add_child(0, "b", "", "", fail(compiled=True))
        assert tree.best() == 0

    def test_tie_with_root_goes_to_root(self):
        tree = init_tree("ref", ok(100.0))
        tree.add_child(0, "a", "", "", ok(100.0))
        assert tree.best() == 0


def test_normalize_kernel_source():
    assert normalize_kernel_source("a  \nb\t\n\n\n\nc") == "a\nb\n\nc"
    assert normalize_kernel_source("plain") == "plain"


class TestInvariants:
    def test_relation_invariants_on_random_trees(self):
        rng = random.Random(7)
        for _ in range(50):
            tree = random_tree(rng, max_nodes=30)
            for i in tree.nodes:
                assert i in tree.siblings(i)
                assert set(tree.children(i)) <= tree.children_of_siblings(i)
            assert tree.subtree(0) == set(tree.nodes)

    def test_best_score_never_increases(self):
        rng = random.Random(11)
        tree = init_tree("ref", ok(100.0))
        best_scores = [score(tree.node(tree.best()))]
        for k in range(60):
            parent = rng.randrange(len(tree))
            outcome = ok(rng.uniform(1, 300)) if rng.random() < 0.5 else fail()
            tree.add_child(parent, f"k{k}", "", "", outcome)
            best_scores.append(score(tree.node(tree.best())))
        assert all(b <= a for a, b in zip(best_scores, best_scores[1:]))

    def test_leaderboard_covers_all_correct_nodes(self):
        rng = random.Random(13)
        for _ in range(20):
            tree = random_tree(rng)
            correct = [i for i, n in tree.nodes.items() if n.outcome.success]
            board = tree.leaderboard_top(len(correct) + 5)
            assert set(board) == set(correct)
            runtimes = [tree.node(i).outcome.runtime_ms for i in board]
            assert runtimes == sorted(runtimes)

    def test_serialization_identity_on_random_trees(self):
        rng = random.Random(17)
        for _ in range(20):
            tree = random_tree(rng)
            restored = SearchTree.from_json(tree.to_json())
            assert restored.to_json() == tree.to_json()
            assert restored.children_index == tree.children_index

    def test_count_after_k_adds(self):
        tree = init_tree("ref", ok(100.0))
        for k in range(12):
            tree.add_child(0, f"k{k}", "", "", fail())
        assert len(tree) == 13
        assert max(tree.nodes) == 12


class TestSchema:
    def test_unknown_version_rejected(self, example_tree):
        doc = example_tree.to_document()
        doc["schema_version"] = 2
        with pytest.raises(TreeSchemaError, match="schema_version"):
            SearchTree.from_document(doc)

    def test_missing_version_rejected(self, example_tree):
        doc = example_tree.to_document()
        del doc["schema_version"]
        with pytest.raises(TreeSchemaError):
            SearchTree.from_document(doc)
