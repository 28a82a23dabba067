"""Search tree of kernel candidates: nodes, scoring, tree relations, leaderboard, serialization.

One tree per optimization run.  The root holds the reference architecture and its
measured baseline; every other node is one attempt (a kernel, the plan that produced
it, and its evaluation outcome).  Failed attempts stay in the tree forever -- they are
history, not garbage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

NodeId = int

TREE_SCHEMA_VERSION = 1

INFINITY = math.inf


class UnknownNodeError(KeyError):
    """Raised when an operation names a node id that is not in the tree."""


class TreeSchemaError(ValueError):
    """Raised when a serialized tree document cannot be loaded."""


@dataclass(frozen=True)
class EvaluationOutcome:
    """Result of compiling, checking and timing one kernel candidate.

    runtime_ms is present exactly when the candidate compiled and was correct;
    the constructor enforces this so downstream code never has to re-check.
    """

    compiled: bool
    correct: bool
    runtime_ms: Optional[float] = None
    compiler_log: str = ""
    execution_log: str = ""

    def __post_init__(self):
        if self.correct and not self.compiled:
            raise ValueError("outcome cannot be correct without compiling")
        success = self.compiled and self.correct
        if success and (self.runtime_ms is None or self.runtime_ms <= 0):
            raise ValueError("successful outcome requires a positive runtime_ms")
        if not success and self.runtime_ms is not None:
            raise ValueError("runtime_ms only allowed on a compiled and correct outcome")

    @property
    def success(self) -> bool:
        return self.compiled and self.correct


@dataclass(frozen=True)
class Node:
    id: NodeId
    parent: Optional[NodeId]
    kernel_source: str
    plan_text: str
    anchored_scaffold: str
    outcome: EvaluationOutcome
    attempt_index: int


def score(node: Node) -> float:
    """Competitiveness of a node: its runtime when successful, +inf otherwise."""
    if node.outcome.success:
        return node.outcome.runtime_ms
    return INFINITY


def normalize_kernel_source(text: str) -> str:
    """Normal form used to decide whether two kernels are 'the same' for the leaderboard.

    Trailing whitespace is trimmed per line and runs of blank lines collapse to one;
    anything beyond that counts as a distinct kernel.
    """
    lines = [line.rstrip() for line in text.split("\n")]
    out: list[str] = []
    for line in lines:
        if line == "" and out and out[-1] == "":
            continue
        out.append(line)
    return "\n".join(out)


class SearchTree:
    """Rooted tree of attempts.  Node ids are assigned in creation order, root = 0.

    Single-writer: one run loop mutates the tree; every query is read-only.
    """

    def __init__(self, root_node: Node):
        if root_node.id != 0 or root_node.parent is not None:
            raise ValueError("root must have id 0 and no parent")
        self.nodes: dict[NodeId, Node] = {0: root_node}
        self.children_index: dict[NodeId, list[NodeId]] = {0: []}

    @property
    def root(self) -> NodeId:
        return 0

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self.nodes

    def node(self, node_id: NodeId) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def add_child(
        self,
        parent: NodeId,
        kernel_source: str,
        plan_text: str,
        anchored_scaffold: str,
        outcome: EvaluationOutcome,
    ) -> NodeId:
        """Append one attempt under `parent` and return its fresh id (previous max + 1)."""
        if parent not in self.nodes:
            raise UnknownNodeError(parent)
        child_id = max(self.nodes) + 1
        node = Node(
            id=child_id,
            parent=parent,
            kernel_source=kernel_source,
            plan_text=plan_text,
            anchored_scaffold=anchored_scaffold,
            outcome=outcome,
            attempt_index=child_id,
        )
        self.nodes[child_id] = node
        self.children_index[child_id] = []
        self.children_index[parent].append(child_id)
        return child_id

    # -- tree relations -------------------------------------------------------

    def children(self, node_id: NodeId) -> list[NodeId]:
        """Direct children, oldest first."""
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        return list(self.children_index[node_id])

    def siblings(self, node_id: NodeId) -> set[NodeId]:
        """Nodes sharing this node's parent, the node itself included.

        The root has no parent, so its sibling set is just itself.
        """
        node = self.node(node_id)
        if node.parent is None:
            return {node_id}
        return set(self.children_index[node.parent])

    def children_of_siblings(self, node_id: NodeId) -> set[NodeId]:
        out: set[NodeId] = set()
        for sib in self.siblings(node_id):
            out.update(self.children_index[sib])
        return out

    def subtree(self, node_id: NodeId) -> set[NodeId]:
        """The node and all of its descendants."""
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        out: set[NodeId] = set()
        stack = [node_id]
        while stack:
            cur = stack.pop()
            out.add(cur)
            stack.extend(self.children_index[cur])
        return out

    # -- leaderboard and best -------------------------------------------------

    def leaderboard_top(
        self, r: int, exclude_subtree_of: Optional[NodeId] = None
    ) -> list[NodeId]:
        """Best r distinct successful kernels, fastest first.

        Distinctness is textual (normalize_kernel_source); ties break toward the
        lower id so seeded runs stay reproducible.
        """
        excluded: set[NodeId] = set()
        if exclude_subtree_of is not None:
            excluded = self.subtree(exclude_subtree_of)
        ranked = sorted(
            (
                node
                for node in self.nodes.values()
                if node.outcome.success and node.id not in excluded
            ),
            key=lambda n: (score(n), n.id),
        )
        out: list[NodeId] = []
        seen_sources: set[str] = set()
        for node in ranked:
            key = normalize_kernel_source(node.kernel_source)
            if key in seen_sources:
                continue
            seen_sources.add(key)
            out.append(node.id)
            if len(out) == r:
                break
        return out

    def best(self) -> NodeId:
        """Id of the fastest correct node; the root when nothing beats it."""
        return min(
            (node for node in self.nodes.values() if node.outcome.success),
            key=lambda n: (score(n), n.id),
        ).id

    # -- serialization --------------------------------------------------------

    def to_document(self) -> dict:
        nodes = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            nodes.append(
                {
                    "id": node.id,
                    "parent": node.parent,
                    "attempt_index": node.attempt_index,
                    "kernel_source": node.kernel_source,
                    "plan_text": node.plan_text,
                    "anchored_scaffold": node.anchored_scaffold,
                    "compiled": node.outcome.compiled,
                    "correct": node.outcome.correct,
                    "runtime_ms": node.outcome.runtime_ms,
                    "compiler_log": node.outcome.compiler_log,
                    "execution_log": node.outcome.execution_log,
                }
            )
        return {"schema_version": TREE_SCHEMA_VERSION, "root": self.root, "nodes": nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2)

    @classmethod
    def from_document(cls, doc: dict) -> "SearchTree":
        version = doc.get("schema_version")
        if version != TREE_SCHEMA_VERSION:
            raise TreeSchemaError(f"unknown schema_version: {version!r}")
        tree: Optional[SearchTree] = None
        # id order equals creation order, so re-adding in id order restores
        # child ordering exactly
        for rec in sorted(doc["nodes"], key=lambda r: r["id"]):
            outcome = EvaluationOutcome(
                compiled=rec["compiled"],
                correct=rec["correct"],
                runtime_ms=rec["runtime_ms"],
                compiler_log=rec["compiler_log"],
                execution_log=rec["execution_log"],
            )
            if rec["parent"] is None:
                node = Node(
                    id=rec["id"],
                    parent=None,
                    kernel_source=rec["kernel_source"],
                    plan_text=rec["plan_text"],
                    anchored_scaffold=rec["anchored_scaffold"],
                    outcome=outcome,
                    attempt_index=rec["attempt_index"],
                )
                tree = cls(node)
            else:
                if tree is None:
                    raise TreeSchemaError("first node in document is not the root")
                child_id = tree.add_child(
                    rec["parent"],
                    rec["kernel_source"],
                    rec["plan_text"],
                    rec["anchored_scaffold"],
                    outcome,
                )
                if child_id != rec["id"] or tree.node(child_id).attempt_index != rec["attempt_index"]:
                    raise TreeSchemaError(f"non-contiguous node ids near {rec['id']}")
        if tree is None:
            raise TreeSchemaError("document has no nodes")
        return tree

    @classmethod
    def from_json(cls, text: str) -> "SearchTree":
        return cls.from_document(json.loads(text))


def init_tree(reference_source: str, baseline: EvaluationOutcome) -> SearchTree:
    """Start a run: the reference architecture becomes the root with its measured baseline."""
    if not baseline.success:
        raise ValueError("baseline must be correct")
    root = Node(
        id=0,
        parent=None,
        kernel_source=reference_source,
        plan_text="",
        anchored_scaffold="",
        outcome=baseline,
        attempt_index=0,
    )
    return SearchTree(root)
