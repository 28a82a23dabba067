"""Role-specific dynamic context windows over the search tree.

Each agent sees a different slice of history around the selected node i:

  plan  -> i's children plus the global leaderboard leaders (outside i's subtree)
  code  -> i's children plus the children of i's siblings (cousin scaffolds)
  debug -> i's siblings (fixes tend to transfer between siblings)

The window always contains i and the root.  When the full window would exceed
the cap, the optional portion is sampled down uniformly; i and the root are
never evicted.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .prompting import (
    COMPILER_HEADING,
    EXECUTION_HEADING,
    LATEST_ATTEMPT_HEADING,
    Templates,
)
from .tree import Node, NodeId, SearchTree

DEFAULT_WINDOW_CAP = 5
LOG_TAIL_CHARS = 4000

PLAN = "plan"
CODE = "code"
DEBUG = "debug"


@dataclass(frozen=True)
class ContextWindow:
    role: str
    focus: NodeId
    mandatory: frozenset[NodeId]  # {focus, root}; just {root} when focus is the root
    members: tuple[NodeId, ...]  # optional portion after capping, ascending id
    cap_applied: bool


def apply_cap(
    mandatory: set[NodeId], optional: set[NodeId], cap: int, rng: random.Random
) -> list[NodeId]:
    """Sample the optional portion down so the whole window fits in `cap` nodes.

    Uniform without replacement; output in ascending id order.  The mandatory
    nodes are not candidates for eviction.  Consumes one variate per sampled
    element (none when no sampling is needed).
    """
    if cap < len(mandatory):
        raise ValueError(f"cap {cap} below mandatory size {len(mandatory)}")
    pool = sorted(optional)
    free = cap - len(mandatory)
    if len(pool) <= free:
        return pool
    # partial Fisher-Yates: uniform k-subset, k variates
    for j in range(free):
        idx = j + min(int(rng.random() * (len(pool) - j)), len(pool) - j - 1)
        pool[j], pool[idx] = pool[idx], pool[j]
    return sorted(pool[:free])


def _window(
    role: str,
    tree: SearchTree,
    focus: NodeId,
    optional: set[NodeId],
    cap: int,
    rng: random.Random,
) -> ContextWindow:
    mandatory = {focus, tree.root}
    optional = optional - mandatory
    members = apply_cap(mandatory, optional, cap, rng)
    return ContextWindow(
        role=role,
        focus=focus,
        mandatory=frozenset(mandatory),
        members=tuple(members),
        cap_applied=len(members) < len(optional),
    )


def build_plan_window(
    tree: SearchTree, i: NodeId, r: int, cap: int, rng: random.Random
) -> ContextWindow:
    """i's children plus the top-r leaders drawn from outside i's subtree."""
    leaders = tree.leaderboard_top(r, exclude_subtree_of=i)
    optional = set(tree.children(i)) | set(leaders)
    return _window(PLAN, tree, i, optional, cap, rng)


def build_code_window(
    tree: SearchTree, i: NodeId, cap: int, rng: random.Random
) -> ContextWindow:
    optional = set(tree.children(i)) | tree.children_of_siblings(i)
    return _window(CODE, tree, i, optional, cap, rng)


def build_debug_window(
    tree: SearchTree, i: NodeId, cap: int, rng: random.Random
) -> ContextWindow:
    if i == tree.root:
        raise ValueError("debug window undefined for the root (it never has a bug)")
    return _window(DEBUG, tree, i, tree.siblings(i), cap, rng)


# -- rendering ----------------------------------------------------------------


def truncate_log(text: str, limit: int = LOG_TAIL_CHARS) -> str:
    """Keep the final `limit` characters; error tails carry the actionable lines."""
    if len(text) <= limit:
        return text
    return f"[... {len(text) - limit} characters elided ...]\n" + text[-limit:]


def _format_log(text: str) -> str:
    text = truncate_log(text)
    return text if text.strip() else "(empty)"


def _format_execution(node: Node) -> str:
    if node.outcome.success:
        return f"Runtime: {node.outcome.runtime_ms:.4f} ms"
    return _format_log(node.outcome.execution_log)


def _observation_block(node: Node) -> str:
    return (
        f"{COMPILER_HEADING}\n{_format_log(node.outcome.compiler_log)}\n\n"
        f"{EXECUTION_HEADING}\n{_format_execution(node)}"
    )


def render_window(
    window: ContextWindow,
    tree: SearchTree,
    templates: Templates,
    focus_text: str | None = None,
) -> str:
    """Render the window into the prompt's history region.

    Layout: the focus node under the latest-attempt heading together with its
    own observations, then (when there are members) the dynamic-context banner
    and one numbered block per member in ascending id order.  `focus_text`
    substitutes the focus source (the code agent shows the annotated scaffold
    there instead of the stored kernel).
    """
    focus = tree.node(window.focus)
    shown = (focus.kernel_source if focus_text is None else focus_text).rstrip("\n")
    parts = [f"{LATEST_ATTEMPT_HEADING}\n{shown}\n\n{_observation_block(focus)}"]
    if window.members:
        parts.append("\n\n" + templates.window_banner)
        for k, member_id in enumerate(window.members, start=1):
            member = tree.node(member_id)
            source = member.kernel_source.rstrip("\n")
            parts.append(
                f"\n\n**Kernel Source Code #{k}**\n{source}\n\n"
                f"{_observation_block(member)}"
            )
    return "".join(parts)
