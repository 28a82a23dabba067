"""Run metrics: Fast_1, success rate, pooled compile/correct rates, speed ratio.

All functions are pure over completed run artifacts.  Tasks that produced no
correct kernel are excluded from the speed ratio (there is no defensible
ratio for a missing kernel); the report discloses the coverage instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .tree import SearchTree


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    baseline_runtime_ms: float
    best_runtime_ms: Optional[float] = None
    attempt_flags: tuple[tuple[bool, bool], ...] = field(default=())  # (compiled, correct)
    agent: str = ""

    def __post_init__(self):
        if self.best_runtime_ms is not None and not any(c for _, c in self.attempt_flags):
            raise ValueError("best_runtime_ms present without any correct attempt")


def fast1(results: list[TaskResult]) -> float:
    """Fraction of tasks whose best correct kernel is at least as fast as the baseline."""
    if not results:
        raise ValueError("no task results")
    hits = sum(
        1
        for r in results
        if r.best_runtime_ms is not None and r.best_runtime_ms <= r.baseline_runtime_ms
    )
    return hits / len(results)


def success_rate(results: list[TaskResult]) -> float:
    """Fraction of tasks with at least one compiled and correct attempt."""
    if not results:
        raise ValueError("no task results")
    hits = sum(1 for r in results if any(correct for _, correct in r.attempt_flags))
    return hits / len(results)


def _pooled(results: list[TaskResult], index: int) -> Optional[float]:
    flags = [f for r in results for f in r.attempt_flags]
    if not flags:
        return None
    return sum(1 for f in flags if f[index]) / len(flags)


def compile_rate(results: list[TaskResult]) -> Optional[float]:
    """Compiled fraction over all attempts pooled across tasks; None with zero attempts."""
    if not results:
        raise ValueError("no task results")
    return _pooled(results, 0)


def correct_rate(results: list[TaskResult]) -> Optional[float]:
    if not results:
        raise ValueError("no task results")
    return _pooled(results, 1)


def speed_ratio(results: list[TaskResult]) -> Optional[float]:
    """Mean over tasks of baseline_runtime / best_runtime, correct-kernel tasks only."""
    if not results:
        raise ValueError("no task results")
    ratios = [
        r.baseline_runtime_ms / r.best_runtime_ms
        for r in results
        if r.best_runtime_ms is not None
    ]
    if not ratios:
        return None
    return sum(ratios) / len(ratios)


def speed_coverage(results: list[TaskResult]) -> tuple[int, int]:
    """(tasks included in the speed ratio, total tasks)."""
    included = sum(1 for r in results if r.best_runtime_ms is not None)
    return included, len(results)


def format_percent(value: Optional[float]) -> str:
    return "-" if value is None else f"{100.0 * value:.1f}%"


def format_speed(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}x"


def _agent_document(results: list[TaskResult]) -> dict:
    included, total = speed_coverage(results)
    return {
        "success": success_rate(results),
        "fast1": fast1(results),
        "speed": speed_ratio(results),
        "speed_coverage": {"included": included, "total": total},
        "compile_rate": compile_rate(results),
        "correct_rate": correct_rate(results),
        "tasks": [
            {
                "task_id": r.task_id,
                "baseline_runtime_ms": r.baseline_runtime_ms,
                "best_runtime_ms": r.best_runtime_ms,
                "attempts": len(r.attempt_flags),
                "compiled": sum(1 for f in r.attempt_flags if f[0]),
                "correct": sum(1 for f in r.attempt_flags if f[1]),
            }
            for r in sorted(results, key=lambda r: r.task_id)
        ],
    }


def render_report(results_by_agent: dict[str, list[TaskResult]], format: str = "table") -> str:
    """Render the metric tables, either human-readable or as JSON."""
    if format == "machine":
        doc = {
            "agents": {
                name: _agent_document(results)
                for name, results in sorted(results_by_agent.items())
            }
        }
        return json.dumps(doc, indent=2)
    if format != "table":
        raise ValueError(f"unknown report format {format!r}")
    lines = [f"{'Agent':<12} {'Success':>8} {'Fast_1':>8} {'Speed':>8}  Coverage"]
    for name, results in sorted(results_by_agent.items()):
        included, total = speed_coverage(results)
        lines.append(
            f"{name:<12} {format_percent(success_rate(results)):>8} "
            f"{format_percent(fast1(results)):>8} {format_speed(speed_ratio(results)):>8}"
            f"  {included}/{total}"
        )
    lines.append("")
    lines.append(f"{'Agent':<12} {'Compile':>8} {'Correct':>8}")
    for name, results in sorted(results_by_agent.items()):
        lines.append(
            f"{name:<12} {format_percent(compile_rate(results)):>8} "
            f"{format_percent(correct_rate(results)):>8}"
        )
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    """Parse a machine-readable report back into its document."""
    return json.loads(text)


def task_result_from_run_dir(run_dir: Path) -> TaskResult:
    """Reconstruct a TaskResult from a finished run directory."""
    run_dir = Path(run_dir)
    config = json.loads((run_dir / "config.resolved.json").read_text())
    tree = SearchTree.from_json((run_dir / "tree.json").read_text())
    report = json.loads((run_dir / "report.json").read_text())
    attempts = [
        (node.outcome.compiled, node.outcome.correct)
        for node_id, node in sorted(tree.nodes.items())
        if node_id != tree.root
    ]
    task_id = config.get("reference_path") or run_dir.name
    return TaskResult(
        task_id=str(task_id),
        baseline_runtime_ms=report["baseline_runtime_ms"],
        best_runtime_ms=report["best_runtime_ms"],
        attempt_flags=tuple(attempts),
        agent=config["agent"],
    )
