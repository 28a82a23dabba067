"""The optimization loops: strategic tree search plus the two baseline agents.

One run = one sequential loop over a budget of B attempts.  Every iteration
adds exactly one child to the tree (agent failures add a failed child), and
the full run state (tree, RNG, attempt counter) is checkpointed after every
iteration so a killed run resumes without losing more than the attempt in
flight.

RNG stream discipline (single stream per run, seeded from the run config):
selection draws first (one variate for the branch, one more on the exploration
branch), then window-cap draws in window construction order (debug branch:
the debug window; plan branch: plan window then code window).  Baseline agents
consume no draws.
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .agents import (
    AgentRole,
    AgentStepFailure,
    CompletionProvider,
    CompletionRequest,
    Templates,
    assemble_prompt,
    code_step,
    debug_step,
    default_roles,
    extract_final_code,
    parse_request_tag,
    plan_step,
)
from .anchors import ResponseParseError, strip_markers
from .context import (
    DEFAULT_WINDOW_CAP,
    ContextWindow,
    build_code_window,
    build_debug_window,
    build_plan_window,
    render_window,
)
from .evaluation import DEFAULT_NUM_WARMUP, identity_candidate
from .policy import PolicyExhausted, PolicyParams, select_with_info
from .prompting import load_templates
from .tree import EvaluationOutcome, Node, NodeId, SearchTree, init_tree

DEFAULT_BUDGET = 30
DEFAULT_LEADERBOARD_R = 2
BASELINE_TEMPERATURE = 0.7

AGENT_STARK = "stark"
AGENT_SAMPLING = "sampling"
AGENT_REFLEXION = "reflexion"
AGENT_NAMES = (AGENT_STARK, AGENT_SAMPLING, AGENT_REFLEXION)


class EvaluatorProbeError(RuntimeError):
    """The evaluator could not produce a successful baseline for the reference."""


class CheckpointError(RuntimeError):
    """A run directory does not hold a usable checkpoint."""


@dataclass
class RunConfig:
    reference_path: Optional[Path] = None
    reference_source: Optional[str] = None  # overrides reference_path when set
    run_dir: Path = Path("run")
    agent: str = AGENT_STARK
    budget_B: int = DEFAULT_BUDGET
    policy: PolicyParams = field(default_factory=PolicyParams)
    leaderboard_r: int = DEFAULT_LEADERBOARD_R
    window_cap: int = DEFAULT_WINDOW_CAP
    roles: dict[str, AgentRole] = field(default_factory=default_roles)
    seed: int = 0
    num_warmup: int = DEFAULT_NUM_WARMUP
    evaluator_desc: dict = field(default_factory=lambda: {"kind": "simulator"})
    templates_dir: Optional[Path] = None
    # reflexion normally refines the literal last attempt, failed or not;
    # this flag switches it to the last successful one
    reflexion_from_last_success: bool = False

    def load_reference(self) -> str:
        if self.reference_source is not None:
            return self.reference_source
        if self.reference_path is None:
            raise ValueError("config has neither reference_source nor reference_path")
        return Path(self.reference_path).read_text()

    def resolved(self) -> dict:
        roles = {
            name: {
                "temperature": role.temperature,
                "model_id": role.model_id,
                "max_output_tokens": role.max_output_tokens,
            }
            for name, role in self.roles.items()
        }
        return {
            "agent": self.agent,
            "budget_B": self.budget_B,
            "policy": {
                "epsilon": self.policy.epsilon,
                "n_root": self.policy.n_root,
                "n_child": self.policy.n_child,
                "seed": self.policy.seed,
            },
            "leaderboard_r": self.leaderboard_r,
            "window_cap": self.window_cap,
            "roles": roles,
            "seed": self.seed,
            "num_warmup": self.num_warmup,
            "evaluator": self.evaluator_desc,
            "reference_path": str(self.reference_path) if self.reference_path else None,
            "run_dir": str(self.run_dir),
            "templates_dir": str(self.templates_dir) if self.templates_dir else None,
            "reflexion_from_last_success": self.reflexion_from_last_success,
        }


@dataclass(frozen=True)
class RunReport:
    best_node: NodeId
    best_runtime_ms: Optional[float]
    baseline_runtime_ms: float
    attempts_used: int
    events: tuple[dict, ...]
    stopped_early: bool = False

    def to_document(self) -> dict:
        return {
            "best_node": self.best_node,
            "best_runtime_ms": self.best_runtime_ms,
            "baseline_runtime_ms": self.baseline_runtime_ms,
            "attempts_used": self.attempts_used,
            "stopped_early": self.stopped_early,
            "events": list(self.events),
        }


def has_bug(node: Node) -> bool:
    """A node needs the debug agent when its outcome is not a success; never the root."""
    if node.parent is None:
        return False
    return not node.outcome.success


class RunPaths:
    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        self.config = self.run_dir / "config.resolved.json"
        self.tree = self.run_dir / "tree.json"
        self.rng = self.run_dir / "rng.json"
        self.events = self.run_dir / "events.ndjson"
        self.report = self.run_dir / "report.json"
        self.calls = self.run_dir / "calls"

    def prepare(self):
        self.calls.mkdir(parents=True, exist_ok=True)


class _AuditingProvider:
    """Wraps a provider to write one calls/NNN_role.json record per request."""

    def __init__(self, inner: CompletionProvider, calls_dir: Path):
        self._inner = inner
        self._calls_dir = calls_dir

    def complete(self, request: CompletionRequest):
        record = {
            "request": {
                "model_id": request.model_id,
                "system_text": request.system_text,
                "user_text": request.user_text,
                "temperature": request.temperature,
                "max_output_tokens": request.max_output_tokens,
                "request_tag": request.request_tag,
            }
        }
        _, attempt, role = parse_request_tag(request.request_tag)
        path = self._calls_dir / f"{attempt:03d}_{role}.json"
        try:
            response = self._inner.complete(request)
        except Exception as exc:
            record["error"] = str(exc)
            path.write_text(json.dumps(record, indent=2))
            raise
        record["response"] = {
            "text": response.text,
            "provider_latency_ms": response.provider_latency_ms,
            "truncated": response.truncated,
        }
        path.write_text(json.dumps(record, indent=2))
        return response


def _rng_state_doc(rng: random.Random, attempts_used: int) -> dict:
    version, state, gauss = rng.getstate()
    return {
        "algorithm": "mersenne-twister",
        "attempts_used": attempts_used,
        "state": [version, list(state), gauss],
    }


def _restore_rng(doc: dict) -> random.Random:
    rng = random.Random()
    version, state, gauss = doc["state"]
    rng.setstate((version, tuple(state), gauss))
    return rng


def _failed_outcome(exc: AgentStepFailure) -> EvaluationOutcome:
    if exc.kind == "parse":
        log = f"agent output parse failure: {exc.reason}"
    else:
        log = f"provider failure: {exc.reason}"
    return EvaluationOutcome(compiled=False, correct=False, compiler_log=log)


def _append_event(paths: RunPaths, event: dict):
    with paths.events.open("a") as fh:
        fh.write(json.dumps(event) + "\n")


def _checkpoint(paths: RunPaths, tree: SearchTree, rng: random.Random, attempts_used: int):
    paths.tree.write_text(tree.to_json())
    paths.rng.write_text(json.dumps(_rng_state_doc(rng, attempts_used), indent=2))


def _write_report(paths: RunPaths, report: RunReport):
    paths.report.write_text(json.dumps(report.to_document(), indent=2))


def _make_report(
    tree: SearchTree, attempts_used: int, events: list[dict], stopped_early: bool
) -> RunReport:
    best = tree.best()
    best_node = tree.node(best)
    return RunReport(
        best_node=best,
        best_runtime_ms=best_node.outcome.runtime_ms if best != tree.root else None,
        baseline_runtime_ms=tree.node(tree.root).outcome.runtime_ms,
        attempts_used=attempts_used,
        events=tuple(events),
        stopped_early=stopped_early,
    )


def _start_run(config: RunConfig, evaluator) -> tuple[SearchTree, str]:
    reference = config.load_reference()
    baseline = evaluator.evaluate(reference, identity_candidate(reference))
    if not baseline.success:
        raise EvaluatorProbeError(
            "baseline must be correct: evaluating the reference against itself failed "
            f"(compiled={baseline.compiled}, correct={baseline.correct}); "
            f"log: {baseline.compiler_log[:500]}"
        )
    return init_tree(reference, baseline), reference


def _one_shot_kernel(
    provider: CompletionProvider,
    window: ContextWindow,
    tree: SearchTree,
    role: AgentRole,
    templates: Templates,
    tag: str,
) -> str:
    """One baseline generation: frame + code instruction, no scaffold."""
    window_text = render_window(window, tree, templates)
    system_text, user_text = assemble_prompt(
        "code", window_text, tree.node(tree.root).kernel_source,
        tree.node(window.focus).kernel_source, templates,
    )
    request = CompletionRequest(
        model_id=role.model_id,
        system_text=system_text,
        user_text=user_text,
        temperature=role.temperature,
        max_output_tokens=role.max_output_tokens,
        request_tag=tag,
    )
    try:
        text = provider.complete(request).text
    except Exception as exc:
        raise AgentStepFailure("provider", str(exc)) from exc
    try:
        return strip_markers(extract_final_code(text))
    except ResponseParseError as exc:
        raise AgentStepFailure("parse", f"response unusable: {exc}", text) from exc


# -- the three loops ---------------------------------------------------------------


def _loop_stark(
    config: RunConfig,
    provider: CompletionProvider,
    evaluator,
    tree: SearchTree,
    rng: random.Random,
    templates: Templates,
    paths: RunPaths,
    events: list[dict],
    start_attempt: int,
) -> RunReport:
    reference = tree.node(tree.root).kernel_source
    run_id = paths.run_dir.name or "run"
    stopped_early = False
    attempts_used = start_attempt - 1
    for t in range(start_attempt, config.budget_B + 1):
        try:
            i, selection = select_with_info(tree, config.policy, rng)
        except PolicyExhausted:
            stopped_early = True
            break
        node_i = tree.node(i)
        if has_bug(node_i):
            branch = "debug"
            plan_text = node_i.plan_text
            scaffold_text = node_i.anchored_scaffold
            window = build_debug_window(tree, i, config.window_cap, rng)
            try:
                kernel = debug_step(
                    provider, window, tree, node_i.kernel_source,
                    config.roles, templates, f"{run_id}:{t}:debug",
                )
                outcome = evaluator.evaluate(reference, kernel)
            except AgentStepFailure as exc:
                kernel = ""
                outcome = _failed_outcome(exc)
        else:
            branch = "plan"
            plan_text = ""
            scaffold_text = ""
            kernel = ""
            plan_window = build_plan_window(
                tree, i, config.leaderboard_r, config.window_cap, rng
            )
            try:
                scaffold = plan_step(
                    provider, plan_window, tree, config.roles, templates,
                    f"{run_id}:{t}:plan",
                )
                plan_text = scaffold.advice
                scaffold_text = scaffold.text
                code_window = build_code_window(tree, i, config.window_cap, rng)
                kernel = code_step(
                    provider, code_window, tree, scaffold, config.roles, templates,
                    f"{run_id}:{t}:code",
                )
                outcome = evaluator.evaluate(reference, kernel)
            except AgentStepFailure as exc:
                kernel = ""
                outcome = _failed_outcome(exc)
        child = tree.add_child(i, kernel, plan_text, scaffold_text, outcome)
        attempts_used = t
        event = {
            "attempt": t,
            "selected": i,
            "selection_branch": selection.branch,
            "branch": branch,
            "child": child,
            "compiled": outcome.compiled,
            "correct": outcome.correct,
            "runtime_ms": outcome.runtime_ms,
            "best": tree.best(),
        }
        events.append(event)
        _append_event(paths, event)
        _checkpoint(paths, tree, rng, attempts_used)
    report = _make_report(tree, attempts_used, events, stopped_early)
    _write_report(paths, report)
    return report


def _loop_baseline(
    agent: str,
    config: RunConfig,
    provider: CompletionProvider,
    evaluator,
    tree: SearchTree,
    rng: random.Random,
    templates: Templates,
    paths: RunPaths,
    events: list[dict],
    start_attempt: int,
) -> RunReport:
    """Sampling: B independent shots off the root.  Reflexion: one chain, each
    attempt refining the literal previous attempt (even a failed one)."""
    reference = tree.node(tree.root).kernel_source
    run_id = paths.run_dir.name or "run"
    role = dataclasses.replace(config.roles["code"], temperature=BASELINE_TEMPERATURE)
    attempts_used = start_attempt - 1
    for t in range(start_attempt, config.budget_B + 1):
        if agent == AGENT_SAMPLING:
            focus = tree.root
        elif config.reflexion_from_last_success:
            focus = max(i for i, n in tree.nodes.items() if n.outcome.success)
        else:
            focus = max(tree.nodes)  # latest attempt, root on the first iteration
        window = ContextWindow(
            role="code",
            focus=focus,
            mandatory=frozenset({focus, tree.root}),
            members=(),
            cap_applied=False,
        )
        try:
            kernel = _one_shot_kernel(
                provider, window, tree, role, templates, f"{run_id}:{t}:code"
            )
            outcome = evaluator.evaluate(reference, kernel)
        except AgentStepFailure as exc:
            kernel = ""
            outcome = _failed_outcome(exc)
        child = tree.add_child(focus, kernel, "", "", outcome)
        attempts_used = t
        event = {
            "attempt": t,
            "selected": focus,
            "selection_branch": agent,
            "branch": "plan",
            "child": child,
            "compiled": outcome.compiled,
            "correct": outcome.correct,
            "runtime_ms": outcome.runtime_ms,
            "best": tree.best(),
        }
        events.append(event)
        _append_event(paths, event)
        _checkpoint(paths, tree, rng, attempts_used)
    report = _make_report(tree, attempts_used, events, stopped_early=False)
    _write_report(paths, report)
    return report


def _run(config: RunConfig, provider: CompletionProvider, evaluator) -> RunReport:
    if config.agent not in AGENT_NAMES:
        raise ValueError(f"unknown agent {config.agent!r}")
    paths = RunPaths(config.run_dir)
    paths.prepare()
    paths.config.write_text(json.dumps(config.resolved(), indent=2))
    paths.events.write_text("")
    templates = load_templates(config.templates_dir)
    tree, _ = _start_run(config, evaluator)
    rng = random.Random(config.seed)
    provider = _AuditingProvider(provider, paths.calls)
    _checkpoint(paths, tree, rng, attempts_used=0)
    if config.agent == AGENT_STARK:
        return _loop_stark(config, provider, evaluator, tree, rng, templates, paths, [], 1)
    return _loop_baseline(
        config.agent, config, provider, evaluator, tree, rng, templates, paths, [], 1
    )


def run_stark(config: RunConfig, provider: CompletionProvider, evaluator) -> RunReport:
    """Strategic tree search: select, plan+code (or debug), evaluate, record."""
    config = dataclasses.replace(config, agent=AGENT_STARK)
    return _run(config, provider, evaluator)


def run_sampling(config: RunConfig, provider: CompletionProvider, evaluator) -> RunReport:
    """Best-of-B independent one-shot generations from the reference prompt."""
    config = dataclasses.replace(config, agent=AGENT_SAMPLING)
    return _run(config, provider, evaluator)


def run_reflexion(config: RunConfig, provider: CompletionProvider, evaluator) -> RunReport:
    """Single-chain refinement of the immediately preceding attempt."""
    config = dataclasses.replace(config, agent=AGENT_REFLEXION)
    return _run(config, provider, evaluator)


def _config_from_resolved(doc: dict, run_dir: Path) -> RunConfig:
    roles = {
        name: AgentRole(
            name=name,
            temperature=spec["temperature"],
            model_id=spec["model_id"],
            max_output_tokens=spec["max_output_tokens"],
        )
        for name, spec in doc["roles"].items()
    }
    return RunConfig(
        reference_path=Path(doc["reference_path"]) if doc["reference_path"] else None,
        run_dir=run_dir,
        agent=doc["agent"],
        budget_B=doc["budget_B"],
        policy=PolicyParams(
            epsilon=doc["policy"]["epsilon"],
            n_root=doc["policy"]["n_root"],
            n_child=doc["policy"]["n_child"],
            seed=doc["policy"]["seed"],
        ),
        leaderboard_r=doc["leaderboard_r"],
        window_cap=doc["window_cap"],
        roles=roles,
        seed=doc["seed"],
        num_warmup=doc["num_warmup"],
        evaluator_desc=doc["evaluator"],
        templates_dir=Path(doc["templates_dir"]) if doc["templates_dir"] else None,
        reflexion_from_last_success=doc.get("reflexion_from_last_success", False),
    )


def resume(run_dir: Path, provider: CompletionProvider, evaluator) -> RunReport:
    """Continue an interrupted run to its budget; a finished run is a no-op."""
    paths = RunPaths(Path(run_dir))
    for required in (paths.config, paths.tree, paths.rng):
        if not required.is_file():
            raise CheckpointError(f"missing checkpoint file: {required}")
    try:
        config_doc = json.loads(paths.config.read_text())
        tree = SearchTree.from_json(paths.tree.read_text())
        rng_doc = json.loads(paths.rng.read_text())
        rng = _restore_rng(rng_doc)
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    config = _config_from_resolved(config_doc, Path(run_dir))
    attempts_used = int(rng_doc["attempts_used"])
    events: list[dict] = []
    if paths.events.is_file():
        with paths.events.open() as fh:
            events = [json.loads(line) for line in fh if line.strip()]
        # a kill can land between the event append and the checkpoint write;
        # the checkpoint is authoritative, so trim and rewrite
        events = events[:attempts_used]
        paths.events.write_text("".join(json.dumps(e) + "\n" for e in events))
    templates = load_templates(config.templates_dir)
    if attempts_used >= config.budget_B:
        report = _make_report(tree, attempts_used, events, stopped_early=False)
        _write_report(paths, report)
        return report
    provider = _AuditingProvider(provider, paths.calls)
    if config.agent == AGENT_STARK:
        return _loop_stark(
            config, provider, evaluator, tree, rng, templates, paths, events,
            attempts_used + 1,
        )
    return _loop_baseline(
        config.agent, config, provider, evaluator, tree, rng, templates, paths,
        events, attempts_used + 1,
    )
