"""Command-line entry point: run / resume / report / export-tree / eval-check.

Config is one TOML file with sections [run], [policy], [roles.plan|code|debug],
[evaluator], [provider].  Every default is materialized into the run
directory's config.resolved.json, and nothing talks to a provider or
evaluator until the whole config validates.

Exit codes: 0 completed, 2 config error, 3 evaluator unreachable,
4 provider unreachable.
"""

from __future__ import annotations

import argparse
import dataclasses
import fnmatch
import json
import os
import random
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from .agents import (
    AgentRole,
    HttpProvider,
    ScriptedProvider,
    assemble_prompt,
    default_roles,
)
from .context import build_plan_window, render_window
from .evaluation import (
    SimLandscapeSpec,
    SimulatorEvaluator,
    SubprocessEvaluator,
    identity_candidate,
)
from .metrics import render_report, task_result_from_run_dir
from .orchestrator import (
    AGENT_NAMES,
    CheckpointError,
    EvaluatorProbeError,
    RunConfig,
    resume as orchestrator_resume,
    run_reflexion,
    run_sampling,
    run_stark,
)
from .policy import PolicyParams
from .prompting import load_templates
from .tree import EvaluationOutcome, SearchTree, init_tree, score

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3
EXIT_PROVIDER = 4

RUNNERS = {"stark": run_stark, "sampling": run_sampling, "reflexion": run_reflexion}

PROBE_REFERENCE = """\
import torch
import torch.nn as nn


class Model(nn.Module):
    def forward(self, x):
        return x * 2


def get_inputs():
    return [torch.randn(64, 64)]


def get_init_inputs():
    return []
"""

PROBE_GOOD_CANDIDATE = identity_candidate(PROBE_REFERENCE)
PROBE_BAD_CANDIDATE = "def broken(:\nBUG\n"


class ConfigError(ValueError):
    pass


class ProviderSetupError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    reference_path: Path
    level_tag: Optional[str] = None


def load_config_doc(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None


def _roles_from_doc(doc: dict) -> dict[str, AgentRole]:
    roles = default_roles(model_id=doc.get("provider", {}).get("model", "default-model"))
    for name in ("plan", "code", "debug"):
        section = doc.get("roles", {}).get(name, {})
        roles[name] = dataclasses.replace(
            roles[name],
            temperature=float(section.get("temperature", roles[name].temperature)),
            model_id=section.get("model", roles[name].model_id),
            max_output_tokens=int(
                section.get("max_output_tokens", roles[name].max_output_tokens)
            ),
        )
    return roles


def build_run_config(doc: dict, task: TaskSpec, agent: str, run_dir: Path, args) -> RunConfig:
    run = doc.get("run", {})
    pol = doc.get("policy", {})
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    budget = args.budget if args.budget is not None else int(run.get("budget", 30))
    policy = PolicyParams(
        epsilon=float(pol.get("epsilon", 0.3)),
        n_root=int(pol.get("n_root", 5)),
        n_child=int(pol.get("n_child", 3)),
        seed=seed,
    )
    return RunConfig(
        reference_path=task.reference_path,
        run_dir=run_dir,
        agent=agent,
        budget_B=budget,
        policy=policy,
        leaderboard_r=int(run.get("leaderboard_r", 2)),
        window_cap=int(run.get("window_cap", 5)),
        roles=_roles_from_doc(doc),
        seed=seed,
        num_warmup=int(run.get("warmups", 100)),
        evaluator_desc=dict(doc.get("evaluator", {"kind": "simulator"})),
        templates_dir=Path(run["templates_dir"]) if "templates_dir" in run else None,
        reflexion_from_last_success=bool(run.get("reflexion_from_last_success", False)),
    )


def build_evaluator(doc: dict, num_warmup: int):
    section = doc.get("evaluator", {"kind": "simulator"})
    kind = section.get("kind", "simulator")
    if kind == "simulator":
        spec = SimLandscapeSpec(
            base_runtime_ms=float(section.get("base_runtime_ms", 100.0)),
        )
        return SimulatorEvaluator(spec)
    if kind == "subprocess":
        command = section.get("command")
        if not command:
            raise ConfigError("[evaluator] kind='subprocess' requires a command")
        return SubprocessEvaluator(
            shlex.split(command),
            num_warmup=num_warmup,
            num_trials=int(section.get("trials", 100)),
            timeout_s=int(section.get("timeout_s", 600)),
            device_hint=str(section.get("device", "")),
        )
    raise ConfigError(f"unknown evaluator kind {kind!r}")


def build_provider(doc: dict):
    section = doc.get("provider", {"kind": "scripted", "responses": []})
    kind = section.get("kind", "http")
    if kind == "scripted":
        if "responses_file" in section:
            path = Path(section["responses_file"])
            if not path.is_file():
                raise ProviderSetupError(f"responses_file not found: {path}")
            responses = json.loads(path.read_text())
        else:
            responses = list(section.get("responses", []))
        return ScriptedProvider(responses=responses)
    if kind == "http":
        endpoint = section.get("endpoint", "")
        if not endpoint.startswith(("http://", "https://")):
            raise ProviderSetupError(f"provider endpoint missing or invalid: {endpoint!r}")
        api_key = ""
        key_env = section.get("api_key_env")
        if key_env:
            api_key = os.environ.get(key_env, "")
            if not api_key:
                raise ProviderSetupError(f"credential env var {key_env} is not set")
        return HttpProvider(
            endpoint,
            api_key=api_key,
            timeout_s=float(section.get("timeout_s", 120)),
            max_retries=int(section.get("retries", 3)),
        )
    raise ProviderSetupError(f"unknown provider kind {kind!r}")


def discover_tasks(doc: dict, pattern: Optional[str]) -> list[TaskSpec]:
    run = doc.get("run", {})
    tasks_dir = run.get("tasks_dir")
    if not tasks_dir:
        raise ConfigError("[run] tasks_dir is required to resolve tasks")
    root = Path(tasks_dir)
    if not root.is_dir():
        raise ConfigError(f"tasks_dir does not exist: {root}")
    specs = []
    for path in sorted(root.rglob("*.py")):
        task_id = path.relative_to(root).with_suffix("").as_posix()
        if pattern and not fnmatch.fnmatch(task_id, pattern):
            continue
        text = path.read_text()
        if "class Model" not in text:
            raise ConfigError(f"task {task_id}: no `class Model` in {path}")
        level = task_id.split("/")[0] if "/" in task_id else None
        specs.append(TaskSpec(task_id=task_id, reference_path=path, level_tag=level))
    if not specs:
        raise ConfigError(f"no tasks match {pattern!r} under {root}")
    return specs


def _dry_run(config: RunConfig) -> int:
    print(json.dumps(config.resolved(), indent=2))
    templates = load_templates(config.templates_dir)
    reference = config.load_reference()
    placeholder = EvaluationOutcome(compiled=True, correct=True, runtime_ms=1.0)
    tree = init_tree(reference, placeholder)
    window = build_plan_window(tree, 0, config.leaderboard_r, config.window_cap, random.Random(config.seed))
    window_text = render_window(window, tree, templates)
    system_text, user_text = assemble_prompt("plan", window_text, reference, reference, templates)
    print("\n--- first prompt (plan role, system) ---")
    print(system_text)
    print("\n--- first prompt (plan role, user) ---")
    print(user_text)
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        doc = load_config_doc(Path(args.config))
        tasks = discover_tasks(doc, args.task)
        out_dir = Path(args.out) if args.out else Path(doc.get("run", {}).get("out_dir", "runs"))
        configs = []
        for task in tasks:
            run_dir = out_dir / f"{task.task_id.replace('/', '__')}__{args.agent}"
            configs.append(build_run_config(doc, task, args.agent, run_dir, args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        return _dry_run(configs[0])
    try:
        provider = build_provider(doc)
    except ProviderSetupError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    try:
        evaluator = build_evaluator(doc, configs[0].num_warmup)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    runner = RUNNERS[args.agent]

    def one(config: RunConfig):
        report = runner(config, provider, evaluator)
        print(
            f"{config.run_dir}: attempts={report.attempts_used} "
            f"best={report.best_node} best_runtime_ms={report.best_runtime_ms}"
        )

    try:
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                list(pool.map(one, configs))
        else:
            for config in configs:
                one(config)
    except EvaluatorProbeError as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    return EXIT_OK


def cmd_resume(args) -> int:
    try:
        doc = load_config_doc(Path(args.config))
        provider = build_provider(doc)
        evaluator = build_evaluator(doc, int(doc.get("run", {}).get("warmups", 100)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderSetupError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    try:
        report = orchestrator_resume(Path(args.run_dir), provider, evaluator)
    except CheckpointError as exc:
        print(f"resume error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"resumed: attempts={report.attempts_used} best={report.best_node}")
    return EXIT_OK


def cmd_report(args) -> int:
    by_agent: dict[str, list] = {}
    for run_dir in args.run_dirs:
        try:
            result = task_result_from_run_dir(Path(run_dir))
        except (OSError, ValueError, KeyError) as exc:
            print(f"report error: {run_dir} is not a finished run directory ({exc})", file=sys.stderr)
            return EXIT_CONFIG
        by_agent.setdefault(result.agent, []).append(result)
    print(render_report(by_agent, format="machine" if args.json else "table"), end="")
    return EXIT_OK


def cmd_export_tree(args) -> int:
    tree_path = Path(args.run_dir) / "tree.json"
    try:
        tree = SearchTree.from_json(tree_path.read_text())
    except (OSError, ValueError) as exc:
        print(f"export error: cannot load {tree_path} ({exc})", file=sys.stderr)
        return EXIT_CONFIG
    lines = ["digraph search_tree {"]
    for node_id in sorted(tree.nodes):
        node = tree.node(node_id)
        if node.outcome.success:
            status = "ok"
            label = f"{node_id}\\n{score(node):.4g} ms\\n{status}"
        else:
            status = "incorrect" if node.outcome.compiled else "compile-fail"
            label = f"{node_id}\\ninf\\n{status}"
        lines.append(f'  n{node_id} [label="{label}"];')
    for node_id in sorted(tree.nodes):
        for child in tree.children(node_id):
            lines.append(f"  n{node_id} -> n{child};")
    lines.append("}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_eval_check(args) -> int:
    try:
        doc = load_config_doc(Path(args.config))
        evaluator = build_evaluator(doc, int(doc.get("run", {}).get("warmups", 100)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    good = evaluator.evaluate(PROBE_REFERENCE, PROBE_GOOD_CANDIDATE)
    bad = evaluator.evaluate(PROBE_REFERENCE, PROBE_BAD_CANDIDATE)
    print(f"known-good probe: compiled={good.compiled} correct={good.correct} runtime_ms={good.runtime_ms}")
    print(f"known-bad probe:  compiled={bad.compiled} correct={bad.correct}")
    if good.success and not bad.success:
        print("eval-check: PASS")
        return EXIT_OK
    print("eval-check: FAIL", file=sys.stderr)
    return EXIT_EVALUATOR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelsearch")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an agent over the configured tasks")
    run.add_argument("--config", required=True)
    run.add_argument("--agent", choices=AGENT_NAMES, default="stark")
    run.add_argument("--task", help="glob over task ids", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--budget", type=int, default=None)
    run.add_argument("--dry-run", action="store_true")
    run.add_argument("--out", default=None)
    run.add_argument("--jobs", type=int, default=1)
    run.set_defaults(func=cmd_run)

    res = sub.add_parser("resume", help="continue an interrupted run")
    res.add_argument("run_dir")
    res.add_argument("--config", required=True)
    res.set_defaults(func=cmd_resume)

    rep = sub.add_parser("report", help="aggregate metrics over run directories")
    rep.add_argument("run_dirs", nargs="+")
    rep.add_argument("--json", action="store_true")
    rep.set_defaults(func=cmd_report)

    exp = sub.add_parser("export-tree", help="emit the search tree as graphviz dot")
    exp.add_argument("run_dir")
    exp.set_defaults(func=cmd_export_tree)

    chk = sub.add_parser("eval-check", help="probe the configured evaluator")
    chk.add_argument("--config", required=True)
    chk.set_defaults(func=cmd_eval_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
