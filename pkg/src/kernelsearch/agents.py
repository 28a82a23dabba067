"""The plan / code / debug agent roles and the completion provider contract.

Each agent step is a single system+user exchange: assemble the prompt from the
shared frame plus the role instruction, call the provider at the role's
temperature, parse the response.  Parse and provider failures raise
AgentStepFailure; the orchestrator turns those into failed children so one
attempt is consumed either way.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

from .anchors import (
    AnchoredScaffold,
    ResponseParseError,
    ScaffoldError,
    fenced_code_blocks,
    parse_plan_response,
    strip_markers,
)
from .context import ContextWindow, render_window
from .prompting import LATEST_ATTEMPT_HEADING, SKIPPED_SENTINEL, Templates

PLAN_TEMPERATURE = 0.8
CODE_TEMPERATURE = 0.1
DEBUG_TEMPERATURE = 0.1
DEFAULT_MAX_OUTPUT_TOKENS = 8192

RETRY_BACKOFF_S = (1.0, 2.0, 4.0)
DEFAULT_TIMEOUT_S = 120.0


class ProviderError(RuntimeError):
    """The provider could not produce a completion (transport failure, script exhausted)."""


class AgentStepFailure(RuntimeError):
    """One agent step failed; the attempt becomes a failed child.

    kind is "provider" (transport gave out) or "parse" (response unusable).
    """

    def __init__(self, kind: str, reason: str, raw_text: str = ""):
        super().__init__(reason)
        self.kind = kind
        self.reason = reason
        self.raw_text = raw_text


@dataclass(frozen=True)
class AgentRole:
    name: str  # plan | code | debug
    temperature: float
    model_id: str = "default-model"
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    template_id: str = ""


def default_roles(model_id: str = "default-model") -> dict[str, AgentRole]:
    return {
        "plan": AgentRole("plan", PLAN_TEMPERATURE, model_id),
        "code": AgentRole("code", CODE_TEMPERATURE, model_id),
        "debug": AgentRole("debug", DEBUG_TEMPERATURE, model_id),
    }


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    system_text: str
    user_text: str
    temperature: float
    max_output_tokens: int
    request_tag: str  # "<run_id>:<attempt>:<role>"

    def __post_init__(self):
        if not self.system_text:
            raise ValueError("system_text must be nonempty")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    provider_latency_ms: float = 0.0
    truncated: bool = False


class CompletionProvider(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def parse_request_tag(tag: str) -> tuple[str, int, str]:
    """Split a request tag into (run_id, attempt_index, role)."""
    run_id, attempt, role = tag.rsplit(":", 2)
    return run_id, int(attempt), role


class ScriptedProvider:
    """Deterministic test double: replays a sequence, or a map keyed by (role, attempt).

    Every request is recorded on .requests so tests can assert temperatures and
    prompt contents.
    """

    def __init__(
        self,
        responses: Optional[list[str]] = None,
        by_role_attempt: Optional[dict[tuple[str, int], str]] = None,
    ):
        if (responses is None) == (by_role_attempt is None):
            raise ValueError("provide exactly one of responses / by_role_attempt")
        self._sequence = list(responses) if responses is not None else None
        self._mapping = dict(by_role_attempt) if by_role_attempt is not None else None
        self._cursor = 0
        self.requests: list[CompletionRequest] = []

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self.requests.append(request)
        if self._sequence is not None:
            if self._cursor >= len(self._sequence):
                raise ProviderError("script exhausted")
            text = self._sequence[self._cursor]
            self._cursor += 1
            return CompletionResponse(text=text)
        _, attempt, role = parse_request_tag(request.request_tag)
        try:
            text = self._mapping[(role, attempt)]
        except KeyError:
            raise ProviderError(f"script exhausted: no response for ({role!r}, {attempt})") from None
        return CompletionResponse(text=text)


class HttpProvider:
    """Chat-completions provider over HTTP (OpenAI-style wire format).

    Retries transient failures up to 3 times with exponential backoff
    (1 s, 2 s, 4 s); each call has its own timeout.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_retries: int = 3,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        import requests

        payload = {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = "no attempt made"
        for attempt in range(self.max_retries):
            start = time.monotonic()
            try:
                resp = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
            else:
                if resp.status_code >= 500:
                    last_error = f"server error: HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise ProviderError(f"request rejected: HTTP {resp.status_code}: {resp.text[:500]}")
                else:
                    body = resp.json()
                    choice = body["choices"][0]
                    return CompletionResponse(
                        text=choice["message"]["content"],
                        provider_latency_ms=(time.monotonic() - start) * 1000.0,
                        truncated=choice.get("finish_reason") == "length",
                    )
            if attempt < self.max_retries - 1:
                self._sleep(RETRY_BACKOFF_S[min(attempt, len(RETRY_BACKOFF_S) - 1)])
        raise ProviderError(f"provider exhausted retries: {last_error}")


# -- prompt assembly ------------------------------------------------------------


def assemble_prompt(
    role: str,
    window_text: str,
    reference_source: str,
    focus_source: str,
    templates: Templates,
) -> tuple[str, str]:
    """Build (system_text, user_text) for one agent call.

    The frame's history region is replaced by `window_text` (a render_window
    result, which already carries the latest-attempt block).  When window_text
    is empty a minimal latest-attempt block is built from focus_source.  The
    system message travels on the system channel, not inline in user_text.
    """
    if not window_text:
        focus = focus_source.rstrip("\n")
        window_text = f"{LATEST_ATTEMPT_HEADING}\n{focus}"
    user_text = (
        templates.frame_head.replace("{System Message}\n\n", "", 1)
        .replace("{Example Architecture Source Code}", templates.example_arch.rstrip("\n"))
        .replace("{Example New Architecture Source Code}", templates.example_new_arch.rstrip("\n"))
        .replace("{Architecture Source Code}", reference_source.rstrip("\n"))
        + window_text
        + templates.frame_tail.replace(
            "{Role-specific Instruction}", templates.instruction_for(role).rstrip("\n")
        )
    )
    if SKIPPED_SENTINEL in user_text or "{" + "Source Code of the Selected Node}" in user_text:
        raise ValueError("frame region substitution failed")
    return templates.system.rstrip("\n"), user_text


def extract_final_code(llm_text: str) -> str:
    """The last fenced code block that defines ModelNew."""
    blocks = fenced_code_blocks(llm_text)
    if not blocks:
        raise ResponseParseError("no code block in response")
    for block in reversed(blocks):
        if "ModelNew" in block:
            return block
    raise ResponseParseError("no ModelNew definition found in any code block")


# -- agent steps ----------------------------------------------------------------


def _complete(
    provider: CompletionProvider, role: AgentRole, system_text: str, user_text: str, tag: str
) -> str:
    request = CompletionRequest(
        model_id=role.model_id,
        system_text=system_text,
        user_text=user_text,
        temperature=role.temperature,
        max_output_tokens=role.max_output_tokens,
        request_tag=tag,
    )
    try:
        return provider.complete(request).text
    except ProviderError as exc:
        raise AgentStepFailure("provider", str(exc)) from exc


def _reference_source(tree) -> str:
    return tree.node(tree.root).kernel_source


def plan_step(
    provider: CompletionProvider,
    window: ContextWindow,
    tree,
    roles: dict[str, AgentRole],
    templates: Templates,
    tag: str,
) -> AnchoredScaffold:
    """Ask the planner for one prioritized advice plus an anchored scaffold."""
    if window.role != "plan":
        raise ValueError(f"plan_step needs a plan window, got {window.role!r}")
    window_text = render_window(window, tree, templates)
    focus_source = tree.node(window.focus).kernel_source
    system_text, user_text = assemble_prompt(
        "plan", window_text, _reference_source(tree), focus_source, templates
    )
    text = _complete(provider, roles["plan"], system_text, user_text, tag)
    try:
        return parse_plan_response(text)
    except (ResponseParseError, ScaffoldError) as exc:
        raise AgentStepFailure("parse", f"plan response unusable: {exc}", text) from exc


def code_step(
    provider: CompletionProvider,
    window: ContextWindow,
    tree,
    scaffold: AnchoredScaffold,
    roles: dict[str, AgentRole],
    templates: Templates,
    tag: str,
) -> str:
    """Realize the annotated scaffold into a kernel; markers never leave this step."""
    if window.role != "code":
        raise ValueError(f"code_step needs a code window, got {window.role!r}")
    # the coder sees the annotated scaffold where the focus source would go
    window_text = render_window(window, tree, templates, focus_text=scaffold.text)
    system_text, user_text = assemble_prompt(
        "code", window_text, _reference_source(tree), scaffold.text, templates
    )
    text = _complete(provider, roles["code"], system_text, user_text, tag)
    try:
        return strip_markers(extract_final_code(text))
    except ResponseParseError as exc:
        raise AgentStepFailure("parse", f"code response unusable: {exc}", text) from exc


def debug_step(
    provider: CompletionProvider,
    window: ContextWindow,
    tree,
    buggy_kernel: str,
    roles: dict[str, AgentRole],
    templates: Templates,
    tag: str,
) -> str:
    """Ask for a repair of the focus node's kernel.

    The focus node's compiler and execution logs already travel inside the
    rendered window (the latest-attempt block carries its observations).
    """
    if window.role != "debug":
        raise ValueError(f"debug_step needs a debug window, got {window.role!r}")
    window_text = render_window(window, tree, templates, focus_text=buggy_kernel)
    system_text, user_text = assemble_prompt(
        "debug", window_text, _reference_source(tree), buggy_kernel, templates
    )
    text = _complete(provider, roles["debug"], system_text, user_text, tag)
    try:
        return strip_markers(extract_final_code(text))
    except ResponseParseError as exc:
        raise AgentStepFailure("parse", f"debug response unusable: {exc}", text) from exc
