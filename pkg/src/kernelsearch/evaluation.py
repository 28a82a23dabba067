"""Kernel evaluation: the subprocess wire protocol and a simulated landscape.

Real evaluators are separate processes speaking newline-delimited JSON on
stdin/stdout (one request line in, one response line out).  Nothing an
evaluator does -- crash, garbage output, hang -- can abort the engine; every
path collapses into a well-formed EvaluationOutcome.

The simulator is a deterministic stand-in for GPU evaluation at desk scale:
candidates declare optimizations as `// OPT:<name>` lines, each recognized
directive multiplies the runtime by a fixed factor, stacking distinct
directives is the only way down, and duplicates / bug tokens produce the
failure modes a real toolchain would.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from statistics import fmean
from typing import Optional, Sequence

from .tree import EvaluationOutcome

PROTOCOL_VERSION = 1

DEFAULT_NUM_WARMUP = 100
DEFAULT_NUM_TRIALS = 100
DEFAULT_TIMEOUT_S = 600


@dataclass(frozen=True)
class EvalRequest:
    reference_source: str
    candidate_source: str
    num_warmup: int = DEFAULT_NUM_WARMUP
    num_trials: int = DEFAULT_NUM_TRIALS
    timeout_s: int = DEFAULT_TIMEOUT_S
    device_hint: str = ""


def encode_request(request: EvalRequest) -> str:
    """One protocol-1 request line (newline-terminated)."""
    doc = {
        "protocol": PROTOCOL_VERSION,
        "reference_source": request.reference_source,
        "candidate_source": request.candidate_source,
        "num_warmup": request.num_warmup,
        "num_trials": request.num_trials,
        "device_hint": request.device_hint,
    }
    return json.dumps(doc) + "\n"


def decode_response(line: str) -> EvaluationOutcome:
    """Parse one response line; raises ValueError when it is not protocol-1."""
    doc = json.loads(line)
    if not isinstance(doc, dict):
        raise ValueError("response is not an object")
    if doc.get("protocol") != PROTOCOL_VERSION:
        raise ValueError(f"unsupported protocol version: {doc.get('protocol')!r}")
    return EvaluationOutcome(
        compiled=bool(doc["compiled"]),
        correct=bool(doc["correct"]),
        runtime_ms=doc["runtime_ms"],
        compiler_log=str(doc.get("compiler_log", "")),
        execution_log=str(doc.get("execution_log", "")),
    )


def _protocol_failure(log: str) -> EvaluationOutcome:
    return EvaluationOutcome(compiled=False, correct=False, compiler_log=log)


def identity_candidate(reference_source: str) -> str:
    """Wrap a reference architecture as a candidate that defines ModelNew.

    Evaluators judge candidates by their ModelNew class, so measuring the
    reference against itself (the baseline probe) needs this identity wrapper.
    Sources that already define ModelNew, or that are not Model-shaped at all,
    pass through unchanged.
    """
    if "class Model" in reference_source and "ModelNew" not in reference_source:
        return reference_source + "\n\nclass ModelNew(Model):\n    pass\n"
    return reference_source


def evaluate_subprocess(request: EvalRequest, evaluator_cmd: Sequence[str]) -> EvaluationOutcome:
    """Run one evaluation through an external evaluator process.

    The request timeout is enforced here: a hung evaluator is killed and
    reported as a compile failure with a timeout log.
    """
    try:
        proc = subprocess.Popen(
            list(evaluator_cmd),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except OSError as exc:
        return _protocol_failure(f"evaluator failed to start: {exc}")
    try:
        stdout, stderr = proc.communicate(encode_request(request), timeout=request.timeout_s)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        return _protocol_failure(f"evaluator timeout after {request.timeout_s}s")
    line = stdout.splitlines()[0] if stdout.splitlines() else ""
    if not line:
        return _protocol_failure(
            f"protocol error: no response (exit {proc.returncode}); stderr: {stderr[-2000:]}"
        )
    try:
        return decode_response(line)
    except (ValueError, KeyError, TypeError) as exc:
        return _protocol_failure(f"protocol error: {exc}; raw: {line[:2000]}")


# -- simulated landscape ---------------------------------------------------------

DIRECTIVE_PREFIX = "// OPT:"

DEFAULT_DIRECTIVE_FACTORS = {
    "tile": 0.6,
    "vectorize": 0.8,
    "fuse": 0.7,
    "unroll": 0.9,
}


@dataclass(frozen=True)
class SimLandscapeSpec:
    base_runtime_ms: float = 100.0
    directive_factors: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_DIRECTIVE_FACTORS)
    )
    bug_token: str = "BUG"


def _directives(candidate_source: str) -> list[str]:
    names = []
    for line in candidate_source.split("\n"):
        stripped = line.strip()
        if stripped.startswith(DIRECTIVE_PREFIX):
            names.append(stripped[len(DIRECTIVE_PREFIX):].strip())
    return names


def simulate_evaluate(candidate_source: str, spec: SimLandscapeSpec) -> EvaluationOutcome:
    """Deterministic desk-scale evaluation of a candidate against the landscape."""
    if spec.bug_token in candidate_source:
        return EvaluationOutcome(
            compiled=False,
            correct=False,
            compiler_log=f"simulated compile error: bug token {spec.bug_token!r} present",
        )
    names = _directives(candidate_source)
    recognized = [n for n in names if n in spec.directive_factors]
    duplicates = {n for n in recognized if recognized.count(n) > 1}
    if duplicates:
        dup = sorted(duplicates)[0]
        return EvaluationOutcome(
            compiled=True,
            correct=False,
            execution_log=f"simulated correctness failure: directive {dup!r} applied twice",
        )
    runtime = spec.base_runtime_ms
    for name in sorted(set(recognized)):
        runtime *= spec.directive_factors[name]
    return EvaluationOutcome(compiled=True, correct=True, runtime_ms=runtime)


def timing_summary(samples: Sequence[float]) -> float:
    """Aggregate timed trials into one number: the arithmetic mean."""
    if not samples:
        raise ValueError("no timing samples")
    return fmean(samples)


# -- engine-facing evaluator objects ----------------------------------------------


class SimulatorEvaluator:
    """In-process evaluator over a simulated landscape."""

    def __init__(self, spec: Optional[SimLandscapeSpec] = None):
        self.spec = spec or SimLandscapeSpec()

    def evaluate(self, reference_source: str, candidate_source: str) -> EvaluationOutcome:
        return simulate_evaluate(candidate_source, self.spec)


class SubprocessEvaluator:
    """Evaluator that shells out per evaluation, speaking the wire protocol."""

    def __init__(
        self,
        command: Sequence[str],
        num_warmup: int = DEFAULT_NUM_WARMUP,
        num_trials: int = DEFAULT_NUM_TRIALS,
        timeout_s: int = DEFAULT_TIMEOUT_S,
        device_hint: str = "",
    ):
        self.command = list(command)
        self.num_warmup = num_warmup
        self.num_trials = num_trials
        self.timeout_s = timeout_s
        self.device_hint = device_hint

    def evaluate(self, reference_source: str, candidate_source: str) -> EvaluationOutcome:
        request = EvalRequest(
            reference_source=reference_source,
            candidate_source=candidate_source,
            num_warmup=self.num_warmup,
            num_trials=self.num_trials,
            timeout_s=self.timeout_s,
            device_hint=self.device_hint,
        )
        return evaluate_subprocess(request, self.command)
