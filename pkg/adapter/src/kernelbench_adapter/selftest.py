"""Self-test: protocol conformance everywhere, device probes when CUDA exists."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

from .server import PROTOCOL_VERSION, AdapterConfig, serve_once

REFERENCE = """\
import torch
import torch.nn as nn


class Model(nn.Module):
    def forward(self, x):
        return x * 2 + 1


def get_inputs():
    return [torch.randn(256, 256)]


def get_init_inputs():
    return []
"""

IDENTITY_CANDIDATE = REFERENCE + "\n\nclass ModelNew(Model):\n    pass\n"

SYNTAX_ERROR_CANDIDATE = "class ModelNew(:\n"

WRONG_OUTPUT_CANDIDATE = REFERENCE.replace("class Model(", "class _Base(") + """

class ModelNew(_Base):
    def forward(self, x):
        return x * 2  # drops the +1
"""


@dataclass
class SelfTestReport:
    protocol_pass: bool
    device_checked: bool
    device_pass: bool
    details: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.protocol_pass and (self.device_pass or not self.device_checked)

    def render(self) -> str:
        lines = [f"protocol conformance: {'PASS' if self.protocol_pass else 'FAIL'}"]
        if self.device_checked:
            lines.append(f"device checks: {'PASS' if self.device_pass else 'FAIL'}")
        else:
            lines.append("device checks: SKIPPED (no CUDA device)")
        lines.extend(self.details)
        return "\n".join(lines)


def _request_line(reference: str, candidate: str, device: str = "") -> str:
    return json.dumps(
        {
            "protocol": PROTOCOL_VERSION,
            "reference_source": reference,
            "candidate_source": candidate,
            "num_warmup": 2,
            "num_trials": 3,
            "device_hint": device,
        }
    ) + "\n"


def _roundtrip(raw_line: str, config: AdapterConfig) -> dict:
    out = io.StringIO()
    status = serve_once(io.StringIO(raw_line), out, config)
    payload = out.getvalue()
    lines = payload.splitlines()
    if status != 0 or len(lines) != 1:
        raise AssertionError(f"expected one response line and exit 0, got {status}: {payload!r}")
    doc = json.loads(lines[0])
    if doc.get("protocol") != PROTOCOL_VERSION:
        raise AssertionError(f"response is not protocol-1: {doc}")
    for key in ("compiled", "correct", "runtime_ms", "compiler_log", "execution_log"):
        if key not in doc:
            raise AssertionError(f"response missing {key}: {doc}")
    return doc


def self_test(config: AdapterConfig) -> SelfTestReport:
    details = []
    protocol_pass = True
    canned = [
        ("well-formed", _request_line(REFERENCE, IDENTITY_CANDIDATE, device="cpu")),
        ("malformed", "this is not json\n"),
        ("unsupported-version", json.dumps({"protocol": 99}) + "\n"),
    ]
    for name, line in canned:
        try:
            doc = _roundtrip(line, config)
            details.append(f"  conformance[{name}]: ok (compiled={doc['compiled']})")
        except AssertionError as exc:
            protocol_pass = False
            details.append(f"  conformance[{name}]: FAIL ({exc})")

    try:
        import torch

        device_available = torch.cuda.is_available()
    except ImportError:
        device_available = False
    if not device_available:
        return SelfTestReport(protocol_pass, device_checked=False, device_pass=False, details=details)

    device = config.device or "cuda:0"
    probes = [
        ("identity", IDENTITY_CANDIDATE, lambda d: d["compiled"] and d["correct"] and d["runtime_ms"]),
        ("syntax-error", SYNTAX_ERROR_CANDIDATE, lambda d: not d["compiled"] and d["compiler_log"]),
        ("wrong-output", WRONG_OUTPUT_CANDIDATE, lambda d: d["compiled"] and not d["correct"]),
    ]
    device_pass = True
    for name, candidate, check in probes:
        doc = _roundtrip(_request_line(REFERENCE, candidate, device=device), config)
        if check(doc):
            details.append(f"  probe[{name}]: ok")
        else:
            device_pass = False
            details.append(f"  probe[{name}]: FAIL ({doc})")
    return SelfTestReport(protocol_pass, device_checked=True, device_pass=device_pass, details=details)
