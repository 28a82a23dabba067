"""One evaluation per process: read a request line, answer a response line.

The candidate is executed as a module (its load_inline call is where the CUDA
build happens), instantiated next to the reference `Model`, checked for
functional equivalence on the task's `get_inputs`, and timed with device
events after the configured warm-ups.  Every failure mode is folded into the
response's log fields; as long as the request line was readable this process
answers exactly one well-formed protocol-1 response and exits 0.

Only run candidates you are prepared to execute: the kernel source is trusted
code by design, exactly as in the benchmark harness this mirrors.
"""

from __future__ import annotations

import io
import json
import time
import traceback
from dataclasses import dataclass
from statistics import fmean
from typing import Optional

PROTOCOL_VERSION = 1

DEFAULT_WARMUP = 100
DEFAULT_TRIALS = 100
DEFAULT_ATOL = 1e-2
DEFAULT_RTOL = 1e-2


@dataclass(frozen=True)
class AdapterConfig:
    device: str = ""  # "cuda:0", "cpu"; empty defers to the request's device_hint
    warmup: int = DEFAULT_WARMUP
    trials: int = DEFAULT_TRIALS
    atol: float = DEFAULT_ATOL
    rtol: float = DEFAULT_RTOL
    build_dir: Optional[str] = None
    seed: int = 1234


def _response(
    compiled: bool,
    correct: bool,
    runtime_ms: Optional[float] = None,
    compiler_log: str = "",
    execution_log: str = "",
) -> dict:
    return {
        "protocol": PROTOCOL_VERSION,
        "compiled": compiled,
        "correct": correct,
        "runtime_ms": runtime_ms,
        "compiler_log": compiler_log,
        "execution_log": execution_log,
    }


def _load_module(source: str, name: str) -> dict:
    namespace: dict = {"__name__": f"kernelbench_adapter.{name}"}
    code = compile(source, f"<{name}>", "exec")
    exec(code, namespace)
    return namespace


def _resolve_device(config: AdapterConfig, device_hint: str):
    import torch

    spec = config.device or device_hint or "cuda:0"
    if spec.isdigit():
        spec = f"cuda:{spec}"
    return torch.device(spec)


def _to_device(value, device):
    import torch

    if isinstance(value, torch.Tensor):
        return value.to(device)
    if isinstance(value, (list, tuple)):
        return type(value)(_to_device(v, device) for v in value)
    return value


def _outputs_match(expected, got, atol: float, rtol: float) -> tuple[bool, str]:
    import torch

    if isinstance(expected, torch.Tensor):
        if not isinstance(got, torch.Tensor):
            return False, f"expected a tensor, got {type(got).__name__}"
        if expected.shape != got.shape:
            return False, f"shape mismatch: {tuple(expected.shape)} vs {tuple(got.shape)}"
        if torch.allclose(expected, got.to(expected.dtype), atol=atol, rtol=rtol):
            return True, ""
        max_err = (expected - got.to(expected.dtype)).abs().max().item()
        return False, f"value mismatch: max abs error {max_err:g} (atol={atol}, rtol={rtol})"
    if isinstance(expected, (list, tuple)):
        if not isinstance(got, (list, tuple)) or len(expected) != len(got):
            return False, "output structure mismatch"
        for k, (e, g) in enumerate(zip(expected, got)):
            ok, why = _outputs_match(e, g, atol, rtol)
            if not ok:
                return False, f"output[{k}]: {why}"
        return True, ""
    return (expected == got, "" if expected == got else "non-tensor outputs differ")


def _time_model(model, inputs, device, warmup: int, trials: int) -> float:
    import torch

    with torch.no_grad():
        for _ in range(warmup):
            model(*inputs)
        if device.type == "cuda":
            torch.cuda.synchronize(device)
            samples = []
            for _ in range(trials):
                start = torch.cuda.Event(enable_timing=True)
                end = torch.cuda.Event(enable_timing=True)
                start.record()
                model(*inputs)
                end.record()
                torch.cuda.synchronize(device)
                samples.append(start.elapsed_time(end))
        else:
            samples = []
            for _ in range(trials):
                t0 = time.perf_counter()
                model(*inputs)
                samples.append((time.perf_counter() - t0) * 1000.0)
    return fmean(samples)


def evaluate_request(request: dict, config: AdapterConfig) -> dict:
    import torch

    warmup = int(request.get("num_warmup", config.warmup))
    trials = int(request.get("num_trials", config.trials))
    if config.build_dir:
        import os

        os.environ.setdefault("TORCH_EXTENSIONS_DIR", config.build_dir)

    try:
        reference_ns = _load_module(request["reference_source"], "reference")
        model_cls = reference_ns["Model"]
        get_inputs = reference_ns["get_inputs"]
        get_init_inputs = reference_ns["get_init_inputs"]
    except Exception:
        return _response(
            False, False,
            compiler_log=f"reference module failed to load:\n{traceback.format_exc()}",
        )

    # the candidate's module-level code is its build step (load_inline runs here)
    try:
        candidate_ns = _load_module(request["candidate_source"], "candidate")
        candidate_cls = candidate_ns["ModelNew"]
    except KeyError:
        return _response(False, False, compiler_log="candidate defines no ModelNew")
    except Exception:
        return _response(
            False, False, compiler_log=f"candidate failed to build:\n{traceback.format_exc()}"
        )

    try:
        device = _resolve_device(config, str(request.get("device_hint", "")))
        torch.manual_seed(config.seed)
        init_inputs = _to_device(get_init_inputs(), device)
        reference = model_cls(*init_inputs).to(device).eval()
        candidate = candidate_cls(*init_inputs).to(device).eval()
        torch.manual_seed(config.seed)
        inputs = _to_device(get_inputs(), device)
        with torch.no_grad():
            expected = reference(*inputs)
            got = candidate(*inputs)
        matched, why = _outputs_match(expected, got, config.atol, config.rtol)
        if not matched:
            return _response(True, False, execution_log=f"correctness check failed: {why}")
        runtime_ms = _time_model(candidate, inputs, device, warmup, trials)
    except Exception:
        return _response(
            True, False, execution_log=f"execution failed:\n{traceback.format_exc()}"
        )
    return _response(True, True, runtime_ms=runtime_ms)


def serve_once(stdin: io.TextIOBase, stdout: io.TextIOBase, config: AdapterConfig) -> int:
    """Answer exactly one request from stdin with one response line on stdout."""
    line = stdin.readline()
    try:
        request = json.loads(line)
        if not isinstance(request, dict):
            raise ValueError("request is not an object")
    except ValueError as exc:
        doc = _response(False, False, compiler_log=f"protocol error: malformed request: {exc}")
        stdout.write(json.dumps(doc) + "\n")
        stdout.flush()
        return 0
    if request.get("protocol") != PROTOCOL_VERSION:
        doc = _response(
            False, False,
            compiler_log=f"protocol error: unsupported protocol version {request.get('protocol')!r}",
        )
        stdout.write(json.dumps(doc) + "\n")
        stdout.flush()
        return 0
    missing = [key for key in ("reference_source", "candidate_source") if key not in request]
    if missing:
        doc = _response(
            False, False, compiler_log=f"protocol error: missing fields {missing}"
        )
    else:
        doc = evaluate_request(request, config)
    stdout.write(json.dumps(doc) + "\n")
    stdout.flush()
    return 0
