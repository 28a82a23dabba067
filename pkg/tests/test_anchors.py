import random

import pytest

from kernelsearch.anchors import (
    CPP_CUDA_ZONE,
    PYTHON_ZONE,
    ResponseParseError,
    ScaffoldError,
    fenced_code_blocks,
    parse_plan_response,
    parse_scaffold,
    strip_markers,
    validate_comment_style,
)

CUDA_SCAFFOLD = '''import torch
from torch.utils.cpp_extension import load_inline

my_kernel_source = """
#include <torch/extension.h>
__global__ void k(const float* a, float* out, int n) {
// <<<IMPROVE BEGIN>>>
// advice: vectorize the load
    int idx = blockIdx.x * blockDim.x + threadIdx.x;
    if (idx < n) out[idx] = a[idx] * 2.0f;
// <<<IMPROVE END>>>
}
"""

class ModelNew(torch.nn.Module):
    pass
'''

PY_SCAFFOLD = """import torch

class Model(torch.nn.Module):
    def forward(self, x):
## <<<IMPROVE BEGIN>>>
        # advice: fuse these two ops
        y = x * 2
        z = y + 1
## <<<IMPROVE END>>>
        return z
"""


def insert_markers(source: str, start: int, end: int, leader: str = "##",
                   begin: str = "<<<IMPROVE BEGIN>>>", end_tok: str = "<<<IMPROVE END>>>") -> str:
    """Test helper: wrap lines [start, end] of `source` (newline-terminated) in markers."""
    assert source.endswith("\n")
    lines = source.splitlines(keepends=True)
    lines[start:start] = [f"{leader} {begin}\n"]
    lines[end + 2:end + 2] = [f"{leader} {end_tok}\n"]
    return "".join(lines)


class TestParseScaffold:
    def test_cuda_zone_region(self):
        regions = parse_scaffold(CUDA_SCAFFOLD)
        assert len(regions) == 1
        assert regions[0].language_zone == CPP_CUDA_ZONE
        assert regions[0].start_line < regions[0].end_line

    def test_python_zone_region(self):
        regions = parse_scaffold(PY_SCAFFOLD)
        assert len(regions) == 1
        assert regions[0].language_zone == PYTHON_ZONE

    def test_begin_without_end(self):
        with pytest.raises(ScaffoldError, match="unbalanced"):
            parse_scaffold("x\n## <<<IMPROVE BEGIN>>>\ny\n")

    def test_end_before_begin(self):
        with pytest.raises(ScaffoldError, match="END before BEGIN"):
            parse_scaffold("x\n## <<<IMPROVE END>>>\ny\n")

    def test_nested_begin(self):
        text = "## <<<IMPROVE BEGIN>>>\n## <<<IMPROVE BEGIN>>>\n## <<<IMPROVE END>>>\n"
        with pytest.raises(ScaffoldError, match="nested"):
            parse_scaffold(text)

    def test_zero_regions(self):
        with pytest.raises(ScaffoldError, match="zero regions"):
            parse_scaffold("no markers here\n")

    def test_tolerant_spelling(self):
        text = "a\n## <<<IMPROVE BEGINS>>>\nb\n## <<<IMPROVE ENDS>>>\nc\n"
        regions = parse_scaffold(text)
        assert len(regions) == 1
        assert (regions[0].start_line, regions[0].end_line) == (2, 4)

    def test_spellings_are_equivalent(self):
        canonical = "a\n## <<<IMPROVE BEGIN>>>\nb\n## <<<IMPROVE END>>>\nc\n"
        tolerant = "a\n## <<<IMPROVE BEGINS>>>\nb\n## <<<IMPROVE ENDS>>>\nc\n"
        r1 = parse_scaffold(canonical)
        r2 = parse_scaffold(tolerant)
        assert [(r.start_line, r.end_line, r.language_zone) for r in r1] == [
            (r.start_line, r.end_line, r.language_zone) for r in r2
        ]

    def test_multiple_regions(self):
        text = (
            "## <<<IMPROVE BEGIN>>>\na\n## <<<IMPROVE END>>>\n"
            "x\n"
            "## <<<IMPROVE BEGIN>>>\nb\n## <<<IMPROVE END>>>\n"
        )
        regions = parse_scaffold(text)
        assert len(regions) == 2
        assert regions[0].end_line < regions[1].start_line


class TestCommentStyle:
    def test_python_double_hash_ok(self):
        region = parse_scaffold(PY_SCAFFOLD)[0]
        assert validate_comment_style(region, PY_SCAFFOLD) is None

    def test_cuda_slashes_ok(self):
        region = parse_scaffold(CUDA_SCAFFOLD)[0]
        assert validate_comment_style(region, CUDA_SCAFFOLD) is None

    def test_bare_marker_flagged(self):
        text = "a\n<<<IMPROVE BEGIN>>>\nb\n## <<<IMPROVE END>>>\n"
        region = parse_scaffold(text)[0]
        violation = validate_comment_style(region, text)
        assert violation is not None
        assert violation.reason == "marker not a comment"

    def test_wrong_leader_flagged(self):
        text = "a\n// <<<IMPROVE BEGIN>>>\nb\n// <<<IMPROVE END>>>\n"
        region = parse_scaffold(text)[0]
        assert region.language_zone == PYTHON_ZONE
        violation = validate_comment_style(region, text)
        assert violation is not None
        assert violation.reason == "wrong comment leader"

    def test_single_hash_ok_in_python(self):
        text = "a\n# <<<IMPROVE BEGIN>>>\nb\n# <<<IMPROVE END>>>\n"
        region = parse_scaffold(text)[0]
        assert validate_comment_style(region, text) is None


class TestStripMarkers:
    def test_identity_without_markers(self):
        text = "def f():\n    return 1\n"
        assert strip_markers(text) == text

    def test_round_trip(self):
        source = "line one\nline two\nline three\n"
        marked = insert_markers(source, 1, 1)
        assert strip_markers(marked) == source

    def test_idempotent_on_fuzzed_inputs(self):
        rng = random.Random(77)
        alphabet = ["def f():", "    x = 1", "", "# comment", "  y = [1,2]", "return x"]
        for _ in range(200):
            text = "\n".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            once = strip_markers(text)
            assert strip_markers(once) == once

    def test_strips_all_leader_styles(self):
        text = (
            "a\n// <<<IMPROVE BEGIN>>>\nb\n<<<IMPROVE ENDS>>>\n"
            "# <<<IMPROVE BEGIN>>>\nc\n  ## <<<IMPROVE END>>>\n"
        )
        assert strip_markers(text) == "a\nb\nc\n"


class TestParsePlanResponse:
    def test_happy_path(self):
        response = (
            "Use shared-memory tiling to cut global loads.\n\n"
            "```python\n" + PY_SCAFFOLD + "```\n"
        )
        scaffold = parse_plan_response(response)
        assert scaffold.advice.startswith("Use shared-memory tiling")
        assert len(scaffold.regions) == 1
        assert scaffold.text == PY_SCAFFOLD

    def test_prose_only(self):
        with pytest.raises(ResponseParseError, match="no code block"):
            parse_plan_response("Just tile it better.")

    def test_last_block_wins(self):
        response = (
            "Advice first.\n"
            "```python\nthrowaway = True\n```\n"
            "more prose\n"
            "```python\n" + PY_SCAFFOLD + "```\n"
        )
        scaffold = parse_plan_response(response)
        assert scaffold.text == PY_SCAFFOLD

    def test_empty_advice_rejected(self):
        with pytest.raises(ResponseParseError, match="advice"):
            parse_plan_response("```python\n" + PY_SCAFFOLD + "```\n")

    def test_block_without_regions_rejected(self):
        with pytest.raises(ScaffoldError):
            parse_plan_response("Advice.\n```python\nx = 1\n```\n")


class TestProperties:
    def test_round_trip_fuzzed(self):
        # insert markers around an arbitrary span, strip, expect the original
        rng = random.Random(123)
        alphabet = ["x = 1", "def g(a):", "    pass", "", "  z = a + 1", "print(z)"]
        for _ in range(300):
            n = rng.randint(1, 15)
            source = "\n".join(rng.choice(alphabet) for _ in range(n)) + "\n"
            start = rng.randrange(n)
            end = rng.randrange(start, n)
            marked = insert_markers(source, start, end)
            assert strip_markers(marked) == source

    def test_regions_are_traceable(self):
        for text in (CUDA_SCAFFOLD, PY_SCAFFOLD):
            lines = text.split("\n")
            for region in parse_scaffold(text):
                body = "\n".join(lines[region.start_line:region.end_line - 1])
                assert body in text


def test_fenced_code_blocks_order():
    text = "a\n```\nfirst\n```\nmid\n```py\nsecond\n```\n"
    assert fenced_code_blocks(text) == ["first\n", "second\n"]
