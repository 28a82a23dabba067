"""Improve-region span anchors: parsing, comment-style linting, stripping.

The plan agent marks the code block to improve with anchor comment lines
(`## <<<IMPROVE BEGIN>>>` ... `## <<<IMPROVE END>>>` in Python,
`// ...` inside an inline CUDA source string).  The code agent edits inside
the marked span; the markers themselves are always stripped before a kernel
reaches the evaluator.

Both BEGIN/END and BEGINS/ENDS spellings are accepted on input; BEGIN/END is
the canonical spelling on emission.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

BEGIN_MARKER = "<<<IMPROVE BEGIN>>>"
END_MARKER = "<<<IMPROVE END>>>"

_BEGIN_TOKENS = ("<<<IMPROVE BEGIN>>>", "<<<IMPROVE BEGINS>>>")
_END_TOKENS = ("<<<IMPROVE END>>>", "<<<IMPROVE ENDS>>>")

# A marker line: optional indent, optional comment leader, the marker token,
# nothing else.  Leaderless markers are recognized so they can be flagged and
# stripped, even though they are not valid comments.
_MARKER_RE = re.compile(
    r"^(?P<indent>\s*)(?P<leader>//|##|#)?\s*(?P<token><<<IMPROVE (?:BEGINS?|ENDS?)>>>)\s*$"
)

# Opening line of an inline CUDA source literal: `name_source = """` (KernelBench idiom).
_CUDA_STRING_OPEN_RE = re.compile(r'^\s*\w*_source\s*=\s*[rbuRBUfF]*("""|\'\'\')')

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)

PYTHON_ZONE = "python"
CPP_CUDA_ZONE = "cpp_cuda"


class ScaffoldError(ValueError):
    """Anchor markers are missing, unbalanced or malformed."""


class ResponseParseError(ValueError):
    """An agent response could not be split into its expected parts."""


@dataclass(frozen=True)
class MarkedRegion:
    start_line: int  # 1-based line of the BEGIN marker
    end_line: int  # 1-based line of the END marker
    language_zone: str  # PYTHON_ZONE | CPP_CUDA_ZONE
    begin_marker_text: str
    end_marker_text: str


@dataclass(frozen=True)
class StyleViolation:
    line: int
    reason: str


@dataclass(frozen=True)
class AnchoredScaffold:
    """A plan agent's output: annotated source plus its single prioritized advice."""

    text: str
    regions: tuple[MarkedRegion, ...]
    advice: str


def _cuda_zone_lines(text: str) -> set[int]:
    """1-based line numbers lying inside an inline CUDA source string literal."""
    inside: set[int] = set()
    open_quote: str | None = None
    for lineno, line in enumerate(text.split("\n"), start=1):
        if open_quote is None:
            m = _CUDA_STRING_OPEN_RE.match(line)
            if m:
                quote = m.group(1)
                rest = line[m.end():]
                if quote not in rest:
                    open_quote = quote
        else:
            if open_quote in line:
                open_quote = None
            else:
                inside.add(lineno)
    return inside


def _marker_lines(text: str):
    for lineno, line in enumerate(text.split("\n"), start=1):
        m = _MARKER_RE.match(line)
        if m:
            yield lineno, line, m


def parse_scaffold(text: str) -> list[MarkedRegion]:
    """Extract the marked improve regions, tolerating both marker spellings.

    Raises ScaffoldError on unbalanced, nested or absent markers.
    """
    cuda_lines = _cuda_zone_lines(text)
    regions: list[MarkedRegion] = []
    open_begin: tuple[int, str] | None = None
    for lineno, line, m in _marker_lines(text):
        token = m.group("token")
        if token in _BEGIN_TOKENS:
            if open_begin is not None:
                raise ScaffoldError(f"nested BEGIN marker at line {lineno}")
            open_begin = (lineno, line)
        else:
            if open_begin is None:
                raise ScaffoldError(f"END before BEGIN at line {lineno}")
            begin_line, begin_text = open_begin
            zone = CPP_CUDA_ZONE if begin_line in cuda_lines else PYTHON_ZONE
            regions.append(
                MarkedRegion(
                    start_line=begin_line,
                    end_line=lineno,
                    language_zone=zone,
                    begin_marker_text=begin_text,
                    end_marker_text=line,
                )
            )
            open_begin = None
    if open_begin is not None:
        raise ScaffoldError(f"unbalanced markers: BEGIN at line {open_begin[0]} has no END")
    if not regions:
        raise ScaffoldError("zero regions: no improve markers found")
    return regions


def validate_comment_style(region: MarkedRegion, text: str) -> StyleViolation | None:
    """Check that both marker lines are valid comments for the region's language zone."""
    for lineno, marker_text in (
        (region.start_line, region.begin_marker_text),
        (region.end_line, region.end_marker_text),
    ):
        m = _MARKER_RE.match(marker_text)
        leader = m.group("leader") if m else None
        if leader is None:
            return StyleViolation(line=lineno, reason="marker not a comment")
        wanted = ("//",) if region.language_zone == CPP_CUDA_ZONE else ("##", "#")
        if leader not in wanted:
            return StyleViolation(line=lineno, reason="wrong comment leader")
    return None


def strip_markers(text: str) -> str:
    """Remove every marker line, preserving all other bytes.  Idempotent."""
    kept = [
        line
        for line in text.splitlines(keepends=True)
        if not _MARKER_RE.match(line)
    ]
    return "".join(kept)


def fenced_code_blocks(text: str) -> list[str]:
    """Contents of all triple-backtick fenced blocks, in order."""
    return [m.group(1) for m in _FENCE_RE.finditer(text)]


def parse_plan_response(llm_text: str) -> AnchoredScaffold:
    """Split a plan response into advice prose and the annotated scaffold.

    Advice is the prose before the first fenced block; the scaffold is the last
    fenced block (planners often restate code, the final block is the deliverable).
    """
    blocks = fenced_code_blocks(llm_text)
    if not blocks:
        raise ResponseParseError("no code block in plan response")
    advice = llm_text.split("```", 1)[0].strip()
    if not advice:
        raise ResponseParseError("empty advice: no prose before the code block")
    scaffold_text = blocks[-1]
    regions = parse_scaffold(scaffold_text)
    return AnchoredScaffold(text=scaffold_text, regions=tuple(regions), advice=advice)
