"""Prompt template files and the parsed frame structure.

The template directory holds seven files: system.txt, example_arch.txt,
example_new_arch.txt, frame.txt, instr_plan.txt, instr_code.txt,
instr_debug.txt.  frame.txt is the single prompt skeleton shared by every
role; at load time it is split at fixed anchors into head / window region /
tail so the renderer can swap the history region in and out without touching
the surrounding bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

TEMPLATE_FILES = (
    "system.txt",
    "example_arch.txt",
    "example_new_arch.txt",
    "frame.txt",
    "instr_plan.txt",
    "instr_code.txt",
    "instr_debug.txt",
)

LATEST_ATTEMPT_HEADING = "Here is your latest attempt:"
SKIPPED_SENTINEL = "[...skipped]"
FIRST_BLOCK_HEADING = "**Kernel Source Code #1**"
COMPILER_HEADING = "**Compiler Observation**"
# the execution heading is spelled exactly as the operational template spells it
EXECUTION_HEADING = "**Kernel Execuation Result**"


class TemplateError(ValueError):
    """A template file is missing or a required placeholder is absent."""


@dataclass(frozen=True)
class Templates:
    system: str
    example_arch: str
    example_new_arch: str
    frame: str
    instr_plan: str
    instr_code: str
    instr_debug: str
    # derived frame parts
    frame_head: str  # up to the latest-attempt heading
    frame_tail: str  # after the window region, still holding {Role-specific Instruction}
    window_banner: str  # the [Dynamic Context Window] paragraph

    def instruction_for(self, role: str) -> str:
        try:
            return {
                "plan": self.instr_plan,
                "code": self.instr_code,
                "debug": self.instr_debug,
            }[role]
        except KeyError:
            raise TemplateError(f"no instruction template for role {role!r}") from None


def _split_frame(frame: str) -> tuple[str, str, str]:
    try:
        head, rest = frame.split(LATEST_ATTEMPT_HEADING, 1)
    except ValueError:
        raise TemplateError(f"frame is missing {LATEST_ATTEMPT_HEADING!r}") from None
    sentinel_at = rest.find(SKIPPED_SENTINEL)
    if sentinel_at < 0:
        raise TemplateError(f"frame is missing {SKIPPED_SENTINEL!r}")
    region = LATEST_ATTEMPT_HEADING + rest[: sentinel_at + len(SKIPPED_SENTINEL)]
    tail = rest[sentinel_at + len(SKIPPED_SENTINEL):]
    banner_start = region.find("[Dynamic Context Window]")
    banner_end = region.find("\n\n" + FIRST_BLOCK_HEADING)
    if banner_start < 0 or banner_end < 0:
        raise TemplateError("frame is missing the dynamic-context-window banner")
    banner = region[banner_start:banner_end]
    return head, tail, banner


def load_templates(directory: str | Path | None = None) -> Templates:
    """Read the seven template files from `directory`, or the packaged defaults."""
    contents: dict[str, str] = {}
    if directory is None:
        root = resources.files(__package__) / "templates"
        for name in TEMPLATE_FILES:
            ref = root / name
            if not ref.is_file():
                raise TemplateError(f"missing packaged template {name}")
            contents[name] = ref.read_text()
    else:
        directory = Path(directory)
        for name in TEMPLATE_FILES:
            path = directory / name
            if not path.is_file():
                raise TemplateError(f"missing template file {path}")
            contents[name] = path.read_text()
    frame = contents["frame.txt"]
    for placeholder in (
        "{System Message}",
        "{Example Architecture Source Code}",
        "{Example New Architecture Source Code}",
        "{Architecture Source Code}",
        "{Source Code of the Selected Node}",
        "{Role-specific Instruction}",
    ):
        if placeholder not in frame:
            raise TemplateError(f"frame is missing placeholder {placeholder}")
    head, tail, banner = _split_frame(frame)
    return Templates(
        system=contents["system.txt"],
        example_arch=contents["example_arch.txt"],
        example_new_arch=contents["example_new_arch.txt"],
        frame=frame,
        instr_plan=contents["instr_plan.txt"],
        instr_code=contents["instr_code.txt"],
        instr_debug=contents["instr_debug.txt"],
        frame_head=head,
        frame_tail=tail,
        window_banner=banner,
    )
