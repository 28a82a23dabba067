#!/usr/bin/env python3
"""One-off: render the golden prompt files for the fixed three-node tree.

The outputs are hand-checked against the operational templates once, then
frozen; the test suite compares byte-for-byte.  Run from the repo root.
"""

import random
import sys
from pathlib import Path

sys.path.insert(0, "tests")

from golden_fixture import (  # noqa: E402
    golden_scaffold,
    golden_tree,
)

from kernelsearch.agents import assemble_prompt  # noqa: E402
from kernelsearch.context import (  # noqa: E402
    build_code_window,
    build_debug_window,
    build_plan_window,
    render_window,
)
from kernelsearch.prompting import load_templates  # noqa: E402

OUT = Path("tests/golden")


def main():
    templates = load_templates()
    tree = golden_tree()
    reference = tree.node(0).kernel_source
    rng = random.Random(0)

    plan_window = build_plan_window(tree, 0, r=2, cap=5, rng=rng)
    plan_text = render_window(plan_window, tree, templates)
    system, plan_user = assemble_prompt("plan", plan_text, reference, reference, templates)

    scaffold = golden_scaffold()
    code_window = build_code_window(tree, 0, cap=5, rng=rng)
    code_text = render_window(code_window, tree, templates, focus_text=scaffold.text)
    _, code_user = assemble_prompt("code", code_text, reference, scaffold.text, templates)

    debug_window = build_debug_window(tree, 2, cap=5, rng=rng)
    debug_text = render_window(debug_window, tree, templates)
    _, debug_user = assemble_prompt(
        "debug", debug_text, reference, tree.node(2).kernel_source, templates
    )

    OUT.mkdir(parents=True, exist_ok=True)
    for name, content in (
        ("prompt_system.txt", system),
        ("prompt_plan_user.txt", plan_user),
        ("prompt_code_user.txt", code_user),
        ("prompt_debug_user.txt", debug_user),
    ):
        (OUT / name).write_text(content)
        print(f"wrote {name}: {len(content)} bytes")


if __name__ == "__main__":
    main()
