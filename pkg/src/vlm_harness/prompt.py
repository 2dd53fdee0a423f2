"""Prompt assembly.

Every request is built from the same four parts, in order: persona role,
task question, background theory, and answer-format instruction.  Empty parts
are skipped; the rest are joined with single newlines.  When reasoning mode is
active the task's own format instruction is replaced by the chain-of-thought
directive so the reply ends in a machine-readable ``ANSWER:`` line.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import TaskSpec, TaskType

# Bump when the directive wording changes; recorded runs are only comparable
# within one directive version.
COT_DIRECTIVE_VERSION = 1

COT_ANSWER_PLACEHOLDERS = {
    TaskType.NUMERIC: "<integer>",
    TaskType.CATEGORY: "<label>",
    TaskType.BOOLEAN: "<yes or no>",
    TaskType.TEXT: "<text>",
}


@dataclass(frozen=True)
class PromptText:
    text: str
    reasoning_active: bool


def cot_directive(task_type: TaskType) -> str:
    """Chain-of-thought instruction appended in place of the format part."""
    placeholder = COT_ANSWER_PLACEHOLDERS[task_type]
    return (
        "First describe what you observe in the image. "
        "Then reason step by step towards the answer. "
        "End your response with one final line of exactly this form:\n"
        f"ANSWER: {placeholder}"
    )


def build_prompt(task: TaskSpec, global_role: str = "") -> PromptText:
    """Assemble the full prompt for one task.

    A per-task role wins over the global role.  With reasoning enabled,
    ``task.format`` never appears in the output; the directive replaces it.
    """
    role = task.role or global_role
    if task.reasoning_enabled:
        format_part = cot_directive(task.task_type)
    else:
        format_part = task.format
    parts = [part for part in (role, task.task, task.theory, format_part) if part]
    return PromptText("\n".join(parts), task.reasoning_enabled)
