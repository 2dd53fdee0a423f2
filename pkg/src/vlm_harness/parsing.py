"""Typed parsing of cleaned model output.

All parsers are total: any input string maps to a value or to NA, never to an
exception.  NA carries no payload; downstream code treats it as a failed run.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .config import TaskType

NUMBER_PATTERN = re.compile(r"-?\d+(?:\.\d+)?")

# Ordered: longer prefixes first so the colon variant wins when both match.
CATEGORY_PREFIXES = (
    "The answer is:",
    "The answer is",
    "Based on the image,",
    "Answer:",
)

# "1"/"0" count as boolean words: annotations and short-form model answers
# both use them, and traces that never say yes/no often end in a bare digit.
_TRUE_WORDS = frozenset({"yes", "true", "1"})
_FALSE_WORDS = frozenset({"no", "false", "0"})

_ANSWER_MARKER = "answer:"
_ANSWER_SCAN_LINES = 5

_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class ParsedValue:
    """A typed parse result; ``value is None`` means NA."""

    value: float | str | bool | None
    reasoning_trace: str | None = None

    @property
    def is_na(self) -> bool:
        return self.value is None


NA = ParsedValue(None)


def parse_numeric(text: str) -> ParsedValue:
    """Extract the last number in the text.

    Models tend to restate intermediate figures before the final one, so the
    last match is the answer.  No thousands separators: "1,234" reads as 234.
    """
    last = None
    for match in NUMBER_PATTERN.finditer(text):
        last = match.group(0)
    if last is None:
        return NA
    value = float(last)
    if not math.isfinite(value):
        return NA
    return ParsedValue(value)


def parse_category(text: str) -> ParsedValue:
    label = text.strip()
    changed = True
    while changed:
        changed = False
        lowered = label.lower()
        for prefix in CATEGORY_PREFIXES:
            if lowered.startswith(prefix.lower()):
                label = label[len(prefix):].lstrip()
                changed = True
                break
    label = label.strip().rstrip(".").strip()
    if not label:
        return NA
    return ParsedValue(label)


def parse_boolean(text: str) -> ParsedValue:
    """Normalize a yes/no style reply to a boolean.

    The first word decides when it is itself a boolean word.  Otherwise the
    whole text is scanned, affirmative words first: a trace that concludes
    positively ("...sidewalk is present... 1") usually also contains an
    incidental "no" somewhere in the middle, so first-occurrence order would
    misread it.
    """
    words = _WORD_RE.findall(text.lower())
    if not words:
        return NA
    if words[0] in _TRUE_WORDS:
        return ParsedValue(True)
    if words[0] in _FALSE_WORDS:
        return ParsedValue(False)
    present = set(words)
    if present & _TRUE_WORDS:
        return ParsedValue(True)
    if present & _FALSE_WORDS:
        return ParsedValue(False)
    return NA


def parse_text(text: str) -> ParsedValue:
    stripped = text.strip()
    if not stripped:
        return NA
    return ParsedValue(stripped)


_PARSERS = {
    TaskType.NUMERIC: parse_numeric,
    TaskType.CATEGORY: parse_category,
    TaskType.BOOLEAN: parse_boolean,
    TaskType.TEXT: parse_text,
}


def parse_value(text: str, task_type: TaskType) -> ParsedValue:
    """Dispatch to the typed parser for ``task_type``."""
    return _PARSERS[task_type](text)


def parse_reasoning(text: str, task_type: TaskType) -> ParsedValue:
    """Extract the final answer from a chain-of-thought reply.

    The last 5 non-empty lines are scanned backwards for the case-insensitive
    substring ``ANSWER:``; the remainder of the first matching line goes
    through the typed parser.  If no line matches, or that parse comes back
    NA, the typed parser runs over the full text instead — replies that end
    in e.g. ``Conclusion: 1`` are recovered that way.  The full cleaned text
    is kept as the reasoning trace, NA or not.
    """
    lines = [line for line in text.splitlines() if line.strip()]
    result: ParsedValue | None = None
    for line in reversed(lines[-_ANSWER_SCAN_LINES:]):
        idx = line.lower().rfind(_ANSWER_MARKER)
        if idx < 0:
            continue
        candidate = parse_value(line[idx + len(_ANSWER_MARKER):], task_type)
        if not candidate.is_na:
            result = candidate
        break
    if result is None:
        result = parse_value(text, task_type)
    return ParsedValue(result.value, reasoning_trace=text)
