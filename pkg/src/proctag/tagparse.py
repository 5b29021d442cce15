"""Pseudo-code parsing and function-name tag extraction.

Grammar, one step per line (the ``step<N>:`` prefix is optional)::

    step1: t = find_table(document)
    step2: v = extract_value(t, "Total")

Arguments are identifiers, quoted literals, or bare numbers. Tags are the
normalized function names in step order; when grammar parsing failed
upstream, a fallback scanner pulls ``identifier(`` call sites out of the raw
completion instead.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ProcTagError


class GrammarViolation(ProcTagError):
    def __init__(self, line_no: int, line: str, reason: str = ""):
        self.line_no = line_no
        self.line = line
        msg = f"pseudo-code grammar violation on line {line_no}: {line!r}"
        super().__init__(f"{msg} ({reason})" if reason else msg)


class NoTags(ProcTagError):
    """Neither the grammar path nor the fallback scanner produced a tag."""


class EmptyAfterNormalization(ProcTagError):
    """Normalizing a raw name left nothing."""


@dataclass(frozen=True)
class ProcessStep:
    """``output_var = function_name(args...)`` at 1-based position ``index``."""

    index: int
    output_var: str
    function_name: str
    args: list[str] = field(default_factory=list)


@dataclass
class RawTagSequence:
    """Ordered normalized function-name tags for one record."""

    record_id: str
    tags: list[str]
    source: str  # "grammar" or "fallback"


_STEP_RE = re.compile(
    r"^(?:step\d+\s*:\s*)?([A-Za-z_]\w*)\s*=\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$")
_ARG_RE = re.compile(r"^(?:[A-Za-z_]\w*|-?\d+(?:\.\d+)?)$")
_CALL_SITE_RE = re.compile(r"\b([A-Za-z_]\w*)\s*\(")
_CAMEL_RE = re.compile(r"(?<=[a-z])(?=[A-Z])")

# control flow and builtins are not process semantics
STOP_WORDS = frozenset({
    "if", "elif", "else", "for", "while", "return", "print", "def", "class",
    "switch", "case", "function", "lambda", "assert", "raise", "try", "except",
    "with", "len", "range", "str", "int", "float", "bool", "list", "dict",
    "set", "tuple", "sum", "min", "max", "abs", "sorted", "and", "or", "not",
    "in", "is", "input", "output",
})


def _split_args(raw: str, line_no: int, line: str) -> list[str]:
    args: list[str] = []
    buf: list[str] = []
    quote: str | None = None
    for ch in raw:
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            buf.append(ch)
        elif ch == ",":
            args.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    if quote:
        raise GrammarViolation(line_no, line, "unterminated quote")
    tail = "".join(buf).strip()
    if tail or args:
        args.append(tail)
    for arg in args:
        quoted = len(arg) >= 2 and arg[0] == arg[-1] and arg[0] in "\"'"
        if not arg or (not quoted and not _ARG_RE.match(arg)):
            raise GrammarViolation(line_no, line, f"bad argument {arg!r}")
    return args


def parse_pseudocode(block: str) -> list[ProcessStep]:
    """Parse a pseudo-code block into steps in textual order."""
    steps: list[ProcessStep] = []
    for line_no, raw_line in enumerate(block.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        m = _STEP_RE.match(line)
        if not m:
            raise GrammarViolation(line_no, line)
        output_var, function_name, raw_args = m.groups()
        steps.append(ProcessStep(index=len(steps) + 1, output_var=output_var,
                                 function_name=function_name,
                                 args=_split_args(raw_args, line_no, line)))
    return steps


def normalize_name(raw: str) -> str:
    """Lowercase snake_case: camelCase split at case boundaries, characters
    outside [a-z0-9_] dropped, underscore runs collapsed, leading digits and
    underscores stripped."""
    if not raw:
        raise EmptyAfterNormalization(raw)
    s = _CAMEL_RE.sub("_", raw).lower()
    s = re.sub(r"[^a-z0-9_]", "", s)
    s = re.sub(r"_+", "_", s).strip("_")
    s = s.lstrip("0123456789_")
    if not s:
        raise EmptyAfterNormalization(raw)
    return s


def collapse_adjacent(tags: list[str]) -> list[str]:
    """Collapse runs of identical adjacent tags to one (non-adjacent repeats
    are signal and stay)."""
    out: list[str] = []
    for tag in tags:
        if not out or out[-1] != tag:
            out.append(tag)
    return out


def scan_call_sites(text: str) -> list[str]:
    """Raw identifiers that appear directly before ``(`` in source order,
    minus the stop list."""
    return [name for name in _CALL_SITE_RE.findall(text)
            if name.lower() not in STOP_WORDS]


def extract_function_names(record_id: str, steps: list[ProcessStep] | None = None,
                           completion: str | None = None) -> RawTagSequence:
    """Tags from parsed steps when available, else from the fallback scanner
    over the raw completion."""
    if steps:
        raw_names = [s.function_name for s in steps]
        source = "grammar"
    elif completion:
        raw_names = scan_call_sites(completion)
        source = "fallback"
    else:
        raise NoTags(record_id)
    tags: list[str] = []
    for name in raw_names:
        try:
            tags.append(normalize_name(name))
        except EmptyAfterNormalization:
            continue
    tags = collapse_adjacent(tags)
    if not tags:
        raise NoTags(record_id)
    return RawTagSequence(record_id=record_id, tags=tags, source=source)
