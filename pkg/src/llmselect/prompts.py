"""Prompt rendering from the checked-in templates, and reply parsing.

Templates live under `prompts/` as package data, with `@{...}@` and
`${...}$` placeholders kept exactly as the project standardized them. A
pair of lines containing a single `$` bounds the candidate-block region,
which rendering replaces with one numbered block per record. Parsers are
total: no reply string raises.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .corpus import InstructionRecord, render_block
from .errors import LlmSelectError


class BadBudget(LlmSelectError):
    pass


class BadOrdinal(LlmSelectError):
    pass


@dataclass(frozen=True)
class RenderedPrompt:
    """A fully substituted prompt plus the ordinal→record-id bookkeeping
    needed to interpret the reply."""

    text: str
    query_size: int
    expected_outputs: int
    record_ids: dict[int, str] = field(default_factory=dict)
    kind: str = "selection"

    def __post_init__(self):
        if self.record_ids:
            if self.query_size != len(self.record_ids):
                raise ValueError("query_size must match the number of candidate blocks")
            if not 1 <= self.expected_outputs <= self.query_size:
                raise ValueError("expected_outputs must be in [1, query_size]")


@dataclass(frozen=True)
class ParsedSelection:
    ordinals: list[int]
    status: str  # ok | partial | empty


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (resources.files("llmselect") / "prompts" / f"{name}.txt").read_text(encoding="utf-8")


_PLACEHOLDER = re.compile(r"@\{(?P<at>[^{}]*)\}@|\$\{(?P<dollar>[^{}]*)\}\$")


def _render(name: str, records: list[InstructionRecord] | None, values: dict[str, str]) -> str:
    """Substitute placeholders and splice candidate blocks into a template.

    Substitution runs in one pass over the template text only, so record
    content and values are never re-scanned for placeholders.
    """
    text = _template(name)

    def substitute(match: re.Match) -> str:
        key = match.group("at") if match.group("at") is not None else match.group("dollar")
        return values[key]

    if records is not None:
        lines = text.split("\n")
        bounds = [i for i, line in enumerate(lines) if line == "$"]
        head = _PLACEHOLDER.sub(substitute, "\n".join(lines[: bounds[0]]))
        tail = _PLACEHOLDER.sub(substitute, "\n".join(lines[bounds[1] + 1 :]))
        blocks = "\n".join(render_block(r, i) for i, r in enumerate(records, start=1))
        rendered = "\n".join([head, blocks, tail])
    else:
        rendered = _PLACEHOLDER.sub(substitute, text)
    return rendered.rstrip("\n")


def render_selection_prompt(records: list[InstructionRecord], num: int) -> RenderedPrompt:
    """Render the batched selection prompt asking for `num` picks."""
    if not 1 <= num <= len(records):
        raise BadBudget(f"num must be in [1, {len(records)}], got {num}")
    text = _render("selection", records, {"N": str(len(records)), "num": str(num)})
    return RenderedPrompt(
        text=text,
        query_size=len(records),
        expected_outputs=num,
        record_ids={i: r.id for i, r in enumerate(records, start=1)},
        kind="selection",
    )


_BRACKET_LIST = re.compile(r"\[\s*\d+\s*(?:,\s*\d+\s*)*\]")
_INT = re.compile(r"\d+")


def parse_selection(text: str, prompt: RenderedPrompt) -> ParsedSelection:
    """Extract the reply's final bracketed ordinal list.

    Duplicates are dropped (first occurrence wins), out-of-range ordinals
    discarded, and the result truncated to the requested count. Status is
    ok / partial / empty by how much of the budget survived.
    """
    matches = _BRACKET_LIST.findall(text or "")
    ordinals: list[int] = []
    if matches:
        seen: set[int] = set()
        for token in _INT.findall(matches[-1]):
            value = int(token)
            if value in seen or not 1 <= value <= prompt.query_size:
                continue
            seen.add(value)
            ordinals.append(value)
            if len(ordinals) == prompt.expected_outputs:
                break
    if not ordinals:
        return ParsedSelection([], "empty")
    status = "ok" if len(ordinals) == prompt.expected_outputs else "partial"
    return ParsedSelection(ordinals, status)


def render_ranking_prompt(records: list[InstructionRecord]) -> RenderedPrompt:
    """Render the full-ordering prompt over a candidate subset."""
    if not records:
        raise BadBudget("ranking needs at least one record")
    text = _render("ranking", records, {"num": str(len(records))})
    return RenderedPrompt(
        text=text,
        query_size=len(records),
        expected_outputs=len(records),
        record_ids={i: r.id for i, r in enumerate(records, start=1)},
        kind="ranking",
    )


_BRACKET_INT = re.compile(r"\[\s*(\d+)\s*\]")


def parse_ranking(text: str, prompt: RenderedPrompt) -> list[int]:
    """Parse a "[i] > [j] > ..." ordering.

    Segments are split on ">"; the first segment without a bracketed integer
    ends the answer, while out-of-range or repeated ordinals are skipped. An
    empty result flags a failed ranking.
    """
    order: list[int] = []
    seen: set[int] = set()
    for segment in (text or "").split(">"):
        found = _BRACKET_INT.search(segment)
        if found is None:
            if order:
                break
            continue  # leading chatter before the first ordinal
        value = int(found.group(1))
        if value in seen or not 1 <= value <= prompt.query_size:
            continue
        seen.add(value)
        order.append(value)
    return order


def render_rationale_prompt(
    records: list[InstructionRecord], prev_selection: list[int]
) -> RenderedPrompt:
    """Re-render a selection prompt with the prior picks filled in and a
    request to explain them."""
    if not prev_selection:
        raise BadOrdinal("prev_selection must be nonempty")
    for o in prev_selection:
        if not 1 <= o <= len(records):
            raise BadOrdinal(f"ordinal {o} outside [1, {len(records)}]")
    rendered = "[" + ",".join(str(o) for o in prev_selection) + "]"
    text = _render(
        "rationale",
        records,
        {"N": str(len(records)), "num": str(len(prev_selection)), "prev_selection": rendered},
    )
    return RenderedPrompt(
        text=text,
        query_size=len(records),
        expected_outputs=len(prev_selection),
        record_ids={i: r.id for i, r in enumerate(records, start=1)},
        kind="rationale",
    )


def render_judge_prompt(response1: str, response2: str, question: str) -> RenderedPrompt:
    """Render the pairwise comparison prompt; callers query twice with the
    responses swapped and combine the verdicts."""
    if not response1.strip() or not response2.strip():
        raise ValueError("both responses must be nonempty")
    text = _render(
        "judge",
        None,
        {"Method #1 response": response1, "Method #2 response": response2, "question": question},
    )
    return RenderedPrompt(text=text, query_size=0, expected_outputs=0, kind="judge")


_JUDGE_CHOICE = re.compile(r"response\s*([12])\b", re.IGNORECASE)


def parse_judge(text: str) -> str:
    """Classify a judge reply as first / second / unparsed.

    Only a short tail answer counts: the last nonempty line, at most three
    words, naming exactly one response.
    """
    lines = [line.strip() for line in (text or "").splitlines() if line.strip()]
    if not lines:
        return "unparsed"
    tail = lines[-1]
    if len(tail.split()) > 3:
        return "unparsed"
    choices = set(_JUDGE_CHOICE.findall(tail))
    if choices == {"1"}:
        return "first"
    if choices == {"2"}:
        return "second"
    return "unparsed"


def render_grader_prompt(record: InstructionRecord) -> RenderedPrompt:
    """Render the single-record quality-grading prompt (1-5 scale)."""
    if record.response is None:
        raise ValueError(f"record {record.id!r} has no response to grade")
    text = _render("grader", [record], {"response": record.response})
    return RenderedPrompt(
        text=text,
        query_size=1,
        expected_outputs=1,
        record_ids={1: record.id},
        kind="grader",
    )


_NUMBER = re.compile(r"\d+(?:\.\d+)?")


def parse_score(text: str) -> float | None:
    """First number in [1, 5] found in the reply, or None."""
    for token in _NUMBER.findall(text or ""):
        value = float(token)
        if 1.0 <= value <= 5.0:
            return value
    return None
