"""Instruction corpora: JSONL loading, splits, and prompt text blocks.

A corpus is an ordered list of records, each an unlabeled instruction with
optional input context and an optional gold response used only for grading
and evaluation.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LlmSelectError

# Aliases let Dolly-style files ("context", "response", "category") load
# without rewriting; first present key wins, canonical name first.
DEFAULT_ALIASES: dict[str, tuple[str, ...]] = {
    "instruction": ("instruction",),
    "input": ("input", "context"),
    "response": ("output", "response"),
    "source": ("source", "category"),
    "id": ("id",),
}


class MalformedLine(LlmSelectError):
    def __init__(self, line_no: int, reason: str = "not a JSON object with an instruction"):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


class DuplicateId(LlmSelectError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"duplicate record id {record_id!r}")


class EmptyCorpus(LlmSelectError):
    pass


class BadSize(LlmSelectError):
    pass


@dataclass(frozen=True)
class InstructionRecord:
    """One unlabeled instruction, plus optional context / gold response."""

    id: str
    instruction: str
    input: str | None = None
    response: str | None = None
    source: str | None = None

    def __post_init__(self):
        if not self.instruction.strip():
            raise ValueError(f"record {self.id!r} has an empty instruction")

    def plain_text(self) -> str:
        """Instruction and input concatenated; the text basis for length and
        Rouge-based selectors."""
        if self.input:
            return f"{self.instruction}\n{self.input}"
        return self.instruction

    def char_length(self) -> int:
        return len(self.instruction) + len(self.input or "")


@dataclass(frozen=True)
class Corpus:
    records: tuple[InstructionRecord, ...]
    by_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.records:
            raise EmptyCorpus("corpus has no records")
        if not self.by_id:
            object.__setattr__(self, "by_id", {r.id: i for i, r in enumerate(self.records)})
        if len(self.by_id) != len(self.records):
            seen: set[str] = set()
            for r in self.records:
                if r.id in seen:
                    raise DuplicateId(r.id)
                seen.add(r.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def get(self, record_id: str) -> InstructionRecord:
        return self.records[self.by_id[record_id]]

    def subset(self, ids: list[str]) -> "Corpus":
        return Corpus(tuple(self.get(i) for i in ids))


def _pick(obj: dict, canonical: str, aliases: dict[str, tuple[str, ...]]):
    for key in aliases.get(canonical, (canonical,)):
        if key in obj:
            return obj[key]
    return None


def _clean(value) -> str | None:
    """Normalize empty / whitespace-only strings to absent."""
    if value is None:
        return None
    text = str(value)
    return text if text.strip() else None


def load_jsonl(path: str | Path, aliases: dict[str, tuple[str, ...]] | None = None) -> Corpus:
    """Load a corpus from a UTF-8 JSONL file, one object per line.

    Line order is preserved. Records without an "id" get a synthesized
    `rec-%08d` id from their 1-based physical line number. Blank lines are
    skipped; anything else unparseable, or a record with a missing or
    whitespace-only instruction, raises MalformedLine.
    """
    aliases = aliases or DEFAULT_ALIASES
    records: list[InstructionRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise MalformedLine(line_no, "unparseable JSON") from None
            if not isinstance(obj, dict):
                raise MalformedLine(line_no, "not a JSON object")
            instruction = _clean(_pick(obj, "instruction", aliases))
            if instruction is None:
                raise MalformedLine(line_no)
            record_id = _pick(obj, "id", aliases)
            record_id = str(record_id) if record_id is not None else f"rec-{line_no:08d}"
            if record_id in seen:
                raise DuplicateId(record_id)
            seen.add(record_id)
            records.append(
                InstructionRecord(
                    id=record_id,
                    instruction=instruction,
                    input=_clean(_pick(obj, "input", aliases)),
                    response=_clean(_pick(obj, "response", aliases)),
                    source=_clean(_pick(obj, "source", aliases)),
                )
            )
    if not records:
        raise EmptyCorpus(f"no valid records in {path}")
    return Corpus(tuple(records))


def save_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back out with canonical field names, one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in corpus:
            obj: dict = {"id": r.id, "instruction": r.instruction}
            if r.input is not None:
                obj["input"] = r.input
            if r.response is not None:
                obj["output"] = r.response
            if r.source is not None:
                obj["source"] = r.source
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def split(corpus: Corpus, test_size: int, seed: int) -> tuple[Corpus, Corpus]:
    """Seeded uniform train/test split without replacement.

    Both halves keep the corpus load order; the same seed always yields the
    same split.
    """
    m = len(corpus)
    if not 0 < test_size < m:
        raise BadSize(f"test_size must be in (0, {m}), got {test_size}")
    rng = random.Random(seed)
    test_positions = set(rng.sample(range(m), test_size))
    test = tuple(r for i, r in enumerate(corpus.records) if i in test_positions)
    train = tuple(r for i, r in enumerate(corpus.records) if i not in test_positions)
    return Corpus(train), Corpus(test)


def render_block(record: InstructionRecord, ordinal: int) -> str:
    """Render one candidate block as it appears inside the prompts.

    Format: `[<ordinal>]` line, `### Instruction:` line, and an
    `### Input:` line only when the record has input context.
    """
    if ordinal < 1:
        raise ValueError(f"ordinal must be >= 1, got {ordinal}")
    lines = [f"[{ordinal}]", f"### Instruction: {record.instruction}"]
    if record.input is not None:
        lines.append(f"### Input: {record.input}")
    return "\n".join(lines)


def embed_text(record: InstructionRecord) -> str:
    """Text sent to the sentence encoder: the block render minus the ordinal line."""
    return render_block(record, 1).split("\n", 1)[1]
