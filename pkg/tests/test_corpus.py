import json

import pytest

from llmselect.corpus import (
    BadSize,
    Corpus,
    DuplicateId,
    EmptyCorpus,
    InstructionRecord,
    MalformedLine,
    embed_text,
    load_jsonl,
    render_block,
    save_jsonl,
    split,
)

from conftest import make_corpus


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_load_preserves_order_and_ids(tmp_path):
    path = tmp_path / "c.jsonl"
    write_lines(
        path,
        [
            json.dumps({"id": "a", "instruction": "first"}),
            json.dumps({"id": "b", "instruction": "second", "input": "ctx"}),
            json.dumps({"id": "c", "instruction": "third", "output": "gold"}),
        ],
    )
    corp = load_jsonl(path)
    assert len(corp) == 3
    assert corp.ids() == ["a", "b", "c"]
    assert corp.get("b").input == "ctx"
    assert corp.get("c").response == "gold"


def test_missing_instruction_is_malformed(tmp_path):
    path = tmp_path / "c.jsonl"
    write_lines(path, [json.dumps({"instruction": "ok"}), json.dumps({"input": "x"})])
    with pytest.raises(MalformedLine) as err:
        load_jsonl(path)
    assert err.value.line_no == 2


def test_whitespace_instruction_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    write_lines(path, [json.dumps({"instruction": "   "})])
    with pytest.raises(MalformedLine):
        load_jsonl(path)


def test_unparseable_json_reports_line(tmp_path):
    path = tmp_path / "c.jsonl"
    write_lines(path, [json.dumps({"instruction": "ok"}), "{not json"])
    with pytest.raises(MalformedLine) as err:
        load_jsonl(path)
    assert err.value.line_no == 2


def test_duplicate_id(tmp_path):
    path = tmp_path / "c.jsonl"
    write_lines(
        path,
        [json.dumps({"id": "a", "instruction": "x"}), json.dumps({"id": "a", "instruction": "y"})],
    )
    with pytest.raises(DuplicateId):
        load_jsonl(path)


def test_empty_corpus(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("\n\n", encoding="utf-8")
    with pytest.raises(EmptyCorpus):
        load_jsonl(path)


def test_synthesized_ids_are_line_numbers(tmp_path):
    path = tmp_path / "c.jsonl"
    write_lines(path, [json.dumps({"instruction": "a"}), json.dumps({"instruction": "b"})])
    corp = load_jsonl(path)
    assert corp.ids() == ["rec-00000001", "rec-00000002"]


def test_dolly_aliases_accepted(tmp_path):
    path = tmp_path / "dolly.jsonl"
    write_lines(
        path,
        [json.dumps({"instruction": "q", "context": "c", "response": "r", "category": "open_qa"})],
    )
    rec = load_jsonl(path).records[0]
    assert rec.input == "c"
    assert rec.response == "r"
    assert rec.source == "open_qa"


def test_empty_strings_normalize_to_absent(tmp_path):
    path = tmp_path / "c.jsonl"
    write_lines(path, [json.dumps({"instruction": "q", "input": "", "output": " "})])
    rec = load_jsonl(path).records[0]
    assert rec.input is None
    assert rec.response is None


def test_save_load_round_trip(tmp_path):
    corp = make_corpus(5, with_responses=True, with_inputs=True)
    path = tmp_path / "out.jsonl"
    save_jsonl(corp, path)
    again = load_jsonl(path)
    assert again.records == corp.records


def test_split_deterministic_partition():
    corp = make_corpus(10)
    train1, test1 = split(corp, 3, seed=7)
    train2, test2 = split(corp, 3, seed=7)
    assert test1.ids() == test2.ids()
    assert train1.ids() == train2.ids()
    assert len(test1) == 3 and len(train1) == 7
    assert set(train1.ids()) | set(test1.ids()) == set(corp.ids())
    assert set(train1.ids()) & set(test1.ids()) == set()


def test_split_bad_sizes():
    corp = make_corpus(10)
    with pytest.raises(BadSize):
        split(corp, 10, seed=0)
    with pytest.raises(BadSize):
        split(corp, 0, seed=0)


def test_split_dolly_shape():
    corp = make_corpus(15000)
    train, test = split(corp, 1000, seed=1)
    assert len(train) == 14000
    assert len(test) == 1000


def test_render_block_formats():
    rec = InstructionRecord("a", "Sort a list")
    assert render_block(rec, 1) == "[1]\n### Instruction: Sort a list"
    rec2 = InstructionRecord("b", "Q", input="ctx")
    assert render_block(rec2, 14) == "[14]\n### Instruction: Q\n### Input: ctx"


def test_render_block_rejects_zero_ordinal():
    with pytest.raises(ValueError):
        render_block(InstructionRecord("a", "x"), 0)


def test_render_block_ordinal_first_line():
    for i, rec in enumerate(make_corpus(7, with_inputs=True), start=1):
        assert render_block(rec, i).split("\n")[0] == f"[{i}]"


def test_embed_text_drops_ordinal_line():
    rec = InstructionRecord("a", "Q", input="ctx")
    assert embed_text(rec) == "### Instruction: Q\n### Input: ctx"


def test_corpus_rejects_duplicates_directly():
    with pytest.raises(DuplicateId):
        Corpus((InstructionRecord("a", "x"), InstructionRecord("a", "y")))
