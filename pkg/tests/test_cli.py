import json

import numpy as np
import pytest

from llmselect.cli import main
from llmselect.llm import CostRates, estimate_cost
from llmselect.embedding import write_embd

from conftest import make_corpus, write_corpus_jsonl


@pytest.fixture
def workspace(tmp_path):
    """Corpus + embeddings + hidden scores + rates, ready for CLI runs."""
    corp = make_corpus(16, with_responses=True, with_inputs=True)
    corpus_path = tmp_path / "corpus.jsonl"
    write_corpus_jsonl(corpus_path, corp)
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(16, 4)).astype(np.float32)
    embd_path = tmp_path / "vectors.embd"
    write_embd(embd_path, corp.ids(), rows)
    scores = {rid: (i % 9) * 0.5 + 1.0 for i, rid in enumerate(corp.ids())}
    scores_path = tmp_path / "scores.json"
    scores_path.write_text(json.dumps(scores))
    rates_path = tmp_path / "rates.json"
    rates_path.write_text(json.dumps({"input_rate": 0.0015, "output_rate": 0.002}))
    return {
        "dir": tmp_path,
        "corpus": corpus_path,
        "embd": embd_path,
        "scores": scores_path,
        "rates": rates_path,
        "corp": corp,
    }


def run(argv):
    return main([str(a) for a in argv])


def test_split_command(workspace, capsys):
    out = workspace["dir"] / "splitout"
    code = run(["split", "--corpus", workspace["corpus"], "--test-size", "4", "--seed", "3", "--output-dir", out])
    assert code == 0
    assert (out / "train.jsonl").exists() and (out / "test.jsonl").exists()
    report = json.loads((out / "split.json").read_text())
    assert report["train"]["n"] == 12 and report["test"]["n"] == 4
    assert "config_digest" in report


def test_embed_import_command(workspace):
    out = workspace["dir"] / "report.json"
    code = run(["embed-import", "--corpus", workspace["corpus"], "--embeddings", workspace["embd"], "--output", out])
    assert code == 0
    report = json.loads(out.read_text())
    assert (report["n"], report["dim"]) == (16, 4)


def test_plan_command(workspace):
    out = workspace["dir"] / "plan.json"
    code = run([
        "plan", "--corpus", workspace["corpus"], "--embeddings", workspace["embd"],
        "--clusters", "4", "--kind", "diverse", "--seed", "1", "--output", out,
    ])
    assert code == 0
    plan = json.loads(out.read_text())["plan"]
    assert plan["kind"] == "diverse"
    assert sum(len(q) for q in plan["queries"]) == 16


def test_select_selectllm_end_to_end(workspace):
    out = workspace["dir"] / "manifest.json"
    argv = [
        "select", "--method", "selectllm", "--n", "6", "--clusters", "4", "--seed", "2",
        "--corpus", workspace["corpus"], "--embeddings", workspace["embd"],
        "--endpoint", f"mock:{workspace['scores']}",
        "--output", out, "--output-dir", workspace["dir"] / "artifacts",
    ]
    assert run(argv) == 0
    manifest = json.loads(out.read_text())["manifest"]
    assert manifest["method"] == "selectllm"
    assert len(manifest["selected"]) == 6
    assert len(set(manifest["selected"])) == 6

    # warm-cache rerun to a second path is byte-identical
    out2 = workspace["dir"] / "manifest2.json"
    argv2 = argv[:-3] + [out2, "--output-dir", workspace["dir"] / "artifacts"]
    assert run(argv2) == 0
    a = json.loads(out.read_text())
    b = json.loads(out2.read_text())
    assert a == b


def test_select_refuses_mismatched_digest(workspace, capsys):
    out = workspace["dir"] / "manifest.json"
    base = [
        "select", "--method", "random", "--n", "3", "--corpus", workspace["corpus"],
        "--output", out, "--output-dir", workspace["dir"],
    ]
    assert run(base + ["--seed", "1"]) == 0
    assert run(base + ["--seed", "2"]) == 2  # different job, refuse to overwrite
    err = capsys.readouterr().err
    assert "config digest" in json.loads(err.splitlines()[-1])["message"]
    assert run(base + ["--seed", "2", "--force"]) == 0
    assert run(base + ["--seed", "2"]) == 0  # same digest overwrites freely


def test_select_unknown_method_exit_2(workspace, capsys):
    code = run(["select", "--method", "nosuch", "--n", "3", "--corpus", workspace["corpus"]])
    assert code == 2
    err = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert err["error"] == "ConfigError"


def test_select_missing_corpus_exit_2(workspace):
    code = run(["select", "--method", "random", "--n", "3", "--corpus", workspace["dir"] / "nope.jsonl"])
    assert code == 2


def test_dry_run_empty_corpus_fails(workspace, capsys):
    empty = workspace["dir"] / "empty.jsonl"
    empty.write_text("\n")
    code = run([
        "select", "--method", "selectllm", "--n", "1", "--clusters", "1",
        "--corpus", empty, "--embeddings", workspace["embd"],
        "--endpoint", f"mock:{workspace['scores']}", "--dry-run",
    ])
    assert code == 1
    assert json.loads(capsys.readouterr().err.splitlines()[-1])["error"] == "EmptyCorpus"


def test_runtime_failure_exit_1(workspace, capsys):
    # scores file present but missing ids: a runtime data error, not usage
    partial = workspace["dir"] / "partial_scores.json"
    partial.write_text(json.dumps({"id0": 1.0}))
    code = run([
        "select", "--method", "perplexity", "--n", "3", "--corpus", workspace["corpus"],
        "--scores", partial, "--output-dir", workspace["dir"],
    ])
    assert code == 1
    err = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert err["error"] == "MissingScore"
    assert err["module"] == "metrics"


def test_select_baselines_via_cli(workspace):
    for method, extra in [
        ("random", []),
        ("length", ["--mode", "short"]),
        ("coreset", ["--embeddings", workspace["embd"]]),
        ("cbs", ["--embeddings", workspace["embd"], "--clusters", "3"]),
        ("perplexity", ["--scores", workspace["scores"]]),
        ("diversity", ["--n-ref", "5"]),
    ]:
        out = workspace["dir"] / f"m_{method}.json"
        argv = [
            "select", "--method", method, "--n", "4", "--seed", "0",
            "--corpus", workspace["corpus"], "--output", out,
            "--output-dir", workspace["dir"],
        ] + extra
        assert run(argv) == 0, method
        manifest = json.loads(out.read_text())["manifest"]
        assert len(manifest["selected"]) == 4, method


def test_select_openend_via_cli(workspace):
    gens = {rid: [f"gen {i} a", f"gen {i} b", f"gen {i} c"] for i, rid in enumerate(workspace["corp"].ids())}
    gen_path = workspace["dir"] / "gens.json"
    gen_path.write_text(json.dumps(gens))
    out = workspace["dir"] / "m_openend.json"
    argv = [
        "select", "--method", "openend", "--n", "4", "--corpus", workspace["corpus"],
        "--generations", gen_path, "--output", out, "--output-dir", workspace["dir"],
    ]
    assert run(argv) == 0
    assert len(json.loads(out.read_text())["manifest"]["selected"]) == 4


def test_dry_run_budgets_and_estimate(workspace, capsys):
    base = [
        "select", "--method", "selectllm", "--n", "10", "--clusters", "4", "--seed", "2",
        "--corpus", workspace["corpus"], "--embeddings", workspace["embd"],
        "--endpoint", f"mock:{workspace['scores']}", "--output-dir", workspace["dir"],
    ]
    assert run(base + ["--dry-run"]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["T"] == 4
    assert summary["budgets"] == [3, 3, 2, 2]

    out = workspace["dir"] / "m_dry.json"
    assert run(base + ["--output", out]) == 0
    usage = json.loads(out.read_text())["manifest"]["usage"]
    actual = usage["prompt_tokens"]
    estimated = summary["estimated_prompt_tokens"]
    assert abs(estimated - actual) <= 0.3 * actual


def test_rank_command(workspace):
    out = workspace["dir"] / "ranking.json"
    argv = [
        "rank", "--corpus", workspace["corpus"], "--ids", "id0,id1,id2",
        "--endpoint", f"mock:{workspace['scores']}", "--output", out,
        "--config", make_config(workspace),
    ]
    assert run(argv) == 0
    ranking = json.loads(out.read_text())
    assert sorted(ranking["order"]) == ["id0", "id1", "id2"]


def make_config(workspace):
    config = {
        "paths": {"output_dir": str(workspace["dir"] / "cfgout")},
        "rates": {"input_rate": 0.0015, "output_rate": 0.002},
    }
    path = workspace["dir"] / "job.json"
    path.write_text(json.dumps(config))
    return str(path)


def test_grade_and_estimate_cost(workspace, capsys):
    out = workspace["dir"] / "graded.json"
    argv = [
        "grade", "--corpus", workspace["corpus"], "--threshold", "4.5",
        "--endpoint", f"mock:{workspace['scores']}", "--output", out,
        "--output-dir", workspace["dir"],
    ]
    assert run(argv) == 0
    manifest = json.loads(out.read_text())["manifest"]
    expected = {rid for i, rid in enumerate(workspace["corp"].ids()) if (i % 9) * 0.5 + 1.0 >= 4.5}
    assert set(manifest["selected"]) == expected

    cost_out = workspace["dir"] / "cost.json"
    code = run(["estimate-cost", "--manifest", out, "--rates", workspace["rates"], "--output", cost_out])
    assert code == 0
    printed = capsys.readouterr().out.strip().splitlines()[-1]
    usage = manifest["usage"]
    expected_dollars = estimate_cost(usage["prompt_tokens"], usage["completion_tokens"], CostRates(0.0015, 0.002))
    assert printed == f"${expected_dollars:.2f}"
    assert json.loads(cost_out.read_text())["dollars"] == expected_dollars


def test_evaluate_command(workspace):
    preds_path = workspace["dir"] / "preds.jsonl"
    with open(preds_path, "w") as fh:
        for r in workspace["corp"]:
            fh.write(json.dumps({"id": r.id, "prediction": r.response}) + "\n")
    out = workspace["dir"] / "eval.json"
    argv = [
        "evaluate", "--predictions", preds_path, "--corpus", workspace["corpus"],
        "--output", out, "--config", make_config(workspace),
    ]
    assert run(argv) == 0
    report = json.loads(out.read_text())["report"]
    assert report["mean_rouge_l_f1"] == 1.0
    assert report["cosine_available"] is False


def test_judge_command_static_backend(workspace, capsys):
    pairs_path = workspace["dir"] / "pairs.jsonl"
    with open(pairs_path, "w") as fh:
        for i in range(4):
            fh.write(json.dumps({
                "id": f"q{i}", "question": f"question {i}",
                "response1": f"answer one {i}", "response2": f"answer two {i}",
            }) + "\n")
    out = workspace["dir"] / "tally.json"
    argv = [
        "judge", "--pairs", pairs_path, "--endpoint", "static:Response 1",
        "--output", out, "--config", make_config(workspace),
    ]
    assert run(argv) == 0
    tally = json.loads(out.read_text())["tally"]
    # constant verdict means the swapped order disagrees: all ties
    assert tally == {"win": 0.0, "tie": 100.0, "lose": 0.0, "n": 4}


def test_stats_command(workspace):
    manifest_out = workspace["dir"] / "m_random.json"
    assert run([
        "select", "--method", "random", "--n", "5", "--seed", "4",
        "--corpus", workspace["corpus"], "--output", manifest_out,
        "--output-dir", workspace["dir"],
    ]) == 0
    out = workspace["dir"] / "stats.json"
    argv = [
        "stats", "--manifest", manifest_out, "--corpus", workspace["corpus"],
        "--embeddings", workspace["embd"], "--scores", workspace["scores"],
        "--output", out, "--config", make_config(workspace),
    ]
    assert run(argv) == 0
    stats = json.loads(out.read_text())["stats"]
    assert stats["n_selected"] == 5
    assert stats["diversity"] > 0
    assert stats["mean_perplexity"] is not None


def test_custom_alias_map_from_config(workspace):
    odd = workspace["dir"] / "odd.jsonl"
    with open(odd, "w") as fh:
        fh.write(json.dumps({"id": "x1", "task": "do the thing"}) + "\n")
        fh.write(json.dumps({"id": "x2", "task": "do another thing"}) + "\n")
    config_path = workspace["dir"] / "alias.json"
    config_path.write_text(json.dumps({
        "paths": {"output_dir": str(workspace["dir"])},
        "aliases": {"instruction": ["instruction", "task"], "id": ["id"]},
    }))
    out = workspace["dir"] / "alias_manifest.json"
    code = run([
        "select", "--method", "random", "--n", "1", "--seed", "0",
        "--corpus", odd, "--config", config_path, "--output", out,
    ])
    assert code == 0
    assert json.loads(out.read_text())["manifest"]["selected"][0] in ("x1", "x2")


def test_scores_as_jsonl_rows(workspace):
    rows_path = workspace["dir"] / "scores_rows.jsonl"
    with open(rows_path, "w") as fh:
        for i, rid in enumerate(workspace["corp"].ids()):
            fh.write(json.dumps({"id": rid, "score": float(i)}) + "\n")
    out = workspace["dir"] / "m_ppl_rows.json"
    code = run([
        "select", "--method", "perplexity", "--n", "2", "--corpus", workspace["corpus"],
        "--scores", rows_path, "--output", out, "--output-dir", workspace["dir"],
    ])
    assert code == 0
    assert json.loads(out.read_text())["manifest"]["selected"] == ["id0", "id1"]


def test_run_log_written(workspace):
    out_dir = workspace["dir"] / "logged"
    assert run([
        "select", "--method", "random", "--n", "2", "--seed", "0",
        "--corpus", workspace["corpus"], "--output-dir", out_dir,
    ]) == 0
    log_lines = (out_dir / "run_log.jsonl").read_text().splitlines()
    entry = json.loads(log_lines[-1])
    assert entry["command"] == "select"
    assert entry["status"] == "ok"
