"""End-to-end selection pipeline on a synthetic corpus, fully offline.

Builds a toy instruction corpus with random embeddings, then drives the
CLI exactly as a real job would: validate embeddings, plan diverse
queries, select with the (mocked) LLM, price the run, and inspect the
chosen set. Run with: python demos/mock_pipeline.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from llmselect.cli import main
from llmselect.embedding import write_embd

TOPICS = ["sorting", "translation", "summarization", "arithmetic", "poetry", "geography"]


def build_inputs(work: Path, n=60, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    corpus_path = work / "corpus.jsonl"
    ids = [f"rec-{i:04d}" for i in range(n)]
    with open(corpus_path, "w") as fh:
        for i, rid in enumerate(ids):
            topic = TOPICS[i % len(TOPICS)]
            fh.write(json.dumps({
                "id": rid,
                "instruction": f"Write a detailed task about {topic}, variant {i}.",
                "input": f"Constraint level {i % 4}" if i % 3 == 0 else "",
            }) + "\n")

    # embeddings: one fuzzy cluster per topic, so the diverse plan mixes topics
    centers = rng.normal(size=(len(TOPICS), dim)) * 4
    rows = np.stack([centers[i % len(TOPICS)] + rng.normal(size=dim) * 0.3 for i in range(n)])
    embd_path = work / "vectors.embd"
    write_embd(embd_path, ids, rows.astype(np.float32))

    # hidden quality scores stand in for the real LLM's judgment
    scores_path = work / "scores.json"
    scores_path.write_text(json.dumps({rid: float(rng.uniform(1, 5)) for rid in ids}))
    (work / "rates.json").write_text(json.dumps({"input_rate": 0.0015, "output_rate": 0.002}))
    return corpus_path, embd_path, scores_path


def run(argv):
    print(f"\n$ llmselect {' '.join(str(a) for a in argv)}")
    code = main([str(a) for a in argv])
    assert code == 0, f"exit {code}"


def demo():
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        corpus_path, embd_path, scores_path = build_inputs(work)

        run(["split", "--corpus", corpus_path, "--test-size", "10", "--seed", "7",
             "--output-dir", work / "splits"])
        run(["embed-import", "--corpus", corpus_path, "--embeddings", embd_path,
             "--output-dir", work])
        run(["plan", "--corpus", corpus_path, "--embeddings", embd_path,
             "--clusters", "6", "--kind", "diverse", "--seed", "7", "--output-dir", work])

        manifest_path = work / "manifest.json"
        select_args = [
            "select", "--method", "selectllm", "--n", "12", "--clusters", "6", "--seed", "7",
            "--corpus", corpus_path, "--embeddings", embd_path,
            "--endpoint", f"mock:{scores_path}",
            "--output", manifest_path, "--output-dir", work,
        ]
        run(select_args + ["--dry-run"])
        run(select_args)

        run(["estimate-cost", "--manifest", manifest_path, "--rates", work / "rates.json",
             "--output-dir", work])
        run(["stats", "--manifest", manifest_path, "--corpus", corpus_path,
             "--embeddings", embd_path, "--output-dir", work])

        manifest = json.loads(manifest_path.read_text())["manifest"]
        print("\nSelected instructions (first 5):")
        for rid in manifest["selected"][:5]:
            print(f"  {rid}")
        print(f"Token usage: {manifest['usage']}")


if __name__ == "__main__":
    demo()
