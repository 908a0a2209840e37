"""Quick tour of the evaluation metrics: Rouge-L, bigram open-endedness,
kNN diversity, and the order-swapped judge tally.

Run with: python demos/metrics_walkthrough.py
"""

import numpy as np

from llmselect.embedding import EmbeddingMatrix, knn_diversity
from llmselect.metrics import judge_tally, lcs_length, rouge_l_f1, unique_bigrams

print("== Rouge-L (F1) ==")
pairs = [
    ("a b c", "a c"),
    ("the cat sat on the mat", "the cat is on the mat"),
    ("completely different words", "nothing shared here"),
]
for pred, ref in pairs:
    lcs = lcs_length(pred.split(), ref.split())
    print(f"  {pred!r} vs {ref!r}: LCS={lcs}, F1={rouge_l_f1(pred, ref):.3f}")

print("\n== Open-endedness (unique bigrams over three samples) ==")
focused = ["the answer is four", "the answer is four", "the answer is four"]
varied = ["a tale of two cities", "cities grow along rivers", "rivers carve two valleys"]
print(f"  repetitive generations -> {unique_bigrams(focused)} bigrams")
print(f"  varied generations     -> {unique_bigrams(varied)} bigrams")

print("\n== kNN diversity of a selected set ==")
rng = np.random.default_rng(0)
tight = rng.normal(size=(8, 16)) * 0.05 + 1.0
spread = rng.normal(size=(8, 16))
for name, rows in [("tight cluster", tight), ("well spread", spread)]:
    E = EmbeddingMatrix(n=8, dim=16, rows=rows.astype(np.float32),
                        id_order=tuple(f"r{i}" for i in range(8)))
    print(f"  {name}: {knn_diversity(E, list(E.id_order), k=1):.3f}")

print("\n== Judge tally (both prompt orders must agree) ==")
pairs = [
    {"forward": "first", "reversed": "second"},   # clean win
    {"forward": "first", "reversed": "first"},    # position bias -> tie
    {"forward": "second", "reversed": "first"},   # clean loss
    {"forward": "first", "reversed": "second"},   # clean win
]
print(f"  {judge_tally(pairs)}")
