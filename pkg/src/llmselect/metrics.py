"""Rouge-L (F1), bigram statistics, evaluation reports, and judge tallies.

Tokenization is pinned: lowercase, split on non-alphanumeric runs
(underscore counts as a separator), no stemming. Scores are internally
consistent but not comparable to toolkit variants that stem.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import Corpus
from .embedding import EmbeddingMatrix, cosine_similarity, knn_diversity
from .errors import LlmSelectError


class MisalignedIds(LlmSelectError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"predictions and references disagree on id {record_id!r}")


class MissingScore(LlmSelectError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"no score for record {record_id!r}")


_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length, two-row dynamic program."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_f1(prediction: str, reference: str) -> float:
    """LCS-based F1 between two texts; 0 when either side has no tokens."""
    pred = tokenize(prediction)
    ref = tokenize(reference)
    if not pred or not ref:
        return 0.0
    lcs = lcs_length(pred, ref)
    p = lcs / len(pred)
    r = lcs / len(ref)
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def unique_bigrams(texts: list[str]) -> int:
    """Cardinality of adjacent token pairs pooled over all texts."""
    pooled: set[tuple[str, str]] = set()
    for text in texts:
        tokens = tokenize(text)
        pooled.update(zip(tokens, tokens[1:]))
    return len(pooled)


@dataclass(frozen=True)
class EvalReport:
    n_pairs: int
    mean_rouge_l_f1: float
    mean_cosine: float | None
    per_pair: tuple[dict, ...]
    diversity: float | None = None
    mean_perplexity: float | None = None
    mean_length: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "mean_rouge_l_f1": self.mean_rouge_l_f1,
            "mean_cosine": self.mean_cosine,
            "cosine_available": self.mean_cosine is not None,
            "per_pair": list(self.per_pair),
            "diversity": self.diversity,
            "mean_perplexity": self.mean_perplexity,
            "mean_length": self.mean_length,
        }


def evaluate_responses(
    predictions: dict[str, str],
    references: dict[str, str],
    vectors: dict[str, tuple] | None = None,
) -> EvalReport:
    """Score generated responses against references, per id.

    Cosine similarity needs a (prediction vector, reference vector) pair per
    id; without vectors it is omitted and flagged in the report.
    """
    for rid in predictions:
        if rid not in references:
            raise MisalignedIds(rid)
    for rid in references:
        if rid not in predictions:
            raise MisalignedIds(rid)
    per_pair: list[dict] = []
    for rid, pred in predictions.items():
        entry: dict = {"id": rid, "rouge": rouge_l_f1(pred, references[rid])}
        if vectors is not None:
            if rid not in vectors:
                raise MisalignedIds(rid)
            pv, rv = vectors[rid]
            entry["cosine"] = cosine_similarity(pv, rv)
        per_pair.append(entry)
    n = len(per_pair)
    mean_rouge = sum(e["rouge"] for e in per_pair) / n if n else 0.0
    mean_cosine = sum(e["cosine"] for e in per_pair) / n if n and vectors is not None else None
    return EvalReport(
        n_pairs=n,
        mean_rouge_l_f1=mean_rouge,
        mean_cosine=mean_cosine,
        per_pair=tuple(per_pair),
    )


def judge_tally(verdict_pairs: list[dict]) -> dict:
    """Combine order-swapped judge verdicts into win/tie/lose percentages.

    A pair wins only when both orders agree on the same underlying side;
    disagreement or any unparsed verdict is a tie.
    """
    n = len(verdict_pairs)
    if n == 0:
        return {"win": 0.0, "tie": 0.0, "lose": 0.0, "n": 0}
    win = lose = 0
    for pair in verdict_pairs:
        forward, swapped = pair["forward"], pair["reversed"]
        if forward == "first" and swapped == "second":
            win += 1
        elif forward == "second" and swapped == "first":
            lose += 1
    tie = n - win - lose
    return {
        "win": 100.0 * win / n,
        "tie": 100.0 * tie / n,
        "lose": 100.0 * lose / n,
        "n": n,
    }


def selection_stats(
    corpus: Corpus,
    selected: list[str],
    E: EmbeddingMatrix,
    perplexity_scores: dict[str, float] | None = None,
    metric: str = "cosine",
) -> dict:
    """Diversity (kNN distance, k=1), mean imported perplexity, and mean
    character length of instruction+input over a selected id set."""
    records = [corpus.get(rid) for rid in selected]
    stats: dict = {
        "n_selected": len(selected),
        "diversity": knn_diversity(E, selected, k=1, metric=metric),
        "mean_length": sum(r.char_length() for r in records) / len(records),
        "mean_perplexity": None,
    }
    if perplexity_scores is not None:
        for rid in selected:
            if rid not in perplexity_scores:
                raise MissingScore(rid)
        stats["mean_perplexity"] = sum(perplexity_scores[rid] for rid in selected) / len(selected)
    return stats
