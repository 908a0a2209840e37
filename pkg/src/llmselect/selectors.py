"""Selection strategies producing uniform manifests.

select_llm is the clustered prompting pipeline: diverse query plan, one
selection prompt per query, parsed picks with seeded random fallback. The
rest are the reference baselines (random, length, perplexity, Rouge
diversity, open-endedness, coreset, cluster-based coreset, and the
per-record auto-grader).
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

import numpy as np

from .cluster import allocate_budgets, build_diverse_queries, distance_matrix, kmeans
from .corpus import Corpus
from .embedding import EmbeddingMatrix
from .errors import ConfigError, LlmSelectError
from .llm import LlmClient
from .metrics import MissingScore, rouge_l_f1, unique_bigrams
from .prompts import (
    parse_ranking,
    parse_score,
    parse_selection,
    render_grader_prompt,
    render_ranking_prompt,
    render_selection_prompt,
)

METHODS = ("selectllm", "random", "length", "perplexity", "diversity", "openend", "coreset", "cbs")


class BadN(LlmSelectError):
    pass


class BadRefSize(LlmSelectError):
    pass


class MissingGenerations(LlmSelectError):
    def __init__(self, record_id: str):
        super().__init__(f"need exactly 3 generations for record {record_id!r}")


class MissingResponse(LlmSelectError):
    def __init__(self, record_id: str):
        super().__init__(f"record {record_id!r} has no response to grade")


@dataclass(frozen=True)
class SelectionManifest:
    method: str
    N: int
    seed: int | None
    selected: tuple[str, ...]
    per_query: tuple[dict, ...] | None
    usage: dict
    config: dict

    def __post_init__(self):
        if len(set(self.selected)) != len(self.selected):
            raise LlmSelectError("manifest contains duplicate ids")

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "N": self.N,
            "seed": self.seed,
            "selected": list(self.selected),
            "per_query": list(self.per_query) if self.per_query is not None else None,
            "usage": dict(self.usage),
            "config": dict(self.config),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SelectionManifest":
        return cls(
            method=obj["method"],
            N=int(obj["N"]),
            seed=obj["seed"],
            selected=tuple(obj["selected"]),
            per_query=tuple(obj["per_query"]) if obj["per_query"] is not None else None,
            usage=dict(obj["usage"]),
            config=dict(obj["config"]),
        )


_NO_USAGE = {"prompt_tokens": 0, "completion_tokens": 0, "estimated": False}


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _check_budget(N: int, M: int) -> None:
    if not 1 <= N <= M:
        raise BadN(f"N must be in [1, {M}], got {N}")


def select_llm(
    corpus: Corpus,
    E: EmbeddingMatrix,
    C: int,
    N: int,
    client: LlmClient,
    seed: int,
    parallel: int = 1,
    n_init: int = 1,
) -> SelectionManifest:
    """Cluster into diverse queries, prompt once per query, and collect the
    per-query picks.

    Unusable replies are topped up by a seeded uniform draw from that
    query's unpicked records, flagged per query. The result always has
    exactly N unique ids.
    """
    _check_budget(N, len(corpus))
    plan = build_diverse_queries(E, C, seed, n_init=n_init)
    budgets = allocate_budgets(N, [len(q) for q in plan.queries])

    jobs = []
    for t, query in enumerate(plan.queries):
        if budgets[t] == 0:
            continue
        records = [corpus.get(rid) for rid in query]
        jobs.append((t, render_selection_prompt(records, budgets[t])))
    exchanges = client.complete_many([p for _, p in jobs], parallel=parallel)

    selected: list[str] = []
    per_query: list[dict] = []
    prompt_tokens = completion_tokens = 0
    estimated = False
    for (t, prompt), exchange in zip(jobs, exchanges):
        parsed = parse_selection(exchange.reply, prompt)
        picks = [prompt.record_ids[o] for o in parsed.ordinals]
        fallback_used = len(picks) < budgets[t]
        if fallback_used:
            pool = [rid for rid in plan.queries[t] if rid not in set(picks)]
            rng = random.Random(f"{seed}:{t}")
            picks.extend(rng.sample(pool, budgets[t] - len(picks)))
        selected.extend(picks)
        per_query.append(
            {
                "query_index": t,
                "budget": budgets[t],
                "prompt_digest": _digest(prompt.text),
                "reply_digest": _digest(exchange.reply),
                "parse_status": parsed.status,
                "fallback_used": fallback_used,
            }
        )
        prompt_tokens += exchange.prompt_tokens
        completion_tokens += exchange.completion_tokens
        estimated = estimated or exchange.usage_source == "estimated"

    return SelectionManifest(
        method="selectllm",
        N=N,
        seed=seed,
        selected=tuple(selected),
        per_query=tuple(per_query),
        usage={
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
            "estimated": estimated,
        },
        config={
            "clusters": C,
            "T": plan.T,
            "model": client.config.model,
            "temperature": client.config.temperature,
        },
    )


def select_random(corpus: Corpus, N: int, seed: int) -> SelectionManifest:
    """Seeded uniform sample without replacement."""
    _check_budget(N, len(corpus))
    rng = random.Random(seed)
    selected = rng.sample(corpus.ids(), N)
    return SelectionManifest(
        method="random",
        N=N,
        seed=seed,
        selected=tuple(selected),
        per_query=None,
        usage=dict(_NO_USAGE),
        config={},
    )


def select_length(corpus: Corpus, N: int, mode: str = "long") -> SelectionManifest:
    """Longest (or shortest) instruction+input character counts win; ties go
    to corpus position."""
    _check_budget(N, len(corpus))
    if mode not in ("long", "short"):
        raise LlmSelectError(f"mode must be long or short, got {mode!r}")
    sign = -1 if mode == "long" else 1
    order = sorted(range(len(corpus)), key=lambda i: (sign * corpus.records[i].char_length(), i))
    selected = tuple(corpus.records[i].id for i in order[:N])
    return SelectionManifest(
        method="length",
        N=N,
        seed=None,
        selected=selected,
        per_query=None,
        usage=dict(_NO_USAGE),
        config={"mode": mode},
    )


def select_perplexity(corpus: Corpus, scores: dict[str, float], N: int) -> SelectionManifest:
    """Lowest imported per-token perplexity wins; every record must be scored."""
    _check_budget(N, len(corpus))
    for record in corpus:
        if record.id not in scores:
            raise MissingScore(record.id)
    order = sorted(range(len(corpus)), key=lambda i: (scores[corpus.records[i].id], i))
    selected = tuple(corpus.records[i].id for i in order[:N])
    return SelectionManifest(
        method="perplexity",
        N=N,
        seed=None,
        selected=selected,
        per_query=None,
        usage=dict(_NO_USAGE),
        config={},
    )


def select_diversity(corpus: Corpus, N: int, n_ref: int, seed: int) -> SelectionManifest:
    """Keep the records least Rouge-similar to a seeded reference sample
    (self-comparisons excluded)."""
    _check_budget(N, len(corpus))
    if not 0 < n_ref < len(corpus):
        raise BadRefSize(f"n_ref must be in (0, {len(corpus)}), got {n_ref}")
    rng = random.Random(seed)
    ref_positions = set(rng.sample(range(len(corpus)), n_ref))
    ref_texts = {i: corpus.records[i].plain_text() for i in ref_positions}
    aggregates: list[tuple[float, int]] = []
    for i, record in enumerate(corpus.records):
        text = record.plain_text()
        scores = [rouge_l_f1(text, rt) for j, rt in ref_texts.items() if j != i]
        aggregates.append((sum(scores) / len(scores) if scores else 0.0, i))
    order = sorted(aggregates)
    selected = tuple(corpus.records[i].id for _, i in order[:N])
    return SelectionManifest(
        method="diversity",
        N=N,
        seed=seed,
        selected=selected,
        per_query=None,
        usage=dict(_NO_USAGE),
        config={"n_ref": n_ref},
    )


def default_n_ref(corpus_size: int) -> int:
    return min(500, corpus_size - 1)


def select_openend(corpus: Corpus, generations: dict[str, list[str]], N: int) -> SelectionManifest:
    """Most open-ended records win: unique token bigrams pooled over the
    three sampled generations per record."""
    _check_budget(N, len(corpus))
    for record in corpus:
        gens = generations.get(record.id)
        if gens is None or len(gens) != 3:
            raise MissingGenerations(record.id)
    scored = [
        (-unique_bigrams(generations[r.id]), i) for i, r in enumerate(corpus.records)
    ]
    order = sorted(scored)
    selected = tuple(corpus.records[i].id for _, i in order[:N])
    return SelectionManifest(
        method="openend",
        N=N,
        seed=None,
        selected=selected,
        per_query=None,
        usage=dict(_NO_USAGE),
        config={},
    )


def generate_openend_samples(
    corpus: Corpus, client: LlmClient, samples: int = 3
) -> dict[str, list[str]]:
    """Produce the sampled inferences that open-endedness scoring counts.

    Needs temperature > 0; each call bypasses the reply cache, whose key
    would otherwise collapse the repeated draws into one reply.
    """
    if client.config.temperature <= 0:
        raise ConfigError("open-endedness sampling needs temperature > 0")
    generations: dict[str, list[str]] = {}
    for record in corpus:
        prompt = record.plain_text()
        generations[record.id] = [
            client.complete(prompt, use_cache=False).reply for _ in range(samples)
        ]
    return generations


def _k_center_greedy(X: np.ndarray, budget: int, first: int) -> list[int]:
    """Greedy max-min picks; ties always break to the lowest index."""
    chosen = [first]
    min_d = np.linalg.norm(X - X[first], axis=1)
    min_d[first] = -np.inf
    while len(chosen) < budget:
        nxt = int(np.argmax(min_d))
        chosen.append(nxt)
        min_d = np.minimum(min_d, np.linalg.norm(X - X[nxt], axis=1))
        min_d[nxt] = -np.inf
    return chosen


def _farthest_from_mean(X: np.ndarray) -> int:
    return int(np.argmax(np.linalg.norm(X - X.mean(axis=0), axis=1)))


def select_coreset(
    E: EmbeddingMatrix, N: int, seed: int = 0, random_start: bool = False
) -> SelectionManifest:
    """k-center greedy over L2 distances.

    The first pick is the point farthest from the dataset mean (seeded
    random start behind the flag); each later pick maximizes the distance
    to the nearest already-chosen point.
    """
    _check_budget(N, E.n)
    X = E.rows.astype(np.float64)
    if random_start:
        first = int(np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF).integers(E.n))
    else:
        first = _farthest_from_mean(X)
    chosen = _k_center_greedy(X, N, first)
    return SelectionManifest(
        method="coreset",
        N=N,
        seed=seed if random_start else None,
        selected=tuple(E.id_order[i] for i in chosen),
        per_query=None,
        usage=dict(_NO_USAGE),
        config={"random_start": random_start},
    )


def select_cbs(
    corpus: Corpus, E: EmbeddingMatrix, N: int, cluster_count: int, seed: int
) -> SelectionManifest:
    """Cluster-based selection: K-means partition, per-cluster budgets by
    largest remainder, then k-center greedy inside each cluster."""
    _check_budget(N, E.n)
    model = kmeans(E, cluster_count, seed)
    labels = distance_matrix(E, model).argmin(axis=1)
    sizes = np.bincount(labels, minlength=cluster_count)
    quotas = N * sizes / E.n
    budgets = np.floor(quotas).astype(int)
    leftovers = sorted(range(cluster_count), key=lambda k: (-(quotas[k] - budgets[k]), k))
    for k in leftovers[: N - int(budgets.sum())]:
        budgets[k] += 1
    X = E.rows.astype(np.float64)
    selected: list[str] = []
    for k in range(cluster_count):
        if budgets[k] == 0:
            continue
        members = np.flatnonzero(labels == k)
        sub = X[members]
        picks = _k_center_greedy(sub, int(budgets[k]), _farthest_from_mean(sub))
        selected.extend(E.id_order[int(members[i])] for i in picks)
    return SelectionManifest(
        method="cbs",
        N=N,
        seed=seed,
        selected=tuple(selected),
        per_query=None,
        usage=dict(_NO_USAGE),
        config={"clusters": cluster_count},
    )


def grade_alpagasus(
    corpus: Corpus,
    client: LlmClient,
    threshold: float = 4.5,
    n_cap: int | None = None,
    parallel: int = 1,
) -> SelectionManifest:
    """Auto-grade each (instruction, response) record on a 1-5 scale and
    keep those at or above the threshold.

    One LLM call per record. Unparseable grades count as 0 and are never
    kept. Manifest N is the kept count; n_cap keeps only the top scorers.
    """
    for record in corpus:
        if record.response is None:
            raise MissingResponse(record.id)
    prompts = [render_grader_prompt(r) for r in corpus]
    exchanges = client.complete_many(prompts, parallel=parallel)

    per_query: list[dict] = []
    kept: list[tuple[float, int]] = []
    prompt_tokens = completion_tokens = 0
    estimated = False
    for i, (prompt, exchange) in enumerate(zip(prompts, exchanges)):
        score = parse_score(exchange.reply)
        per_query.append(
            {
                "query_index": i,
                "record_id": corpus.records[i].id,
                "prompt_digest": _digest(prompt.text),
                "reply_digest": _digest(exchange.reply),
                "parse_status": "ok" if score is not None else "empty",
                "score": score if score is not None else 0.0,
                "fallback_used": False,
            }
        )
        if score is not None and score >= threshold:
            kept.append((score, i))
        prompt_tokens += exchange.prompt_tokens
        completion_tokens += exchange.completion_tokens
        estimated = estimated or exchange.usage_source == "estimated"

    if n_cap is not None and len(kept) > n_cap:
        kept = sorted(kept, key=lambda pair: (-pair[0], pair[1]))[:n_cap]
    positions = sorted(i for _, i in kept)
    selected = tuple(corpus.records[i].id for i in positions)
    return SelectionManifest(
        method="alpagasus",
        N=len(selected),
        seed=None,
        selected=selected,
        per_query=tuple(per_query),
        usage={
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
            "estimated": estimated,
        },
        config={
            "threshold": threshold,
            "n_cap": n_cap,
            "model": client.config.model,
            "temperature": client.config.temperature,
        },
    )


@dataclass(frozen=True)
class RankingResult:
    order: tuple[str, ...]
    appended: tuple[str, ...]  # ids missing from the reply, kept in corpus order
    prompt_digest: str
    reply_digest: str
    usage: dict


def rank_instructions(records, client: LlmClient) -> RankingResult:
    """Ask for a full impactfulness ordering of a small record subset.

    Ids the reply leaves out are appended in their original order and
    reported separately.
    """
    records = list(records)
    prompt = render_ranking_prompt(records)
    exchange = client.complete(prompt)
    ordinals = parse_ranking(exchange.reply, prompt)
    order = [prompt.record_ids[o] for o in ordinals]
    appended = [r.id for r in records if r.id not in set(order)]
    return RankingResult(
        order=tuple(order + appended),
        appended=tuple(appended),
        prompt_digest=_digest(prompt.text),
        reply_digest=_digest(exchange.reply),
        usage={
            "prompt_tokens": exchange.prompt_tokens,
            "completion_tokens": exchange.completion_tokens,
            "estimated": exchange.usage_source == "estimated",
        },
    )
