"""Seeded k-means and the diverse / similar query-plan builders.

The diverse builder consumes per-cluster nearest-first rankings so every
cluster contributes one candidate to each query in turn; this equal-size
assignment is what keeps the query stream representative of the whole
corpus. cluster_of records the slot a record was consumed from (diverse)
or its nearest center (similar).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingMatrix
from .errors import ConfigError, LlmSelectError


class TooManyClusters(LlmSelectError):
    def __init__(self, C: int, n: int):
        super().__init__(f"cannot form {C} clusters from {n} points")


class BudgetExceedsCapacity(LlmSelectError):
    pass


@dataclass(frozen=True)
class ClusterModel:
    C: int
    centers: np.ndarray  # C x dim
    inertia: float
    seed: int
    iterations_run: int
    inertia_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class QueryPlan:
    queries: tuple[tuple[str, ...], ...]
    cluster_of: dict[str, int]
    kind: str  # diverse | similar
    seed: int
    C: int

    @property
    def T(self) -> int:
        return len(self.queries)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "C": self.C,
            "queries": [list(q) for q in self.queries],
            "cluster_of": dict(self.cluster_of),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "QueryPlan":
        return cls(
            queries=tuple(tuple(q) for q in obj["queries"]),
            cluster_of={k: int(v) for k, v in obj["cluster_of"].items()},
            kind=obj["kind"],
            seed=int(obj["seed"]),
            C=int(obj["C"]),
        )


def _as_array(E) -> np.ndarray:
    if isinstance(E, EmbeddingMatrix):
        return E.rows.astype(np.float64)
    return np.asarray(E, dtype=np.float64)


def _sqdist(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    xx = np.sum(X * X, axis=1)[:, None]
    cc = np.sum(centers * centers, axis=1)[None, :]
    return np.maximum(xx + cc - 2.0 * (X @ centers.T), 0.0)


def _partial_sqdist(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared distances minus the per-row ||x||^2 term; argmin-equivalent."""
    out = X @ (-2.0 * centers.T)
    out += np.sum(centers * centers, axis=1)[None, :]
    return out


def _kmeanspp_init(X: np.ndarray, C: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    xx = np.sum(X * X, axis=1)
    chosen = [int(rng.integers(n))]
    d2 = np.maximum(xx + xx[chosen[0]] - 2.0 * (X @ X[chosen[0]]), 0.0)
    while len(chosen) < C:
        total = float(d2.sum())
        if total <= 0.0:
            # remaining mass is all duplicates of chosen centers
            taken = set(chosen)
            idx = next(i for i in range(n) if i not in taken)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        np.minimum(d2, np.maximum(xx + xx[idx] - 2.0 * (X @ X[idx]), 0.0), out=d2)
    return X[chosen].copy()


def _reseed_empty(
    X: np.ndarray, labels: np.ndarray, d_assigned: np.ndarray, C: int
) -> np.ndarray:
    """Move the worst-fit points into any empty clusters, never draining a
    singleton donor."""
    counts = np.bincount(labels, minlength=C)
    penalty = d_assigned.copy()
    for k in range(C):
        if counts[k] > 0:
            continue
        candidates = counts[labels] > 1
        far = int(np.argmax(np.where(candidates, penalty, -1.0)))
        counts[labels[far]] -= 1
        labels[far] = k
        counts[k] = 1
        penalty[far] = -1.0
    return labels


def _lloyd(
    X: np.ndarray, centers: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    n, dim = X.shape
    C = centers.shape[0]
    trace: list[float] = []
    prev_labels: np.ndarray | None = None
    labels = np.zeros(n, dtype=np.int64)
    iterations = 0
    xx = np.sum(X * X, axis=1)
    xx_total = float(xx.sum())
    # tol is relative to the data's mean per-dimension variance and compared
    # with the squared Frobenius norm of the center shift (sklearn semantics)
    shift_tol = tol * float(np.mean(np.var(X, axis=0)))
    for iterations in range(1, max_iter + 1):
        P = _partial_sqdist(X, centers)
        labels = P.argmin(axis=1)
        counts = np.bincount(labels, minlength=C)
        if (counts == 0).any():
            d_assigned = np.maximum(xx + P[np.arange(n), labels], 0.0)
            labels = _reseed_empty(X, labels, d_assigned, C)
            counts = np.bincount(labels, minlength=C)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break  # fixed point: the update below would reproduce centers
        onehot = np.zeros((C, n))
        onehot[labels, np.arange(n)] = 1.0
        new_centers = (onehot @ X) / counts[:, None]
        # within-cluster SSE via the variance decomposition around means
        trace.append(xx_total - float(np.sum(counts * np.sum(new_centers * new_centers, axis=1))))
        shift_sq = float(np.sum((new_centers - centers) ** 2))
        centers = new_centers
        prev_labels = labels
        if shift_sq <= shift_tol:
            break
    inertia = float(np.sum((X - centers[labels]) ** 2))
    return centers, labels, inertia, iterations, trace


def kmeans(
    E,
    C: int,
    seed: int,
    max_iter: int = 25,
    tol: float = 1e-4,
    n_init: int = 1,
) -> ClusterModel:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Runs n_init independent restarts (deterministic sub-seeds) and keeps the
    lowest-inertia model; the same seed always reproduces the same model
    bit for bit. Empty clusters are re-seeded with the farthest-assigned
    point.
    """
    X = _as_array(E)
    n = X.shape[0]
    if C < 1:
        raise ConfigError("cluster count must be >= 1")
    if C > n:
        raise TooManyClusters(C, n)
    if max_iter < 1 or tol < 0 or n_init < 1:
        raise ConfigError("max_iter and n_init must be >= 1 and tol >= 0")
    entropy = seed & 0xFFFFFFFFFFFFFFFF
    best = None
    for restart in range(n_init):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=entropy, spawn_key=(restart,)))
        centers0 = _kmeanspp_init(X, C, rng)
        centers, _, inertia, iterations, trace = _lloyd(X, centers0, max_iter, tol)
        if best is None or inertia < best[0]:
            best = (inertia, centers, iterations, trace)
    inertia, centers, iterations, trace = best
    return ClusterModel(
        C=C,
        centers=centers,
        inertia=inertia,
        seed=seed,
        iterations_run=iterations,
        inertia_trace=tuple(trace),
    )


def distance_matrix(E, model: ClusterModel) -> np.ndarray:
    """D[i][k] = euclidean distance from row i to center k."""
    X = _as_array(E)
    return np.sqrt(_sqdist(X, model.centers))


def build_diverse_queries(
    E: EmbeddingMatrix,
    C: int,
    seed: int,
    max_iter: int = 25,
    tol: float = 1e-4,
    n_init: int = 1,
) -> QueryPlan:
    """Partition the corpus into T = ceil(n/C) queries, each taking the
    nearest not-yet-assigned record from every cluster's ranking in turn.

    Rankings cover all records (argsort of each distance column, ties by
    corpus position), so the result is an exact partition; only the final
    query can come up short when C does not divide n.
    """
    X = _as_array(E)
    model = kmeans(X, C, seed, max_iter=max_iter, tol=tol, n_init=n_init)
    D2 = _sqdist(X, model.centers)  # argsort order matches true distances
    n = E.n
    ids = E.id_order
    rankings = [np.argsort(D2[:, k], kind="stable").tolist() for k in range(C)]
    pointers = [0] * C
    assigned = bytearray(n)
    slot = [0] * n
    remaining = n
    queries: list[tuple[str, ...]] = []
    for _ in range(math.ceil(n / C)):
        picks: list[int] = []
        for k in range(C):
            if remaining == 0:
                break
            ptr = pointers[k]
            ranking = rankings[k]
            while assigned[ranking[ptr]]:
                ptr += 1
            pointers[k] = ptr
            pos = ranking[ptr]
            assigned[pos] = 1
            remaining -= 1
            picks.append(pos)
            slot[pos] = k
        queries.append(tuple(ids[p] for p in picks))
    cluster_of = {ids[p]: slot[p] for p in range(n)}
    return QueryPlan(
        queries=tuple(queries), cluster_of=cluster_of, kind="diverse", seed=seed, C=C
    )


def build_similar_queries(
    E: EmbeddingMatrix,
    C: int,
    query_size: int,
    seed: int,
    max_iter: int = 25,
    tol: float = 1e-4,
    n_init: int = 1,
) -> QueryPlan:
    """Ablation variant: chunk each cluster's own members (nearest-first)
    into consecutive queries of query_size."""
    if query_size < 1:
        raise ConfigError("query_size must be >= 1")
    model = kmeans(E, C, seed, max_iter=max_iter, tol=tol, n_init=n_init)
    D = distance_matrix(E, model)
    labels = D.argmin(axis=1)
    ids = E.id_order
    queries: list[tuple[str, ...]] = []
    cluster_of: dict[str, int] = {}
    for k in range(C):
        members = np.flatnonzero(labels == k)
        if members.size == 0:
            continue
        ranked = members[np.argsort(D[members, k], kind="stable")]
        for pos in ranked:
            cluster_of[ids[int(pos)]] = k
        for start in range(0, ranked.size, query_size):
            chunk = ranked[start : start + query_size]
            queries.append(tuple(ids[int(pos)] for pos in chunk))
    return QueryPlan(
        queries=tuple(queries), cluster_of=cluster_of, kind="similar", seed=seed, C=C
    )


def budget_per_query(N: int, T: int, sizes: list[int] | None = None) -> list[int]:
    """Split a selection budget N over T queries: floor(N/T) each, with the
    first N mod T queries taking one extra. Entries sum to exactly N.

    When query sizes are given, a budget entry larger than its query raises
    BudgetExceedsCapacity.
    """
    if N < 1 or T < 1:
        raise ConfigError("N and T must be >= 1")
    base, rem = divmod(N, T)
    budgets = [base + 1] * rem + [base] * (T - rem)
    if sizes is not None:
        for t, (b, s) in enumerate(zip(budgets, sizes)):
            if b > s:
                raise BudgetExceedsCapacity(f"query {t} holds {s} records but owes {b}")
    return budgets


def allocate_budgets(N: int, sizes: list[int]) -> list[int]:
    """Capacity-aware variant used by the selection pipeline: the division
    rule's overflow is redistributed to earlier queries with slack, so any
    N up to the total capacity is satisfiable."""
    total = sum(sizes)
    if N > total:
        raise BudgetExceedsCapacity(f"budget {N} exceeds total capacity {total}")
    budgets = [min(b, s) for b, s in zip(budget_per_query(N, len(sizes)), sizes)]
    shortfall = N - sum(budgets)
    while shortfall > 0:
        for t, size in enumerate(sizes):
            if shortfall == 0:
                break
            if budgets[t] < size:
                budgets[t] += 1
                shortfall -= 1
    return budgets
