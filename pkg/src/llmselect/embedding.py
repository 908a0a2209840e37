"""Embedding storage, distance kernels, and the kNN diversity statistic.

Vectors arrive precomputed, either from files (a compact EMBD binary or a
JSONL of {id, vector} rows) or from an embedding HTTP service; there is no
in-process encoder. Rows are float32 and always aligned to corpus order.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, embed_text
from .errors import ConfigError, LlmSelectError
from .llm import ExhaustedRetries, RetryPolicy, post_with_retries

EMBD_MAGIC = b"EMBD"


class CountMismatch(LlmSelectError):
    def __init__(self, n_file: int, n_corpus: int):
        self.n_file, self.n_corpus = n_file, n_corpus
        super().__init__(f"file has {n_file} vectors but corpus has {n_corpus} records")


class DimZero(LlmSelectError):
    pass


class IdMismatch(LlmSelectError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"embedding/corpus id mismatch, first offender {record_id!r}")


class NonFinite(LlmSelectError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"non-finite value in embedding row {row}")


class ZeroVector(LlmSelectError):
    pass


class TooFewPoints(LlmSelectError):
    pass


class DimMismatch(LlmSelectError):
    pass


class ServiceError(LlmSelectError):
    def __init__(self, status: int):
        self.status = status
        super().__init__(f"embedding service failed with HTTP {status} after retries")


@dataclass(frozen=True)
class EmbeddingMatrix:
    n: int
    dim: int
    rows: np.ndarray  # n x dim float32
    id_order: tuple[str, ...]

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float32))
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2 or rows.shape != (self.n, self.dim):
            raise ValueError(f"rows shape {rows.shape} != ({self.n}, {self.dim})")
        if self.dim == 0:
            raise DimZero("embedding dimension is zero")
        if len(self.id_order) != self.n:
            raise ValueError("id_order length must equal row count")
        bad = ~np.isfinite(rows).all(axis=1)
        if bad.any():
            raise NonFinite(int(np.argmax(bad)))
        object.__setattr__(self, "_index", {rid: i for i, rid in enumerate(self.id_order)})

    def row_of(self, record_id: str) -> np.ndarray:
        return self.rows[self._index[record_id]]

    def rows_for(self, ids: list[str] | tuple[str, ...]) -> np.ndarray:
        return self.rows[[self._index[i] for i in ids]]


def write_embd(path: str | Path, ids: list[str], rows: np.ndarray) -> None:
    """Write the binary format: magic "EMBD", u32 n, u32 dim, n*dim
    little-endian f32, then newline-separated ids."""
    rows = np.asarray(rows, dtype="<f4")
    if any("\n" in i for i in ids):
        raise ValueError("ids must not contain newlines")
    n, dim = rows.shape
    if n != len(ids):
        raise ValueError("row count must equal id count")
    with open(path, "wb") as fh:
        fh.write(EMBD_MAGIC)
        fh.write(struct.pack("<II", n, dim))
        fh.write(rows.tobytes(order="C"))
        fh.write("\n".join(ids).encode("utf-8"))


def _read_embd(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    n, dim = struct.unpack_from("<II", data, 4)
    if dim == 0:
        raise DimZero(f"{path} declares dim=0")
    offset = 4 + 8
    end = offset + n * dim * 4
    if end > len(data):
        raise LlmSelectError(f"{path} truncated: expected {n}x{dim} f32 payload")
    rows = np.frombuffer(data[offset:end], dtype="<f4").reshape(n, dim)
    ids = data[end:].decode("utf-8").rstrip("\n").split("\n") if n else []
    if len(ids) != n:
        raise LlmSelectError(f"{path} lists {len(ids)} ids for {n} rows")
    return ids, rows


def _read_jsonl(path: Path) -> tuple[list[str], np.ndarray]:
    ids: list[str] = []
    vectors: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            ids.append(str(obj["id"]))
            vectors.append(obj["vector"])
    if not vectors:
        raise LlmSelectError(f"no vectors in {path}")
    dims = {len(v) for v in vectors}
    if dims == {0}:
        raise DimZero(f"{path} has zero-length vectors")
    if len(dims) != 1:
        raise DimMismatch(f"{path} mixes vector dimensions {sorted(dims)}")
    return ids, np.asarray(vectors, dtype=np.float32)


def import_embeddings(path: str | Path, corpus: Corpus) -> EmbeddingMatrix:
    """Load vectors from an EMBD or JSONL file and align them to corpus order.

    Alignment is by id and verified: wrong counts, unknown or missing ids,
    and non-finite rows are all rejected.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        is_embd = fh.read(4) == EMBD_MAGIC
    ids, rows = _read_embd(path) if is_embd else _read_jsonl(path)
    if len(ids) != len(corpus):
        raise CountMismatch(len(ids), len(corpus))
    position = {rid: i for i, rid in enumerate(ids)}
    if len(position) != len(ids):
        seen: set[str] = set()
        for rid in ids:
            if rid in seen:
                raise IdMismatch(rid)
            seen.add(rid)
    for rid in ids:
        if rid not in corpus.by_id:
            raise IdMismatch(rid)
    order = []
    for record in corpus:
        if record.id not in position:
            raise IdMismatch(record.id)
        order.append(position[record.id])
    aligned = np.ascontiguousarray(rows[order])
    return EmbeddingMatrix(n=len(corpus), dim=aligned.shape[1], rows=aligned, id_order=tuple(corpus.ids()))


def load_vectors(path: str | Path) -> dict[str, np.ndarray]:
    """Read an EMBD or JSONL vector file as a plain id -> vector map,
    without corpus alignment (used for evaluation-side text vectors)."""
    path = Path(path)
    with open(path, "rb") as fh:
        is_embd = fh.read(4) == EMBD_MAGIC
    ids, rows = _read_embd(path) if is_embd else _read_jsonl(path)
    return {rid: rows[i] for i, rid in enumerate(ids)}


@dataclass(frozen=True)
class EmbeddingServiceConfig:
    endpoint: str
    model: str = ""
    api_key_env: str | None = None
    timeout_s: float = 60.0
    retry: RetryPolicy = RetryPolicy()


def fetch_embeddings(
    service: EmbeddingServiceConfig,
    corpus: Corpus,
    batch_size: int,
    transport=None,
) -> EmbeddingMatrix:
    """Fetch one vector per record from an embeddings endpoint, in
    order-preserving batches of `batch_size`.

    `transport` (texts -> list of vectors) replaces HTTP for offline use.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    texts = [embed_text(r) for r in corpus]
    vectors: list[list[float]] = []
    dim: int | None = None
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        if transport is not None:
            embedded = transport(batch)
        else:
            embedded = _fetch_batch_http(service, batch)
        if len(embedded) != len(batch):
            raise ServiceError(0)
        for vec in embedded:
            if dim is None:
                dim = len(vec)
                if dim == 0:
                    raise DimZero("service returned zero-length vectors")
            elif len(vec) != dim:
                raise DimMismatch(f"service returned dim {len(vec)} after dim {dim}")
            vectors.append(vec)
    rows = np.asarray(vectors, dtype=np.float32)
    return EmbeddingMatrix(n=len(corpus), dim=rows.shape[1], rows=rows, id_order=tuple(corpus.ids()))


def _fetch_batch_http(service: EmbeddingServiceConfig, batch: list[str]) -> list[list[float]]:
    headers = {"Content-Type": "application/json"}
    if service.api_key_env:
        key = os.environ.get(service.api_key_env, "")
        if not key:
            raise ConfigError(f"API key env var {service.api_key_env!r} is not set")
        headers["Authorization"] = f"Bearer {key}"
    payload: dict = {"input": batch}
    if service.model:
        payload["model"] = service.model
    try:
        body, _ = post_with_retries(
            service.endpoint, payload, headers, service.timeout_s, service.retry
        )
    except ExhaustedRetries as exc:
        raise ServiceError(exc.status) from exc
    data = sorted(body["data"], key=lambda item: item.get("index", 0))
    return [item["embedding"] for item in data]


def cosine_similarity(u, v) -> float:
    """dot(u, v) / (|u| |v|); rejects zero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


def l2_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return float(np.linalg.norm(u - v))


def knn_diversity(E: EmbeddingMatrix, subset: list[str], k: int = 1, metric: str = "cosine") -> float:
    """Mean distance from each subset member to its k-th nearest neighbor
    within the subset; cosine distance (1 - cos) by default, "l2" optional."""
    if len(subset) < k + 1:
        raise TooFewPoints(f"need at least {k + 1} points, got {len(subset)}")
    X = E.rows_for(subset).astype(np.float64)
    if metric == "cosine":
        norms = np.linalg.norm(X, axis=1)
        if (norms == 0).any():
            raise ZeroVector("subset contains a zero vector")
        Xn = X / norms[:, None]
        D = 1.0 - Xn @ Xn.T
    elif metric == "l2":
        sq = np.sum(X * X, axis=1)
        D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
        np.sqrt(np.maximum(D, 0.0), out=D)
    else:
        raise ConfigError(f"unknown diversity metric {metric!r}")
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, np.inf)
    kth = np.sort(D, axis=1)[:, k - 1]
    return float(kth.mean())
