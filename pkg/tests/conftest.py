import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from llmselect.corpus import Corpus, InstructionRecord
from llmselect.embedding import EmbeddingMatrix


def make_corpus(n, prefix="id", with_responses=False, with_inputs=False):
    records = []
    for i in range(n):
        records.append(
            InstructionRecord(
                id=f"{prefix}{i}",
                instruction=f"instruction number {i}",
                input=f"context {i}" if with_inputs else None,
                response=f"response text {i}" if with_responses else None,
            )
        )
    return Corpus(tuple(records))


def make_embedding(values, ids=None):
    """1-D or 2-D values -> EmbeddingMatrix with r0..rN ids by default."""
    rows = np.asarray(values, dtype=np.float32)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1)
    ids = tuple(ids) if ids is not None else tuple(f"r{i}" for i in range(rows.shape[0]))
    return EmbeddingMatrix(n=rows.shape[0], dim=rows.shape[1], rows=rows, id_order=ids)


def write_corpus_jsonl(path, corpus):
    with open(path, "w", encoding="utf-8") as fh:
        for r in corpus:
            obj = {"id": r.id, "instruction": r.instruction}
            if r.input is not None:
                obj["input"] = r.input
            if r.response is not None:
                obj["output"] = r.response
            fh.write(json.dumps(obj) + "\n")


class _ScriptedHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length)) if length else {}
        self.server.requests.append({"path": self.path, "payload": payload, "headers": dict(self.headers)})
        if self.server.script:
            status, body = self.server.script.pop(0)
        else:
            status, body = 500, {"error": "script exhausted"}
        if callable(body):
            body = body(payload)
        encoded = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(encoded)))
        self.end_headers()
        self.wfile.write(encoded)

    def log_message(self, *args):
        pass


class ScriptedServer:
    """Local HTTP server answering POSTs from a scripted (status, body) queue."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _ScriptedHandler)
        self.server.script = []
        self.server.requests = []
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    @property
    def requests(self):
        return self.server.requests

    def enqueue(self, status, body):
        self.server.script.append((status, body))

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def scripted_server():
    server = ScriptedServer()
    yield server
    server.close()


def chat_body(reply, usage=None):
    body = {"choices": [{"message": {"role": "assistant", "content": reply}}]}
    if usage is not None:
        body["usage"] = usage
    return body
