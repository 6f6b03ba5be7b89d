"""Offline stand-ins for the embedding and chat-completion endpoints.

The triple-overlap chat client answers listwise prompts by measuring
relational overlap between the query block and each candidate block, which
makes the full two-stage pipeline runnable (and deterministic) without any
hosted model. The HTTP servers speak the exact wire formats of the real
endpoints so client code is exercised unchanged.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .encoder import EmbeddingProvider, HashedFeatureProvider
from .reranker import ChatClient

_CANDIDATE_HEADER = re.compile(r"^\[Candidate (\d+)\]")


def _split_rep(rep_line: str) -> tuple[str, frozenset[str]]:
    parts = rep_line.split(" | ")
    return parts[0], frozenset(parts[1:])


def parse_prompt_blocks(prompt: str) -> tuple[str, dict[int, str]]:
    """Extract the query rep line and candidate rep lines from a prompt."""
    lines = prompt.splitlines()
    query_rep = ""
    candidates: dict[int, str] = {}
    i = 0
    while i < len(lines):
        line = lines[i]
        if line == "[Query]" and i + 1 < len(lines):
            query_rep = lines[i + 1]
            i += 2
            continue
        m = _CANDIDATE_HEADER.match(line)
        if m and i + 1 < len(lines):
            candidates[int(m.group(1))] = lines[i + 1]
            i += 2
            continue
        i += 1
    return query_rep, candidates


class TripleOverlapChatClient(ChatClient):
    """Scores candidates by Jaccard overlap of their triple segments.

    A deterministic "ideal structural reranker": same-name entities with
    disjoint neighborhoods score 0, entities sharing relational context
    score high.
    """

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        query_rep, candidate_reps = parse_prompt_blocks(prompt)
        _, query_triples = _split_rep(query_rep)
        scored: list[tuple[int, float]] = []
        for idx in sorted(candidate_reps):
            _, triples = _split_rep(candidate_reps[idx])
            union = query_triples | triples
            jaccard = len(query_triples & triples) / len(union) if union else 0.0
            scored.append((idx, jaccard))
        scored.sort(key=lambda item: (-item[1], item[0]))
        ranking = ", ".join(f"{idx}:{score:.3f}" for idx, score in scored)
        return (
            f"RANKING: {ranking}\n"
            "Reasoning: scored by the fraction of shared relational triples."
        )


class MalformedChatClient(ChatClient):
    """Always violates the output grammar; forces the fallback path."""

    def __init__(self, text: str = "I think the first candidate looks best."):
        self.text = text
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        return self.text


class ScriptedChatClient(ChatClient):
    """Replays canned responses; repeats the last one when exhausted."""

    def __init__(self, responses: list[str]):
        if not responses:
            raise ValueError("at least one scripted response is required")
        self.responses = list(responses)
        self.calls = 0

    def complete(self, prompt: str) -> str:
        index = min(self.calls, len(self.responses) - 1)
        self.calls += 1
        return self.responses[index]


class CountingChatClient(ChatClient):
    """Wraps a client and records every prompt it forwards."""

    def __init__(self, inner: ChatClient):
        self.inner = inner
        self.calls = 0
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls += 1
        self.prompts.append(prompt)
        return self.inner.complete(prompt)


# ---------------------------------------------------------------------------
# Wire-protocol servers


class MockServer:
    """A ThreadingHTTPServer running on an ephemeral localhost port."""

    def __init__(self, handler_class):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler_class)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/"

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self) -> "MockServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def make_embedding_server(
    provider: EmbeddingProvider | None = None, fail_first: int = 0
) -> MockServer:
    """Serve the embedding wire protocol from a local provider.

    ``fail_first`` makes the first N requests return HTTP 500 to exercise
    client retries.
    """
    backing = provider or HashedFeatureProvider()
    state = {"remaining_failures": fail_first}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if state["remaining_failures"] > 0:
                state["remaining_failures"] -= 1
                self.send_response(500)
                self.end_headers()
                return
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length))
            matrix = backing.embed_batch(payload["input"])
            body = json.dumps(
                {"data": [{"embedding": np.asarray(row).tolist()} for row in matrix]}
            ).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    return MockServer(Handler)


def make_chat_server(
    client: ChatClient | None = None, fail_first: int = 0
) -> MockServer:
    """Serve the chat-completion wire protocol from a local chat client."""
    backing = client or TripleOverlapChatClient()
    state = {"remaining_failures": fail_first}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if state["remaining_failures"] > 0:
                state["remaining_failures"] -= 1
                self.send_response(500)
                self.end_headers()
                return
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length))
            prompt = payload["messages"][-1]["content"]
            content = backing.complete(prompt)
            body = json.dumps(
                {"choices": [{"message": {"role": "assistant", "content": content}}]}
            ).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    return MockServer(Handler)
