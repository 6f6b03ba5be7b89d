"""Entity embedding providers and the normalized-encoding contract.

Every provider maps serialized entity strings to unit-norm dense vectors of
a fixed dimension. The hashed provider is a deterministic bag-of-tokens
embedder used for tests and offline runs; the HTTP provider talks to an
embedding endpoint and re-normalizes locally so the unit-norm contract
holds regardless of server behavior.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import struct
import threading
import time
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import DimensionMismatch, ProviderError

NORM_TOLERANCE = 1e-6
_TOKEN = re.compile(r"\w+")

CACHE_MAGIC = b"KGEMB001"
_CACHE_HEADER = struct.Struct("<8sIQ")  # magic, dimension, count


def _token_bucket(token: str, dim: int, seed: int) -> tuple[int, float]:
    """Stable (bucket, sign) for one token; identical across platforms."""
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")
    ).digest()
    value = int.from_bytes(digest, "little")
    bucket = (value >> 1) % dim
    sign = 1.0 if value & 1 else -1.0
    return bucket, sign


def token_hash_features(
    texts: Sequence[str], dim: int, seed: int = 0
) -> np.ndarray:
    """Signed hashed bag-of-tokens counts, shape (len(texts), dim), float64.

    Tokens are case-folded word characters; rows for token-free texts are
    all zero. Pure function of its inputs.
    """
    out = np.zeros((len(texts), dim), dtype=np.float64)
    for i, text in enumerate(texts):
        for token in _TOKEN.findall(text.casefold()):
            bucket, sign = _token_bucket(token, dim, seed)
            out[i, bucket] += sign
    return out


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """L2-normalize rows; zero rows raise ProviderError."""
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise ProviderError("cannot normalize a zero embedding vector")
    return matrix / norms[:, None]


class EmbeddingProvider:
    """Maps serialized entity strings to unit-norm vectors."""

    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class HashedFeatureProvider(EmbeddingProvider):
    """Deterministic bag-of-tokens embedder; stable across runs and platforms."""

    def __init__(self, dimension: int = 256, seed: int = 0):
        self.dimension = dimension
        self.seed = seed

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        features = token_hash_features(texts, self.dimension, self.seed)
        # Token-free texts hash the empty string so output stays defined.
        for i in np.flatnonzero(np.linalg.norm(features, axis=1) == 0.0):
            bucket, sign = _token_bucket("", self.dimension, self.seed)
            features[i, bucket] = sign
        return normalize_rows(features)


class HttpEmbeddingProvider(EmbeddingProvider):
    """Client for a JSON embedding endpoint.

    Wire format: POST ``{"input": [texts], "model": name}`` returning
    ``{"data": [{"embedding": [...]}, ...]}`` in input order. Responses are
    re-normalized locally. Transient failures are retried with exponential
    backoff before surfacing ProviderError.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        dimension: int,
        api_key: str | None = None,
        max_retries: int = 3,
        timeout: float = 30.0,
        max_in_flight: int = 4,
        batch_size: int = 128,
        backoff: float = 0.25,
    ):
        self.endpoint = endpoint
        self.model = model
        self.dimension = dimension
        self.api_key = api_key
        self.max_retries = max_retries
        self.timeout = timeout
        self.batch_size = batch_size
        self.backoff = backoff
        self._gate = threading.Semaphore(max_in_flight)

    @classmethod
    def from_env(cls, dimension: int, **kwargs) -> "HttpEmbeddingProvider":
        endpoint = os.environ.get("EMBED_ENDPOINT", "")
        if not endpoint:
            raise ProviderError("EMBED_ENDPOINT is not set")
        return cls(
            endpoint=endpoint,
            model=os.environ.get("EMBED_MODEL", "default"),
            dimension=dimension,
            api_key=os.environ.get("EMBED_API_KEY"),
            **kwargs,
        )

    def _post(self, texts: Sequence[str]) -> list[list[float]]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"input": list(texts), "model": self.model}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    response = requests.post(
                        self.endpoint, json=payload, headers=headers, timeout=self.timeout
                    )
                if response.status_code in (429,) or response.status_code >= 500:
                    last_error = ProviderError(f"server returned {response.status_code}")
                    continue
                response.raise_for_status()
                data = response.json()["data"]
                return [row["embedding"] for row in data]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        raise ProviderError(f"embedding endpoint failed: {last_error}")

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            rows.extend(self._post(texts[start : start + self.batch_size]))
        matrix = np.asarray(rows, dtype=np.float64)
        if matrix.shape != (len(texts), self.dimension):
            raise ProviderError(
                f"endpoint returned shape {matrix.shape}, "
                f"expected {(len(texts), self.dimension)}"
            )
        return normalize_rows(matrix)


def embed(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    """Embed texts, enforcing the unit-norm output contract."""
    matrix = np.asarray(provider.embed_batch(texts), dtype=np.float64)
    if matrix.shape[0] != len(texts):
        raise ProviderError("provider returned wrong row count")
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
        matrix = normalize_rows(matrix)
    return matrix


def cosine(x: np.ndarray, y: np.ndarray) -> float:
    """Dot product of two unit-norm vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    return float(x @ y)


# ---------------------------------------------------------------------------
# Embedding cache: binary matrix plus a JSON-lines id manifest.


def _manifest_path(path: str | Path) -> Path:
    return Path(str(path) + ".ids.jsonl")


def save_embedding_cache(
    path: str | Path, ids: Sequence[str], matrix: np.ndarray
) -> None:
    """Persist vectors as float32 little-endian with a sidecar id manifest."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise DimensionMismatch("matrix rows must match id count")
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, matrix.shape[1], matrix.shape[0]))
        fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
    with open(_manifest_path(path), "w", encoding="utf-8") as fh:
        for entity_id in ids:
            fh.write(json.dumps({"id": entity_id}, ensure_ascii=False) + "\n")


def load_embedding_cache(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a cache written by :func:`save_embedding_cache`."""
    with open(path, "rb") as fh:
        header = fh.read(_CACHE_HEADER.size)
        magic, dimension, count = _CACHE_HEADER.unpack(header)
        if magic != CACHE_MAGIC:
            raise ProviderError(f"not an embedding cache: bad magic {magic!r}")
        payload = fh.read(count * dimension * 4)
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dimension)
    ids: list[str] = []
    with open(_manifest_path(path), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                ids.append(json.loads(line)["id"])
    if len(ids) != count:
        raise ProviderError("id manifest does not match cache header count")
    return ids, matrix.astype(np.float64)
