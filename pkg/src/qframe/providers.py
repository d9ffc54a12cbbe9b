"""Embedding sources: the QFEB binary container, the HTTP embedding
service client, and a digest-keyed cache for frame embeddings.

QFEB layout, all integers little-endian:

    offset  size  field
    0       4     magic "QFEB"
    4       2     version (= 1)
    6       4     count (number of vectors)
    10      4     dim
    14      2     flags (bit 0: rows already unit-normalized)
    16      16    reserved, zero
    32      ...   count * dim float32 payload, row-major

Wire protocol: POST {base}/v1/embed_text with {"texts": [...]} and
POST {base}/v1/embed_images with {"images_b64": [...], "format": "png"}
both return {"embeddings": [[f32...]], "dim": n, "model": s,
"truncated": [bool...]}; GET {base}/v1/health reports at least
{"status": "ok", "dim": n}. Non-200 bodies carry {"error": s}.
"""

from __future__ import annotations

import base64
import hashlib
import os
import struct
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .candidates import EmbeddingMatrix, QueryEmbedding
from .errors import (
    BadMagic,
    ConfigError,
    DimZero,
    HttpFailure,
    IoFailure,
    PartialBatchFailure,
    Timeout,
    TruncatedPayload,
    UnsupportedVersion,
    ZeroVector,
)

QFEB_MAGIC = b"QFEB"
QFEB_VERSION = 1
QFEB_FLAG_NORMALIZED = 0x1

_HEADER = struct.Struct("<4sHIIH16s")
assert _HEADER.size == 32


def normalize(vector: np.ndarray) -> np.ndarray:
    """v / ||v||_2 as float64; rejects near-zero vectors."""
    vec = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise ConfigError("vector must be finite")
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise ZeroVector(f"cannot normalize a vector with norm {norm:.3g}")
    return vec / norm


def normalize_rows(rows: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization; names the offending row on failure."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1)
    bad = np.where(norms < 1e-12)[0]
    if bad.size:
        raise ZeroVector(f"row {int(bad[0])} has norm {norms[bad[0]]:.3g}")
    return rows / norms[:, None]


def write_embedding_file(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Serialize a matrix as QFEB with the normalized flag set.

    Rows are stored exactly as held (float32), so write then load is
    byte-identical. The file is written via temp + rename so concurrent
    readers never observe a partial file.
    """
    path = Path(path)
    header = _HEADER.pack(
        QFEB_MAGIC, QFEB_VERSION, matrix.count, matrix.dim, QFEB_FLAG_NORMALIZED, b"\x00" * 16
    )
    payload = np.ascontiguousarray(matrix.rows, dtype="<f4").tobytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(header)
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write embedding file {path}: {exc}") from exc


def load_embedding_file(path: str | Path) -> EmbeddingMatrix:
    """Parse a QFEB file; rows are normalized unless the flag says they
    already are."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read embedding file {path}: {exc}") from exc
    if len(blob) < 4 or blob[:4] != QFEB_MAGIC:
        raise BadMagic(f"{path} is not a QFEB file")
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(f"{path}: {len(blob)} bytes is shorter than the 32-byte header")
    _, version, count, dim, flags, _ = _HEADER.unpack_from(blob)
    if version != QFEB_VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, expected {QFEB_VERSION}")
    expected = _HEADER.size + 4 * count * dim
    if len(blob) != expected:
        raise TruncatedPayload(
            f"{path}: size {len(blob)} != header-declared {expected} "
            f"(32 + 4 * {count} * {dim})"
        )
    rows = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    if count and not (flags & QFEB_FLAG_NORMALIZED):
        rows = normalize_rows(rows).astype(np.float32)
    return EmbeddingMatrix(rows=rows)


@dataclass(frozen=True)
class ProviderEndpoint:
    base_url: str
    timeout_ms: int = 30000
    max_batch: int = 32
    model_hint: str | None = None

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("endpoint base_url must be non-empty")
        if self.timeout_ms < 1:
            raise ConfigError("timeout_ms must be positive")
        if self.max_batch < 1:
            raise ConfigError("max_batch must be >= 1")

    def url(self, route: str) -> str:
        return self.base_url.rstrip("/") + route


class EmbeddingClient:
    """HTTP client for the embedding service.

    Every request retries up to `retries` extra times with exponential
    backoff on any non-200 status or transport error. Image batches of
    at most endpoint.max_batch are issued concurrently, bounded by
    max_in_flight, and reassembled in input order. Truncation flags
    reported by the text side accumulate in `warnings`.
    """

    def __init__(
        self,
        endpoint: ProviderEndpoint,
        retries: int = 2,
        backoff_s: float = 0.25,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.retries = retries
        self.backoff_s = backoff_s
        self.max_in_flight = max(1, max_in_flight)
        self.session = session or requests.Session()
        self.warnings: list[str] = []
        self._lock = threading.Lock()

    def _request(self, method: str, route: str, payload: dict | None = None) -> dict:
        url = self.endpoint.url(route)
        timeout = self.endpoint.timeout_ms / 1000.0
        last: str = "no attempt made"
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.request(method, url, json=payload, timeout=timeout)
                if resp.status_code == 200:
                    try:
                        return resp.json()
                    except ValueError:
                        last = "status 200 with a non-JSON body"
                else:
                    try:
                        last = f"status {resp.status_code}: {resp.json().get('error', resp.text)}"
                    except ValueError:
                        last = f"status {resp.status_code}: {resp.text[:200]}"
            except requests.Timeout:
                if attempt == self.retries:
                    raise Timeout(f"{url} timed out after {timeout:.1f}s") from None
                last = "timeout"
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
            if attempt < self.retries:
                time.sleep(self.backoff_s * (2**attempt))
        raise HttpFailure(f"{url} failed after {self.retries + 1} attempts; last error: {last}")

    def health(self) -> dict:
        return self._request("GET", "/v1/health")

    def fetch_text_embedding(self, query: str) -> QueryEmbedding:
        if not query:
            raise ConfigError("query must be non-empty")
        data = self._request("POST", "/v1/embed_text", {"texts": [query]})
        embeddings = data.get("embeddings") or []
        if not embeddings or not embeddings[0]:
            raise DimZero("service returned an empty text embedding")
        truncated = data.get("truncated") or []
        if truncated and truncated[0]:
            with self._lock:
                self.warnings.append(
                    "query was truncated by the embedding service's token limit"
                )
        return QueryEmbedding(vector=normalize(np.asarray(embeddings[0], dtype=np.float64)))

    def _post_image_batch(self, images_png: Sequence[bytes]) -> np.ndarray:
        payload = {
            "images_b64": [base64.b64encode(img).decode("ascii") for img in images_png],
            "format": "png",
        }
        data = self._request("POST", "/v1/embed_images", payload)
        embeddings = data.get("embeddings") or []
        if len(embeddings) != len(images_png):
            raise DimZero(
                f"service returned {len(embeddings)} embeddings for {len(images_png)} images"
            )
        arr = np.asarray(embeddings, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise DimZero("service returned zero-dimensional image embeddings")
        return arr

    def fetch_frame_embeddings(self, frames_png: Sequence[bytes]) -> EmbeddingMatrix:
        if not frames_png:
            raise ConfigError("at least one frame is required")
        size = self.endpoint.max_batch
        batches = [frames_png[i : i + size] for i in range(0, len(frames_png), size)]
        results: list[np.ndarray | None] = [None] * len(batches)
        with ThreadPoolExecutor(max_workers=min(self.max_in_flight, len(batches))) as pool:
            futures = {pool.submit(self._post_image_batch, b): i for i, b in enumerate(batches)}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    raise PartialBatchFailure(
                        f"batch {i + 1}/{len(batches)} failed: {exc}"
                    ) from exc
        stacked = np.vstack([r for r in results if r is not None])
        return EmbeddingMatrix(rows=normalize_rows(stacked).astype(np.float32))


def fetch_text_embedding(endpoint: ProviderEndpoint, query: str) -> QueryEmbedding:
    return EmbeddingClient(endpoint).fetch_text_embedding(query)


def fetch_frame_embeddings(
    endpoint: ProviderEndpoint, frames_png: Sequence[bytes]
) -> EmbeddingMatrix:
    return EmbeddingClient(endpoint).fetch_frame_embeddings(frames_png)


class EmbeddingCache:
    """QFEB files keyed by (video digest, candidate index digest, model hint).

    Reads are lock-free against complete files; writes go through the
    atomic temp + rename of write_embedding_file, so concurrent writers
    of one key settle on identical bytes.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @staticmethod
    def key(video_digest: str, indices_digest: str, model_hint: str | None) -> str:
        raw = "\n".join([video_digest, indices_digest, model_hint or ""])
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.qfeb"

    def load(self, key: str) -> EmbeddingMatrix | None:
        path = self.path_for(key)
        if not path.is_file():
            return None
        return load_embedding_file(path)

    def store(self, key: str, matrix: EmbeddingMatrix) -> Path:
        path = self.path_for(key)
        write_embedding_file(matrix, path)
        return path
