"""Encoder backends.

PatternEncoder is a deterministic, weight-free stand-in for a CLIP
model: text maps to a hash-derived unit vector, and images are read
through a fixed orthonormal projection of a coarse pixel grid. Its
render_concept_image() produces an image whose grid encodes a concept
vector, so pattern-rendered images and their texts land near each
other in the shared space. That gives protocol and retrieval tests a
real cross-modal signal without any downloaded weights.

ClipEncoder wraps a pretrained CLIP-family model through
sentence-transformers when weights are actually available.
"""

from __future__ import annotations

import hashlib
import io
import re
import threading

import numpy as np
from PIL import Image

PATTERN_MODEL_NAME = "pattern:v1"
_PATTERN_DIM = 64
_GRID = 16  # images are read as a GRID x GRID RGB mosaic
_TOKEN_LIMIT = 77  # mirrors the classic CLIP text context
_RENDER_SIZE = 224

_WORD_RE = re.compile(r"[a-z0-9]+")


def _token_vector(token: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(token.encode()).digest()[:8], "little")
    vec = np.random.default_rng(seed).normal(size=dim)
    return vec / np.linalg.norm(vec)


class PatternEncoder:
    """Deterministic shared-space encoder; see module docstring."""

    name = PATTERN_MODEL_NAME
    dim = _PATTERN_DIM
    preferred_image_size = _RENDER_SIZE
    image_preprocess = f"box-downsample to {_GRID}x{_GRID} grid, no crop"

    def __init__(self) -> None:
        # fixed orthonormal projection grid-pixels -> embedding space
        raw = np.random.default_rng(20240315).normal(size=(_GRID * _GRID * 3, self.dim))
        q, _ = np.linalg.qr(raw)
        self._projection = q.T  # (dim, grid pixels), orthonormal rows

    def _tokens(self, text: str) -> tuple[list[str], bool]:
        tokens = _WORD_RE.findall(text.lower())
        return tokens[:_TOKEN_LIMIT], len(tokens) > _TOKEN_LIMIT

    def text_vector(self, text: str) -> tuple[np.ndarray, bool]:
        tokens, truncated = self._tokens(text)
        if not tokens:
            acc = _token_vector("", self.dim)
        else:
            acc = np.zeros(self.dim)
            for tok in tokens:
                acc += _token_vector(tok, self.dim)
        return acc / np.linalg.norm(acc), truncated

    def embed_texts(self, texts: list[str]) -> tuple[np.ndarray, list[bool]]:
        vectors, truncated = [], []
        for text in texts:
            vec, cut = self.text_vector(text)
            vectors.append(vec)
            truncated.append(cut)
        return np.vstack(vectors), truncated

    def _grid_values(self, image: Image.Image) -> np.ndarray:
        small = image.convert("RGB").resize((_GRID, _GRID), Image.BOX)
        values = np.asarray(small, dtype=np.float64) / 255.0 - 0.5
        return values.reshape(-1)

    def embed_images(self, images: list[Image.Image]) -> np.ndarray:
        rows = []
        for image in images:
            projected = self._projection @ self._grid_values(image)
            norm = np.linalg.norm(projected)
            if norm < 1e-12:
                # featureless image: fall back to a fixed direction
                projected = self._projection[:, 0].copy()
                norm = np.linalg.norm(projected)
            rows.append(projected / norm)
        return np.vstack(rows)

    def render_concept_image(self, text: str, size: int = _RENDER_SIZE) -> Image.Image:
        """Image whose grid mosaic projects back onto the text's vector."""
        vec, _ = self.text_vector(text)
        values = self._projection.T @ vec  # orthonormal rows: projection inverts
        scale = 0.5 / max(1e-12, np.max(np.abs(values)))
        pixels = np.clip((values * scale + 0.5) * 255.0, 0, 255).round()
        mosaic = pixels.reshape(_GRID, _GRID, 3).astype(np.uint8)
        return Image.fromarray(mosaic, "RGB").resize((size, size), Image.NEAREST)


class ClipEncoder:
    """Pretrained CLIP-family encoder via sentence-transformers.

    Inference is serialized with a lock; most backends are not
    thread-safe and a single worker queue is the safe default.
    """

    image_preprocess = "backend default (sentence-transformers CLIP pipeline)"

    def __init__(self, model_name: str, device: str = "cpu") -> None:
        from sentence_transformers import SentenceTransformer

        self.name = model_name
        self._model = SentenceTransformer(model_name, device=device)
        self._lock = threading.Lock()
        probe = self._model.encode(["probe"], normalize_embeddings=True)
        self.dim = int(probe.shape[1])
        self.preferred_image_size = 224

    def embed_texts(self, texts: list[str]) -> tuple[np.ndarray, list[bool]]:
        with self._lock:
            vectors = self._model.encode(texts, normalize_embeddings=True)
        tokenizer = getattr(self._model, "tokenizer", None)
        truncated = []
        for text in texts:
            if tokenizer is None:
                truncated.append(False)
                continue
            length = len(tokenizer(text)["input_ids"])
            limit = getattr(self._model, "max_seq_length", None) or length
            truncated.append(length > limit)
        return np.asarray(vectors, dtype=np.float64), truncated

    def embed_images(self, images: list[Image.Image]) -> np.ndarray:
        with self._lock:
            vectors = self._model.encode(images, normalize_embeddings=True)
        return np.asarray(vectors, dtype=np.float64)


def decode_image(data: bytes) -> Image.Image:
    image = Image.open(io.BytesIO(data))
    image.load()
    return image


def load_encoder(model_name: str, device: str = "cpu"):
    """Resolve a backend per the config policy; see ServiceConfig."""
    if model_name == PATTERN_MODEL_NAME:
        return PatternEncoder()
    if model_name == "auto":
        try:
            return ClipEncoder("clip-ViT-B-32", device=device)
        except Exception:
            return PatternEncoder()
    return ClipEncoder(model_name, device=device)
