"""Uniform candidate downsampling and cross-modal similarity scoring.

Candidate indices are center-offset uniform: floor((j + 0.5) * D / T).
This never emits index D and does not bias toward frame 0. Similarity
is the inner product of unit-normalized embeddings, i.e. cosine, which
bounds scores to [-1, 1] and gives the temperature a stable meaning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, TooFewFrames


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-per-candidate embedding matrix with unit-norm rows.

    Rows are float32, the wire and file precision; the norm tolerance
    of 1e-6 reflects that.
    """

    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise ConfigError(f"embedding rows must be 2-D, got shape {rows.shape}")
        if rows.shape[0] > 0 and rows.shape[1] < 1:
            raise ConfigError("embedding dimension must be >= 1")
        if rows.shape[0] > 0:
            norms = np.linalg.norm(rows.astype(np.float64), axis=1)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > 1e-6:
                raise ConfigError(
                    f"embedding rows must be unit-norm within 1e-6 (worst error {worst:.3g})"
                )
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def count(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])


@dataclass(frozen=True)
class QueryEmbedding:
    vector: np.ndarray

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] < 1:
            raise ConfigError(f"query embedding must be a 1-D vector, got shape {vec.shape}")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-6:
            raise ConfigError(f"query embedding must be unit-norm within 1e-6, norm {norm:.8f}")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


def uniform_candidate_indices(total_frames: int, count: int) -> list[int]:
    """Center-offset uniform frame indices: floor((j + 0.5) * D / T).

    Strictly increasing, all in [0, D). Integer arithmetic, so exact
    for any frame count.
    """
    if count < 1:
        raise ConfigError(f"candidate count must be >= 1, got {count}")
    if total_frames < count:
        raise TooFewFrames(
            f"video has {total_frames} frames, cannot sample {count} candidates"
        )
    return [((2 * j + 1) * total_frames) // (2 * count) for j in range(count)]


def similarity(query: QueryEmbedding, frames: EmbeddingMatrix) -> np.ndarray:
    """Per-candidate cosine scores: dot(query, row_j) for every row."""
    if query.dim != frames.dim:
        raise DimensionMismatch(
            f"query dim {query.dim} != frame embedding dim {frames.dim}"
        )
    return frames.rows.astype(np.float64) @ query.vector
