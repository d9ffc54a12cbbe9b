from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
import pytest

from qframe.candidates import EmbeddingMatrix, uniform_candidate_indices
from qframe.providers import write_embedding_file

LOSSLESS_FOURCC = cv2.VideoWriter_fourcc(*"FFV1")


def write_video(path: Path, frames_rgb: list[np.ndarray], fps: float = 24.0) -> Path:
    h, w = frames_rgb[0].shape[:2]
    writer = cv2.VideoWriter(str(path), LOSSLESS_FOURCC, fps, (w, h))
    assert writer.isOpened(), "FFV1 writer unavailable"
    for frame in frames_rgb:
        writer.write(cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    writer.release()
    return path


def gray_frame(level: int, w: int = 64, h: int = 48) -> np.ndarray:
    return np.full((h, w, 3), level, dtype=np.uint8)


def ramp_frames(count: int, w: int = 64, h: int = 48) -> list[np.ndarray]:
    # frame i is solid gray level i; lossless codec keeps this exact
    assert count <= 256
    return [gray_frame(i, w, h) for i in range(count)]


@pytest.fixture
def make_video(tmp_path):
    def _make(frames_rgb, fps=24.0, name="clip.avi"):
        return write_video(tmp_path / name, frames_rgb, fps)

    return _make


@pytest.fixture(scope="session")
def ramp_video_256(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("ramp")
    return write_video(root / "ramp256.avi", ramp_frames(256))


def controlled_embeddings(
    total_frames: int, candidates: int, favored_frames: list[int], dim: int = 8
) -> tuple[np.ndarray, np.ndarray]:
    """Frame rows plus a query vector with controllable similarity:
    favored frames score ~1.0, the rest spread over lower values."""
    indices = uniform_candidate_indices(total_frames, candidates)
    rows = np.zeros((candidates, dim), dtype=np.float64)
    query = np.zeros(dim)
    query[0] = 1.0
    for j, frame_index in enumerate(indices):
        if frame_index in favored_frames:
            theta = 0.0
        else:
            theta = 0.5 + 1.0 * (j / max(1, candidates - 1))  # scores cos(theta) < 0.88
        rows[j, 0] = np.cos(theta)
        rows[j, 1] = np.sin(theta)
    return rows.astype(np.float32), query


def write_qfeb_with_query(
    path: Path, rows: np.ndarray, query: np.ndarray
) -> Path:
    """QFEB fixture with the query vector appended as the final row."""
    stacked = np.vstack([rows, query.astype(np.float32)[None, :]])
    norms = np.linalg.norm(stacked.astype(np.float64), axis=1, keepdims=True)
    stacked = (stacked / norms).astype(np.float32)
    write_embedding_file(EmbeddingMatrix(rows=stacked), path)
    return path
