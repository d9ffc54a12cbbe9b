"""End-to-end orchestration for the select and embed commands.

Pure glue: every stage is one of the public module operations, timed
with perf_counter and reported per stage. Frame embeddings obtained
over HTTP go through the digest-keyed cache, so repeat runs with new
queries only pay for the text side.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .candidates import (
    EmbeddingMatrix,
    QueryEmbedding,
    similarity,
    uniform_candidate_indices,
)
from .core import (
    ScoredCandidates,
    SelectedFrame,
    SelectionConfig,
    SelectionResult,
    Tier,
    digest_int_sequence,
    sha256_file,
    token_cost,
    validate_config,
)
from .errors import ConfigError, IoFailure
from .providers import (
    EmbeddingCache,
    EmbeddingClient,
    ProviderEndpoint,
    load_embedding_file,
    write_embedding_file,
)
from .sampling import select_frames, softmax_temperature
from .tiers import assign_tiers, clamp_to_candidates, tier_resolution
from .video import DecodedFrame, Manifest, decode_frames, probe, resize_frame, write_outputs

log = logging.getLogger("qframe")


@dataclass(frozen=True)
class SelectOutcome:
    manifest: Manifest
    manifest_path: Path
    out_dir: Path
    timings_ms: dict


def _even_cap(side: int) -> int:
    return max(2, (side // 2) * 2)


def _capped_size(width: int, height: int, preferred: int | None) -> tuple[int, int] | None:
    """Target size for embedding inputs: native, unless the longer side
    exceeds the provider's preferred size, then scaled down to it."""
    if preferred is None or preferred < 2 or max(width, height) <= preferred:
        if width % 2 or height % 2:
            return _even_cap(width), _even_cap(height)
        return None
    scale = preferred / max(width, height)
    return _even_cap(int(round(width * scale))), _even_cap(int(round(height * scale)))


def _png_bytes(frame: DecodedFrame) -> bytes:
    ok, buf = cv2.imencode(".png", cv2.cvtColor(frame.pixels, cv2.COLOR_RGB2BGR))
    if not ok:
        raise IoFailure(f"PNG encoding failed for frame {frame.frame_index}")
    return buf.tobytes()


def _candidate_pngs(video_path: Path, indices: list[int], preferred: int | None) -> list[bytes]:
    frames = decode_frames(video_path, indices)
    out = []
    for frame in frames:
        target = _capped_size(frame.width, frame.height, preferred)
        if target is not None:
            frame = resize_frame(frame, target)
        out.append(_png_bytes(frame))
    return out


def _preferred_image_size(client: EmbeddingClient) -> int | None:
    try:
        info = client.health()
    except Exception as exc:
        log.warning("health check failed (%s); embedding at native resolution", exc)
        return None
    size = info.get("preferred_image_size")
    return int(size) if isinstance(size, (int, float)) and size else None


def _frames_via_endpoint(
    client: EmbeddingClient,
    video_path: Path,
    video_digest: str,
    indices: list[int],
    cache: EmbeddingCache | None,
) -> EmbeddingMatrix:
    key = None
    if cache is not None:
        key = cache.key(video_digest, digest_int_sequence(indices), client.endpoint.model_hint)
        cached = cache.load(key)
        if cached is not None and cached.count == len(indices):
            log.info("stage=embedding cache=hit key=%s", key[:12])
            return cached
    pngs = _candidate_pngs(video_path, indices, _preferred_image_size(client))
    matrix = client.fetch_frame_embeddings(pngs)
    if cache is not None and key is not None:
        cache.store(key, matrix)
    return matrix


def run_select(
    video_path: str | Path,
    query: str,
    cfg: SelectionConfig,
    out_dir: str | Path,
    *,
    endpoint: ProviderEndpoint | None = None,
    embeddings_path: str | Path | None = None,
    cache_dir: str | Path | None = None,
) -> SelectOutcome:
    """Probe, score, select, tier, decode, and write one run.

    Embeddings come from a QFEB file (count T for frames only, count
    T+1 with the query vector appended last) or from the endpoint;
    a frames-only file still needs the endpoint for the text side.
    """
    if not query:
        raise ConfigError("query must be non-empty")
    if endpoint is None and embeddings_path is None:
        raise ConfigError("either an endpoint or an embeddings file is required")
    cfg = validate_config(cfg)
    video_path = Path(video_path)
    timings: dict[str, float] = {}
    warnings: list[str] = []

    t0 = time.perf_counter()
    meta = probe(video_path, warn_sink=warnings)
    video_digest = sha256_file(video_path)
    timings["probe_ms"] = (time.perf_counter() - t0) * 1000.0

    effective_t = min(cfg.candidates, meta.total_frames)
    high, mid, low = cfg.tier_counts
    if effective_t < cfg.candidates:
        warnings.append(
            f"video has only {meta.total_frames} frames; candidate count reduced "
            f"from {cfg.candidates} to {effective_t}"
        )
        clamped = clamp_to_candidates(high, mid, low, effective_t)
        if clamped != (high, mid, low):
            warnings.append(
                f"tier counts clamped from {cfg.tier_counts} to {clamped}; realized "
                f"token cost {token_cost(*clamped)}"
            )
        high, mid, low = clamped
    cfg_eff = replace(cfg, candidates=effective_t, tier_counts=(high, mid, low))
    indices = uniform_candidate_indices(meta.total_frames, effective_t)

    t0 = time.perf_counter()
    client = EmbeddingClient(endpoint) if endpoint is not None else None
    query_embedding: QueryEmbedding | None = None
    if embeddings_path is not None:
        stored = load_embedding_file(embeddings_path)
        if stored.count == effective_t + 1:
            frames_matrix = EmbeddingMatrix(rows=stored.rows[:effective_t])
            query_embedding = QueryEmbedding(
                vector=stored.rows[effective_t].astype(np.float64)
            )
        elif stored.count == effective_t:
            frames_matrix = stored
        else:
            raise ConfigError(
                f"embeddings file holds {stored.count} vectors; expected "
                f"{effective_t} (frames) or {effective_t + 1} (frames + query)"
            )
    else:
        assert client is not None
        cache = EmbeddingCache(cache_dir) if cache_dir else None
        frames_matrix = _frames_via_endpoint(client, video_path, video_digest, indices, cache)
    if query_embedding is None:
        if client is None:
            raise ConfigError(
                "embeddings file has no appended query vector and no endpoint "
                "was given for the text side"
            )
        query_embedding = client.fetch_text_embedding(query)
    if client is not None:
        warnings.extend(client.warnings)
    timings["embedding_ms"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    scores = similarity(query_embedding, frames_matrix)
    probabilities = softmax_temperature(scores, cfg.temperature)
    scored = ScoredCandidates(
        frame_indices=tuple(indices), scores=scores, probabilities=probabilities
    )
    ranked = select_frames(scored, cfg_eff)
    assignment = assign_tiers(ranked, high, mid, low)
    tier_of = {}
    for tier_name, positions in (
        ("high", assignment.high),
        ("mid", assignment.mid),
        ("low", assignment.low),
    ):
        for pos in positions:
            tier_of[pos] = tier_name
    entries = []
    for rank, pos in enumerate(ranked.ordered_indices, start=1):
        tier = Tier(tier_of[pos])
        frame_index = indices[pos]
        entries.append(
            SelectedFrame(
                frame_index=frame_index,
                timestamp_s=frame_index / meta.fps,
                rank=rank,
                tier=tier,
                score=float(scores[pos]),
                resolution=tier_resolution(tier, cfg.base_resolution),
            )
        )
    entries.sort(key=lambda e: e.frame_index)
    result = SelectionResult(entries=tuple(entries), config_snapshot=cfg, query=query)
    timings["sampling_ms"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    decoded = decode_frames(video_path, [e.frame_index for e in entries])
    sized = [resize_frame(f, e.resolution) for f, e in zip(decoded, entries)]
    timings["decode_ms"] = (time.perf_counter() - t0) * 1000.0

    manifest = write_outputs(
        result,
        sized,
        out_dir,
        video=meta,
        video_digest=video_digest,
        scored=scored,
        realized_token_cost=token_cost(high, mid, low),
        warnings=warnings,
        timings_ms=timings,
    )
    for stage in ("probe_ms", "embedding_ms", "sampling_ms", "decode_ms"):
        log.info("stage=%s ms=%.2f", stage.removesuffix("_ms"), timings[stage])
    return SelectOutcome(
        manifest=manifest,
        manifest_path=Path(out_dir) / "manifest.json",
        out_dir=Path(out_dir),
        timings_ms=timings,
    )


def run_embed(
    video_path: str | Path,
    candidates: int,
    endpoint: ProviderEndpoint,
    out_path: str | Path,
    *,
    cache_dir: str | Path | None = None,
) -> Path:
    """Precompute candidate-frame embeddings into a QFEB file."""
    video_path = Path(video_path)
    warnings: list[str] = []
    meta = probe(video_path, warn_sink=warnings)
    for w in warnings:
        log.warning("%s", w)
    if candidates > meta.total_frames:
        raise ConfigError(
            f"requested {candidates} candidates but the video has only "
            f"{meta.total_frames} frames"
        )
    indices = uniform_candidate_indices(meta.total_frames, candidates)
    digest = sha256_file(video_path)
    client = EmbeddingClient(endpoint)
    cache = EmbeddingCache(cache_dir) if cache_dir else None
    matrix = _frames_via_endpoint(client, video_path, digest, indices, cache)
    out_path = Path(out_path)
    write_embedding_file(matrix, out_path)
    return out_path
