"""Video probing, exact-index frame decoding, tier resizing, and the
run manifest.

Decoding seeks when the next wanted index is far ahead and steps with
grab() otherwise, so a selection never costs a full-file decode on a
seekable container. The manifest is written last, atomically, and is
byte-stable across reruns except for its single wall_clock field.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import cv2
import numpy as np

from .core import (
    ScoredCandidates,
    SelectionResult,
    Tier,
    VideoMeta,
    sha256_bytes,
)
from .errors import (
    ConfigError,
    DecodeFailure,
    IndexOutOfRange,
    IoFailure,
    TargetTooSmall,
    UndecodableContainer,
    ZeroFrames,
)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

# jump threshold below which stepping frame by frame beats a container seek
_SEEK_MIN_GAP = 48

_STILL_IMAGE_MAGICS = (
    b"\x89PNG\r\n\x1a\n",
    b"\xff\xd8\xff",
    b"GIF87a",
    b"GIF89a",
    b"BM",
    b"II*\x00",
    b"MM\x00*",
)


@dataclass(frozen=True)
class DecodedFrame:
    """One RGB frame; pixels are (h, w, 3) uint8."""

    frame_index: int
    timestamp_s: float
    pixels: np.ndarray

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


def _looks_like_still_image(path: Path) -> bool:
    try:
        head = path.open("rb").read(16)
    except OSError:
        return False
    if head[:4] == b"RIFF" and head[8:12] == b"WEBP":
        return True
    return any(head.startswith(m) for m in _STILL_IMAGE_MAGICS)


def _scan_count(path: str) -> tuple[int, float]:
    """Sequentially decode the whole file; returns (frames, last position ms)."""
    cap = cv2.VideoCapture(path)
    if not cap.isOpened():
        raise UndecodableContainer(f"cannot open {path}")
    count = 0
    last_ms = 0.0
    try:
        while True:
            if not cap.grab():
                break
            count += 1
            ms = cap.get(cv2.CAP_PROP_POS_MSEC)
            if ms > 0:
                last_ms = ms
    finally:
        cap.release()
    return count, last_ms


def probe(path: str | Path, warn_sink: list[str] | None = None) -> VideoMeta:
    """Container facts for one video.

    The header's frame count is only trusted after verifying the last
    frame is readable and nothing follows it; otherwise the count comes
    from a full index scan (with a warning). A missing or zero fps falls
    back to scanned-frames / scanned-duration, also with a warning.
    """
    path = Path(path)
    if not path.is_file():
        raise UndecodableContainer(f"{path} does not exist or is not a file")
    if _looks_like_still_image(path):
        raise UndecodableContainer(f"{path} is a still image, not a video container")
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise UndecodableContainer(f"cannot open {path} as a video container")
    try:
        fps = float(cap.get(cv2.CAP_PROP_FPS))
        width = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
        height = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
        header_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        verified = False
        if header_count >= 1:
            cap.set(cv2.CAP_PROP_POS_FRAMES, header_count - 1)
            got_last = cap.grab()
            nothing_after = not cap.grab()
            verified = got_last and nothing_after
    finally:
        cap.release()

    last_ms = 0.0
    if verified:
        total = header_count
    else:
        total, last_ms = _scan_count(str(path))
        if total == 0:
            raise ZeroFrames(f"{path} contains no decodable frames")
        if header_count != total and warn_sink is not None:
            warn_sink.append(
                f"header frame count {header_count} disagreed with index scan {total}; "
                "using the scan"
            )
    if total == 0:
        raise ZeroFrames(f"{path} contains no decodable frames")
    if not (fps > 0) or not np.isfinite(fps):
        if last_ms <= 0:
            _, last_ms = _scan_count(str(path))
        if last_ms <= 0:
            raise UndecodableContainer(f"{path} reports no frame rate and no timestamps")
        fps = total / (last_ms / 1000.0)
        if warn_sink is not None:
            warn_sink.append(
                f"container reported no frame rate; derived {fps:.4f} fps from "
                "scanned duration"
            )
    if width < 1 or height < 1:
        raise UndecodableContainer(f"{path} reports invalid dimensions {width}x{height}")
    return VideoMeta(
        path=str(path), total_frames=total, fps=fps, width=width, height=height
    )


def decode_frames(path: str | Path, indices: Sequence[int]) -> list[DecodedFrame]:
    """Decode exactly the requested frames, in order.

    indices must be strictly increasing; far jumps use container seeks,
    short ones step with grab().
    """
    indices = [int(i) for i in indices]
    if not indices:
        return []
    if indices[0] < 0:
        raise IndexOutOfRange(f"frame index {indices[0]} is negative")
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ConfigError("frame indices must be strictly increasing")
    path = Path(path)
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise UndecodableContainer(f"cannot open {path} as a video container")
    try:
        fps = float(cap.get(cv2.CAP_PROP_FPS))
        total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if total >= 1 and indices[-1] >= total:
            raise IndexOutOfRange(
                f"frame index {indices[-1]} out of range for {total} frames"
            )
        out: list[DecodedFrame] = []
        pos = 0
        for want in indices:
            gap = want - pos
            if gap >= _SEEK_MIN_GAP:
                cap.set(cv2.CAP_PROP_POS_FRAMES, want)
                pos = want
            else:
                while pos < want:
                    if not cap.grab():
                        raise DecodeFailure(f"decode failed stepping to frame {want}")
                    pos += 1
            ok, frame = cap.read()
            if not ok or frame is None:
                raise DecodeFailure(f"decode failed at frame {want}")
            pos += 1
            ts = want / fps if fps > 0 else 0.0
            out.append(
                DecodedFrame(
                    frame_index=want,
                    timestamp_s=ts,
                    pixels=cv2.cvtColor(frame, cv2.COLOR_BGR2RGB),
                )
            )
        return out
    finally:
        cap.release()


def resize_frame(frame: DecodedFrame, target: tuple[int, int]) -> DecodedFrame:
    """Bilinear resize with half-pixel centers to exactly target (w, h)."""
    w, h = int(target[0]), int(target[1])
    if w < 2 or h < 2:
        raise TargetTooSmall(f"target {w}x{h} is below the 2-pixel minimum")
    if w % 2 or h % 2:
        raise ConfigError(f"target sides must be even, got {w}x{h}")
    if (frame.width, frame.height) == (w, h):
        return frame
    resized = cv2.resize(frame.pixels, (w, h), interpolation=cv2.INTER_LINEAR)
    return DecodedFrame(
        frame_index=frame.frame_index, timestamp_s=frame.timestamp_s, pixels=resized
    )


@dataclass(frozen=True)
class Manifest:
    """Machine-readable record of one selection run."""

    version: int
    video: dict
    query: str
    config_snapshot: dict
    candidates: tuple[int, ...]
    scores: tuple[float, ...]
    probabilities: tuple[float, ...]
    selections: tuple[dict, ...]
    realized_token_cost: str
    warnings: tuple[str, ...]
    wall_clock: dict

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "video": dict(self.video),
            "query": self.query,
            "config_snapshot": dict(self.config_snapshot),
            "candidates": list(self.candidates),
            "scores": list(self.scores),
            "probabilities": list(self.probabilities),
            "selections": [dict(s) for s in self.selections],
            "realized_token_cost": self.realized_token_cost,
            "warnings": list(self.warnings),
            "wall_clock": dict(self.wall_clock),
        }

    def json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")


def _frame_file_name(rank: int, frame_index: int, tier: Tier) -> str:
    return f"{rank:03d}_{frame_index:06d}_{tier.value}.png"


def write_outputs(
    result: SelectionResult,
    frames: Sequence[DecodedFrame],
    out_dir: str | Path,
    *,
    video: VideoMeta,
    video_digest: str,
    scored: ScoredCandidates,
    realized_token_cost: Fraction,
    warnings: Sequence[str] = (),
    timings_ms: Mapping[str, float] | None = None,
) -> Manifest:
    """Write one PNG per selection plus manifest.json.

    frames must align one-to-one with result.entries (both in ascending
    frame_index order) and already be tier-sized. The manifest lands
    last via temp + rename; on any failure every file written by this
    call is removed, so a crash never leaves a manifest without its
    frames or half a frame set behind.
    """
    if len(frames) != len(result.entries):
        raise ConfigError(
            f"{len(frames)} frames do not match {len(result.entries)} selection entries"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    selections: list[dict] = []
    try:
        for entry, frame in zip(result.entries, frames):
            if frame.frame_index != entry.frame_index:
                raise ConfigError(
                    f"frame {frame.frame_index} does not match entry {entry.frame_index}"
                )
            if (frame.width, frame.height) != entry.resolution:
                raise ConfigError(
                    f"frame {frame.frame_index} is {frame.width}x{frame.height}, "
                    f"entry wants {entry.resolution}"
                )
            ok, buf = cv2.imencode(".png", cv2.cvtColor(frame.pixels, cv2.COLOR_RGB2BGR))
            if not ok:
                raise IoFailure(f"PNG encoding failed for frame {frame.frame_index}")
            data = buf.tobytes()
            name = _frame_file_name(entry.rank, entry.frame_index, entry.tier)
            target = out_dir / name
            target.write_bytes(data)
            written.append(target)
            selections.append(
                {
                    "frame_index": entry.frame_index,
                    "timestamp_s": entry.timestamp_s,
                    "rank": entry.rank,
                    "tier": entry.tier.value,
                    "score": entry.score,
                    "resolution": list(entry.resolution),
                    "output_file": name,
                    "file_digest": sha256_bytes(data),
                }
            )
        manifest = Manifest(
            version=MANIFEST_VERSION,
            video={
                "path": video.path,
                "digest": video_digest,
                "total_frames": video.total_frames,
                "fps": video.fps,
                "width": video.width,
                "height": video.height,
            },
            query=result.query,
            config_snapshot=result.config_snapshot.snapshot(),
            candidates=tuple(scored.frame_indices),
            scores=tuple(float(s) for s in scored.scores),
            probabilities=tuple(float(p) for p in scored.probabilities),
            selections=tuple(selections),
            realized_token_cost=str(realized_token_cost),
            warnings=tuple(warnings),
            wall_clock={
                "generated_at_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "timings_ms": dict(timings_ms or {}),
            },
        )
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=MANIFEST_NAME, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(manifest.json_bytes())
            os.replace(tmp, out_dir / MANIFEST_NAME)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return manifest
    except BaseException as exc:
        for p in written:
            try:
                p.unlink()
            except OSError:
                pass
        if isinstance(exc, OSError):
            raise IoFailure(f"writing outputs to {out_dir} failed: {exc}") from exc
        raise
