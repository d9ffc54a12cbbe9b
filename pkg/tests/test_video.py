import json
from fractions import Fraction

import cv2
import numpy as np
import pytest

from conftest import gray_frame, ramp_frames
from qframe.core import (
    ScoredCandidates,
    SelectedFrame,
    SelectionConfig,
    SelectionResult,
    Tier,
    sha256_file,
)
from qframe.errors import (
    ConfigError,
    IndexOutOfRange,
    IoFailure,
    TargetTooSmall,
    UndecodableContainer,
    ZeroFrames,
)
from qframe.video import (
    DecodedFrame,
    decode_frames,
    probe,
    resize_frame,
    write_outputs,
)


# -- probe ---------------------------------------------------------------

def test_probe_known_parameters(make_video):
    path = make_video([gray_frame(0)] * 240, fps=24.0)
    meta = probe(path)
    assert meta.total_frames == 240
    assert meta.fps == pytest.approx(24.0)
    assert (meta.width, meta.height) == (64, 48)
    assert meta.duration_s == pytest.approx(10.0, rel=1e-9)


def test_probe_still_image_rejected(tmp_path):
    img = tmp_path / "still.png"
    ok, buf = cv2.imencode(".png", np.zeros((8, 8, 3), np.uint8))
    assert ok
    img.write_bytes(buf.tobytes())
    with pytest.raises(UndecodableContainer):
        probe(img)


def test_probe_missing_and_garbage_files(tmp_path):
    with pytest.raises(UndecodableContainer):
        probe(tmp_path / "nope.mp4")
    junk = tmp_path / "junk.mp4"
    junk.write_bytes(b"this is not a video at all" * 10)
    with pytest.raises((UndecodableContainer, ZeroFrames)):
        probe(junk)


def test_probe_distrusts_wrong_header(make_video, tmp_path):
    # a truncated container keeps its 24-frame header but only
    # decodes a prefix; the index scan must win, with a warning
    path = make_video([gray_frame(i * 10) for i in range(24)], fps=24.0)
    data = path.read_bytes()
    cut = tmp_path / "cut.avi"
    cut.write_bytes(data[: len(data) * 2 // 3])
    warnings: list[str] = []
    meta = probe(cut, warn_sink=warnings)
    assert meta.total_frames < 24
    assert any("disagreed" in w for w in warnings)


def test_probe_fps_fallback_from_scan(make_video, monkeypatch):
    path = make_video([gray_frame(i * 10) for i in range(24)], fps=24.0)

    real_capture = cv2.VideoCapture

    class NoFpsCapture:
        def __init__(self, *args):
            self._cap = real_capture(*args)

        def get(self, prop):
            if prop == cv2.CAP_PROP_FPS:
                return 0.0
            return self._cap.get(prop)

        def __getattr__(self, name):
            return getattr(self._cap, name)

    monkeypatch.setattr("qframe.video.cv2.VideoCapture", NoFpsCapture)
    warnings: list[str] = []
    meta = probe(path, warn_sink=warnings)
    assert meta.total_frames == 24
    # derived rate: the last grabbed timestamp stands in for the duration
    assert meta.fps == pytest.approx(24.0, rel=0.10)
    assert any("frame rate" in w for w in warnings)


# -- decode_frames -------------------------------------------------------

def test_decode_single_solid_red(make_video):
    red = np.zeros((48, 64, 3), np.uint8)
    red[:, :, 0] = 255
    path = make_video([red] * 5)
    frames = decode_frames(path, [0])
    assert len(frames) == 1
    assert frames[0].frame_index == 0
    assert np.array_equal(frames[0].pixels, red)


def test_decode_first_and_last(make_video):
    path = make_video(ramp_frames(32))
    frames = decode_frames(path, [0, 31])
    assert [f.frame_index for f in frames] == [0, 31]
    assert float(frames[0].pixels.mean()) == 0.0
    assert float(frames[1].pixels.mean()) == 31.0


def test_decode_color_ramp_values_match_indices(ramp_video_256):
    wanted = [0, 3, 47, 48, 100, 200, 255]
    frames = decode_frames(ramp_video_256, wanted)
    for idx, frame in zip(wanted, frames):
        assert float(frame.pixels.mean()) == float(idx)
        assert frame.timestamp_s == pytest.approx(idx / 24.0)


def test_decode_long_jump_uses_seek_and_stays_exact(ramp_video_256):
    # 0 -> 200 jumps far beyond the step threshold, forcing a seek
    frames = decode_frames(ramp_video_256, [0, 200])
    assert float(frames[1].pixels.mean()) == 200.0


def test_decode_validates_indices(make_video):
    path = make_video(ramp_frames(8))
    with pytest.raises(ConfigError):
        decode_frames(path, [3, 3])
    with pytest.raises(ConfigError):
        decode_frames(path, [5, 2])
    with pytest.raises(IndexOutOfRange):
        decode_frames(path, [0, 8])
    with pytest.raises(IndexOutOfRange):
        decode_frames(path, [-1, 2])
    assert decode_frames(path, []) == []


# -- resize_frame --------------------------------------------------------

def _frame(pixels):
    return DecodedFrame(frame_index=0, timestamp_s=0.0, pixels=pixels)


def test_resize_constant_image_invariance():
    frame = _frame(np.full((448, 448, 3), 77, np.uint8))
    out = resize_frame(frame, (224, 224))
    assert out.pixels.shape == (224, 224, 3)
    assert np.unique(out.pixels).tolist() == [77]


def test_resize_identity_is_exact():
    pixels = np.random.default_rng(0).integers(0, 256, (48, 64, 3), dtype=np.uint8)
    out = resize_frame(_frame(pixels), (64, 48))
    assert np.array_equal(out.pixels, pixels)


def test_resize_checkerboard_to_midgray():
    # 2x decimation with half-pixel centers averages each 2x2 block
    cb = np.zeros((4, 4, 3), np.uint8)
    cb[::2, 1::2] = 255
    cb[1::2, ::2] = 255
    out = resize_frame(_frame(cb), (2, 2))
    assert np.all(np.abs(out.pixels.astype(int) - 128) <= 1)


def test_resize_matches_hand_bilinear_for_2x_decimation():
    rng = np.random.default_rng(5)
    pixels = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    out = resize_frame(_frame(pixels), (4, 4)).pixels.astype(float)
    # oracle: with half-pixel centers the 2x source coordinate lands
    # exactly between adjacent pixels, so each output is a 2x2 block mean
    blocks = pixels.astype(float).reshape(4, 2, 4, 2, 3).mean(axis=(1, 3))
    assert np.max(np.abs(out - blocks)) <= 1.0


def test_resize_rejects_bad_targets():
    frame = _frame(np.zeros((16, 16, 3), np.uint8))
    with pytest.raises(TargetTooSmall):
        resize_frame(frame, (0, 4))
    with pytest.raises(ConfigError):
        resize_frame(frame, (5, 4))


# -- write_outputs -------------------------------------------------------

def _result_and_frames(meta_fps=24.0):
    cfg = SelectionConfig(candidates=4, tier_counts=(1, 1, 1), budget=Fraction(21, 16))
    entries = (
        SelectedFrame(1, 1 / meta_fps, 2, Tier.MID, 0.5, (8, 6)),
        SelectedFrame(2, 2 / meta_fps, 1, Tier.HIGH, 0.9, (16, 12)),
        SelectedFrame(3, 3 / meta_fps, 3, Tier.LOW, 0.1, (4, 2)),
    )
    result = SelectionResult(entries=entries, config_snapshot=cfg, query="test query")
    frames = [
        DecodedFrame(1, 1 / meta_fps, np.full((6, 8, 3), 10, np.uint8)),
        DecodedFrame(2, 2 / meta_fps, np.full((12, 16, 3), 20, np.uint8)),
        DecodedFrame(3, 3 / meta_fps, np.full((2, 4, 3), 30, np.uint8)),
    ]
    scored = ScoredCandidates(
        frame_indices=(0, 1, 2, 3),
        scores=np.array([0.0, 0.5, 0.9, 0.1]),
        probabilities=np.array([0.1, 0.2, 0.4, 0.3]),
    )
    return result, frames, scored


def test_write_outputs_files_and_manifest(make_video, tmp_path):
    video = make_video(ramp_frames(4))
    from qframe.video import probe as probe_fn

    meta = probe_fn(video)
    result, frames, scored = _result_and_frames()
    out_dir = tmp_path / "out"
    manifest = write_outputs(
        result,
        frames,
        out_dir,
        video=meta,
        video_digest=sha256_file(video),
        scored=scored,
        realized_token_cost=Fraction(21, 16),
        warnings=["w1"],
        timings_ms={"sampling_ms": 1.0},
    )
    pngs = sorted(p.name for p in out_dir.glob("*.png"))
    assert pngs == [
        "001_000002_high.png",
        "002_000001_mid.png",
        "003_000003_low.png",
    ]
    data = json.loads((out_dir / "manifest.json").read_text())
    assert data["version"] == 1
    assert data["query"] == "test query"
    assert data["realized_token_cost"] == "21/16"
    assert data["warnings"] == ["w1"]
    assert [s["frame_index"] for s in data["selections"]] == [1, 2, 3]
    assert data["video"]["total_frames"] == 4
    assert len(data["candidates"]) == 4
    # digests match the files on disk
    import hashlib

    for sel in data["selections"]:
        blob = (out_dir / sel["output_file"]).read_bytes()
        assert hashlib.sha256(blob).hexdigest() == sel["file_digest"]
    assert manifest.to_dict() == data


def test_write_outputs_conservation(make_video, tmp_path):
    video = make_video(ramp_frames(4))
    meta = probe(video)
    result, frames, scored = _result_and_frames()
    out_dir = tmp_path / "out2"
    write_outputs(
        result, frames, out_dir,
        video=meta, video_digest="0" * 64, scored=scored,
        realized_token_cost=Fraction(21, 16),
    )
    assert len(list(out_dir.glob("*.png"))) == len(result.entries)


def test_write_outputs_atomic_on_failure(make_video, tmp_path, monkeypatch):
    video = make_video(ramp_frames(4))
    meta = probe(video)
    result, frames, scored = _result_and_frames()
    out_dir = tmp_path / "out3"

    real_imencode = cv2.imencode
    calls = {"n": 0}

    def failing_imencode(ext, img):
        calls["n"] += 1
        if calls["n"] == 2:
            return False, None
        return real_imencode(ext, img)

    monkeypatch.setattr("qframe.video.cv2.imencode", failing_imencode)
    with pytest.raises(IoFailure):
        write_outputs(
            result, frames, out_dir,
            video=meta, video_digest="0" * 64, scored=scored,
            realized_token_cost=Fraction(21, 16),
        )
    assert not (out_dir / "manifest.json").exists()
    assert list(out_dir.glob("*.png")) == []


def test_write_outputs_rejects_mismatched_frames(make_video, tmp_path):
    video = make_video(ramp_frames(4))
    meta = probe(video)
    result, frames, scored = _result_and_frames()
    with pytest.raises(ConfigError):
        write_outputs(
            result, frames[:2], tmp_path / "out4",
            video=meta, video_digest="0" * 64, scored=scored,
            realized_token_cost=Fraction(21, 16),
        )
