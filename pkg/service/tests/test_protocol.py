import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

from qframe_service import PATTERN_MODEL_NAME, PatternEncoder, ServiceConfig, create_app


@pytest.fixture(scope="module")
def client():
    app = create_app(ServiceConfig(model_name=PATTERN_MODEL_NAME, max_batch=32))
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


def _png_bytes(image) -> str:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def _solid_png(rgb=(200, 30, 30), size=32) -> str:
    from PIL import Image

    return _png_bytes(Image.new("RGB", (size, size), rgb))


def test_health_shape(client):
    res = client.get("/v1/health")
    assert res.status_code == 200
    data = res.json()
    assert data["status"] == "ok"
    assert data["dim"] > 0
    assert data["model"] == PATTERN_MODEL_NAME
    assert data["preferred_image_size"] > 0
    assert "image_preprocess" in data


def test_embed_text_unit_norm_and_dim_consistency(client):
    res = client.post("/v1/embed_text", json={"texts": ["a red car"]})
    assert res.status_code == 200
    data = res.json()
    vec = np.asarray(data["embeddings"][0])
    assert abs(np.linalg.norm(vec) - 1.0) < 1e-5
    assert data["dim"] == len(vec) == client.get("/v1/health").json()["dim"]
    assert data["truncated"] == [False]


def test_embed_text_deterministic(client):
    a = client.post("/v1/embed_text", json={"texts": ["same words"]}).json()
    b = client.post("/v1/embed_text", json={"texts": ["same words"]}).json()
    assert a["embeddings"] == b["embeddings"]


def test_embed_text_truncation_flag(client):
    long_text = " ".join(f"word{i}" for i in range(200))
    res = client.post("/v1/embed_text", json={"texts": ["short", long_text]})
    assert res.json()["truncated"] == [False, True]


def test_embed_text_empty_is_400(client):
    res = client.post("/v1/embed_text", json={"texts": []})
    assert res.status_code == 400
    assert "error" in res.json()


def test_embed_images_single(client):
    res = client.post(
        "/v1/embed_images", json={"images_b64": [_solid_png()], "format": "png"}
    )
    assert res.status_code == 200
    vec = np.asarray(res.json()["embeddings"][0])
    assert abs(np.linalg.norm(vec) - 1.0) < 1e-5


def test_embed_images_batch_order_preserved(client):
    shades = [(i * 8 % 256, 64, 255 - i * 8 % 256) for i in range(32)]
    payload = [_solid_png(rgb) for rgb in shades]
    res = client.post("/v1/embed_images", json={"images_b64": payload, "format": "png"})
    assert res.status_code == 200
    batch = np.asarray(res.json()["embeddings"])
    assert batch.shape[0] == 32
    singles = [
        np.asarray(
            client.post(
                "/v1/embed_images", json={"images_b64": [p], "format": "png"}
            ).json()["embeddings"][0]
        )
        for p in payload[:4]
    ]
    for i, single in enumerate(singles):
        assert np.max(np.abs(batch[i] - single)) < 1e-12


def test_embed_images_undecodable_reports_index(client):
    good = _solid_png()
    res = client.post(
        "/v1/embed_images",
        json={"images_b64": [good, base64.b64encode(b"not a png").decode()]},
    )
    assert res.status_code == 400
    assert "image 1" in res.json()["error"]


def test_embed_images_batch_cap_413(client):
    payload = [_solid_png()] * 33
    res = client.post("/v1/embed_images", json={"images_b64": payload})
    assert res.status_code == 413
    assert "error" in res.json()


def test_invalid_body_is_400(client):
    res = client.post("/v1/embed_text", json={"texts": "not a list"})
    assert res.status_code == 400
    assert "error" in res.json()


def test_pattern_cross_modal_retrieval(client):
    encoder = PatternEncoder()
    dog_image = _png_bytes(encoder.render_concept_image("a dog"))
    img_vec = np.asarray(
        client.post("/v1/embed_images", json={"images_b64": [dog_image]}).json()[
            "embeddings"
        ][0]
    )
    texts = client.post(
        "/v1/embed_text", json={"texts": ["a dog", "a car"]}
    ).json()["embeddings"]
    dog_cos = float(img_vec @ np.asarray(texts[0]))
    car_cos = float(img_vec @ np.asarray(texts[1]))
    assert dog_cos > car_cos
    assert dog_cos > 0.9
