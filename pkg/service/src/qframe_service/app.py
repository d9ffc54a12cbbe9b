"""FastAPI application implementing the embedding wire protocol.

Routes:
    GET  /v1/health       -> {"status": "ok", "dim", "model",
                              "preferred_image_size", "image_preprocess"}
    POST /v1/embed_text   -> {"texts": [...]} ->
                             {"embeddings", "dim", "model", "truncated"}
    POST /v1/embed_images -> {"images_b64": [...], "format": "png"} ->
                             same response shape

Every non-200 response body is {"error": "..."}; batches over the
configured cap get 413.
"""

from __future__ import annotations

import base64
import binascii
import logging

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import ServiceConfig
from .encoders import decode_image, load_encoder

log = logging.getLogger("qframe_service")


class EmbedTextRequest(BaseModel):
    texts: list[str] = Field(default_factory=list)


class EmbedImagesRequest(BaseModel):
    images_b64: list[str] = Field(default_factory=list)
    format: str = "png"


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    encoder = load_encoder(config.model_name, config.device)
    log.info("serving model %s (dim %d)", encoder.name, encoder.dim)

    app = FastAPI(title="qframe embedding service")
    app.state.encoder = encoder
    app.state.config = config

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error(400, f"invalid request body: {exc.errors()[:1]}")

    @app.exception_handler(Exception)
    async def fallback_handler(request: Request, exc: Exception):
        log.exception("model failure")
        return _error(500, f"model failure: {exc}")

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "dim": encoder.dim,
            "model": encoder.name,
            "preferred_image_size": encoder.preferred_image_size,
            "image_preprocess": encoder.image_preprocess,
        }

    @app.post("/v1/embed_text")
    def embed_text(req: EmbedTextRequest):
        if not req.texts:
            return _error(400, "texts must be a non-empty list")
        if len(req.texts) > config.max_batch:
            return _error(413, f"batch of {len(req.texts)} exceeds cap {config.max_batch}")
        vectors, truncated = encoder.embed_texts(req.texts)
        return {
            "embeddings": [[float(x) for x in row] for row in vectors],
            "dim": encoder.dim,
            "model": encoder.name,
            "truncated": truncated,
        }

    @app.post("/v1/embed_images")
    def embed_images(req: EmbedImagesRequest):
        if not req.images_b64:
            return _error(400, "images_b64 must be a non-empty list")
        if len(req.images_b64) > config.max_batch:
            return _error(
                413, f"batch of {len(req.images_b64)} exceeds cap {config.max_batch}"
            )
        images = []
        for i, blob_b64 in enumerate(req.images_b64):
            try:
                images.append(decode_image(base64.b64decode(blob_b64, validate=True)))
            except (binascii.Error, OSError, ValueError) as exc:
                return _error(400, f"image {i} is undecodable: {exc}")
        vectors = encoder.embed_images(images)
        return {
            "embeddings": [[float(x) for x in row] for row in vectors],
            "dim": encoder.dim,
            "model": encoder.name,
            "truncated": [False] * len(images),
        }

    return app
