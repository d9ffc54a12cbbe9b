"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ServiceConfig:
    """Runtime settings for the embedding sidecar.

    model_name selects the encoder backend: "pattern:v1" is the
    built-in deterministic encoder (no weights needed); "auto" tries a
    pretrained CLIP-family model and falls back to the pattern encoder
    when no weights are available; anything else is treated as a
    CLIP-family identifier and must load or the service refuses to
    start.
    """

    model_name: str = "auto"
    port: int = 8756
    host: str = "127.0.0.1"
    device: str = "cpu"
    max_batch: int = 32

    def __post_init__(self) -> None:
        if not (1 <= self.port <= 65535):
            raise ValueError(f"port must be in [1, 65535], got {self.port}")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
