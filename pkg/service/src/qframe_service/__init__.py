"""Reference embedding sidecar speaking the qframe wire protocol."""

from .app import create_app
from .config import ServiceConfig
from .encoders import PATTERN_MODEL_NAME, ClipEncoder, PatternEncoder, load_encoder

__version__ = "0.1.0"

__all__ = [
    "PATTERN_MODEL_NAME",
    "ClipEncoder",
    "PatternEncoder",
    "ServiceConfig",
    "create_app",
    "load_encoder",
]
