"""Run the embedding service under uvicorn."""

from __future__ import annotations

import argparse
import logging
import sys

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qframe-service", description=__doc__)
    parser.add_argument("--model", default="auto", help="encoder backend (default auto)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8756)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch", type=int, default=32)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO)
    config = ServiceConfig(
        model_name=args.model,
        host=args.host,
        port=args.port,
        device=args.device,
        max_batch=args.max_batch,
    )
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
