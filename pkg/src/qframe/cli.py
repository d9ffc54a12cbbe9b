"""Command-line entry point.

Commands: select, embed, validate, bench, inspect. Every command takes
--config pointing at a TOML file whose keys mirror the flag names
(underscores instead of dashes); explicit flags win over file values.
Exit codes are stable API: 0 success, 1 configuration error, 2 IO
error, 3 provider error, 4 statistical rejection.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .core import SelectionConfig, validate_config
from .errors import ConfigError, ProviderError, QFrameError, StorageError
from .harness import (
    SyntheticCase,
    broken_uniform_sampler,
    run_synthetic_benchmark,
    run_validation_suite,
)
from .pipeline import run_embed, run_select
from .providers import QFEB_MAGIC, ProviderEndpoint, load_embedding_file

log = logging.getLogger("qframe")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_PROVIDER = 3
EXIT_STATISTICAL = 4

ENDPOINT_ENV = "QFRAME_ENDPOINT"
CACHE_ENV = "QFRAME_CACHE_DIR"

_CONFIG_KEYS = {
    "video",
    "query",
    "candidates",
    "tiers",
    "budget",
    "tau",
    "seed",
    "deterministic",
    "endpoint",
    "embeddings",
    "out",
    "report",
    "trials",
    "policy",
    "base_resolution",
}


class CliUsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage errors, not argparse's 2
        raise CliUsageError(message)


def _parse_tiers(value) -> tuple[int, int, int]:
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = str(value).split(",")
    if len(parts) != 3:
        raise CliUsageError(f"--tiers needs three comma-separated counts, got {value!r}")
    try:
        return tuple(int(p) for p in parts)
    except (TypeError, ValueError):
        raise CliUsageError(f"--tiers must be integers, got {value!r}") from None


def _parse_resolution(value) -> tuple[int, int]:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return int(value[0]), int(value[1])
    parts = str(value).lower().split("x")
    if len(parts) != 2:
        raise CliUsageError(f"--base-resolution must look like 448x448, got {value!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise CliUsageError(f"--base-resolution must be integers, got {value!r}") from None


def _parse_budget(value) -> Fraction:
    try:
        if isinstance(value, float):
            return Fraction(str(value))
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise CliUsageError(f"--budget must be a rational like 8 or 17/2, got {value!r}") from None


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise CliUsageError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise CliUsageError(f"config file {path} is not valid TOML: {exc}") from exc
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise CliUsageError(f"unknown config keys in {path}: {sorted(unknown)}")
    return data


def _pick(args: argparse.Namespace, filecfg: dict, key: str, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in filecfg:
        return filecfg[key]
    return default


def build_parser() -> _Parser:
    parser = _Parser(prog="qframe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML config file; flags override its values")

    p_select = sub.add_parser("select", help="select frames for a query and write outputs")
    add_common(p_select)
    p_select.add_argument("--video", help="input video path")
    p_select.add_argument("--query", help="text query")
    p_select.add_argument("--candidates", type=int, help="uniform candidate count (default 128)")
    p_select.add_argument("--tiers", help="high,mid,low counts, e.g. 4,8,32")
    p_select.add_argument("--budget", help="token budget in high-frame equivalents (default 8)")
    p_select.add_argument("--tau", type=float, help="softmax temperature (default 0.8)")
    p_select.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p_select.add_argument(
        "--deterministic", action="store_const", const=True, help="skip noise, pure top-K"
    )
    p_select.add_argument("--endpoint", help=f"embedding service URL (default ${ENDPOINT_ENV})")
    p_select.add_argument(
        "--embeddings",
        help="QFEB file with T frame rows, or T+1 rows with the query vector appended",
    )
    p_select.add_argument("--out", help="output directory (default qframe_out)")
    p_select.add_argument("--base-resolution", dest="base_resolution", help="high tier WxH")

    p_embed = sub.add_parser("embed", help="precompute candidate-frame embeddings to QFEB")
    add_common(p_embed)
    p_embed.add_argument("--video", help="input video path")
    p_embed.add_argument("--candidates", type=int, help="uniform candidate count (default 128)")
    p_embed.add_argument("--endpoint", help=f"embedding service URL (default ${ENDPOINT_ENV})")
    p_embed.add_argument("--out", help="output QFEB path (default <video>.qfeb)")

    p_validate = sub.add_parser("validate", help="run the statistical conformance suite")
    add_common(p_validate)
    p_validate.add_argument("--trials", type=int, help="draws per check (default 50000)")
    p_validate.add_argument("--seed", type=int, help="suite seed")
    p_validate.add_argument("--pi", help="extra fixture probabilities, e.g. 0.7,0.2,0.1")
    p_validate.add_argument("--k", type=int, help="tuple length for the extra fixture")
    p_validate.add_argument("--report", help="write the JSON report here")
    p_validate.add_argument(
        "--broken-sampler",
        dest="broken_sampler",
        action="store_const",
        const=True,
        help=argparse.SUPPRESS,
    )

    p_bench = sub.add_parser("bench", help="planted-relevance benchmark across policies")
    add_common(p_bench)
    p_bench.add_argument("--trials", type=int, help="benchmark trials (default 100)")
    p_bench.add_argument("--seed", type=int, help="benchmark seed (default 7)")
    p_bench.add_argument(
        "--policy",
        action="append",
        help="policy to run (repeatable): uniform, topk, gumbel; default all",
    )
    p_bench.add_argument("--candidates", type=int, help="candidate pool size (default 128)")
    p_bench.add_argument("--tiers", help="high,mid,low counts fixing recall@K (default 4,8,32)")
    p_bench.add_argument("--tau", type=float, help="gumbel policy temperature (default 0.8)")

    p_inspect = sub.add_parser("inspect", help="summarize a manifest.json or QFEB file")
    add_common(p_inspect)
    p_inspect.add_argument("path", help="file to inspect")

    return parser


def _endpoint_from(value: str | None, filecfg: dict) -> ProviderEndpoint | None:
    url = value or filecfg.get("endpoint") or os.environ.get(ENDPOINT_ENV)
    return ProviderEndpoint(base_url=url) if url else None


def _cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "qframe"))


def _cmd_select(args) -> int:
    filecfg = _load_config_file(args.config)
    video = _pick(args, filecfg, "video")
    query = _pick(args, filecfg, "query")
    if not video or not query:
        raise CliUsageError("select requires --video and --query")
    embeddings = _pick(args, filecfg, "embeddings")
    endpoint = _endpoint_from(args.endpoint, filecfg)
    if endpoint is None and not embeddings:
        raise CliUsageError(
            f"select requires --endpoint (or ${ENDPOINT_ENV}) or --embeddings"
        )
    cfg = SelectionConfig(
        candidates=int(_pick(args, filecfg, "candidates", 128)),
        tier_counts=_parse_tiers(_pick(args, filecfg, "tiers", "4,8,32")),
        budget=_parse_budget(_pick(args, filecfg, "budget", 8)),
        temperature=float(_pick(args, filecfg, "tau", 0.8)),
        seed=int(_pick(args, filecfg, "seed", 0)),
        base_resolution=_parse_resolution(_pick(args, filecfg, "base_resolution", "448x448")),
        deterministic_mode=bool(_pick(args, filecfg, "deterministic", False)),
    )
    validate_config(cfg)
    out_dir = _pick(args, filecfg, "out", "qframe_out")
    outcome = run_select(
        video,
        query,
        cfg,
        out_dir,
        endpoint=endpoint,
        embeddings_path=embeddings,
        cache_dir=_cache_dir() if endpoint is not None else None,
    )
    for w in outcome.manifest.warnings:
        log.warning("%s", w)
    print(outcome.manifest_path)
    return EXIT_OK


def _cmd_embed(args) -> int:
    filecfg = _load_config_file(args.config)
    video = _pick(args, filecfg, "video")
    if not video:
        raise CliUsageError("embed requires --video")
    endpoint = _endpoint_from(args.endpoint, filecfg)
    if endpoint is None:
        raise CliUsageError(f"embed requires --endpoint or ${ENDPOINT_ENV}")
    candidates = int(_pick(args, filecfg, "candidates", 128))
    out = _pick(args, filecfg, "out") or str(Path(video).with_suffix(".qfeb"))
    path = run_embed(video, candidates, endpoint, out, cache_dir=_cache_dir())
    print(path)
    return EXIT_OK


def _cmd_validate(args) -> int:
    filecfg = _load_config_file(args.config)
    trials = int(_pick(args, filecfg, "trials", 50000))
    seed = int(_pick(args, filecfg, "seed", 20240601))
    extra = []
    pi = _pick(args, filecfg, "pi")
    if pi is not None:
        k = _pick(args, filecfg, "k")
        if k is None:
            raise CliUsageError("--pi needs --k")
        extra.append((tuple(float(x) for x in str(pi).split(",")), int(k)))
    sampler = broken_uniform_sampler if getattr(args, "broken_sampler", False) else None
    records = run_validation_suite(trials=trials, seed=seed, extra_fixtures=extra, sampler=sampler)
    for rec in records:
        status = "pass" if rec.passed else "FAIL"
        print(
            f"{status}  {rec.test}  statistic={rec.statistic:.6g} "
            f"threshold={rec.threshold:.6g} trials={rec.trials}"
        )
    report_path = _pick(args, filecfg, "report")
    if report_path:
        report = {
            "config": {"trials": trials, "seed": seed},
            "records": [r.to_dict() for r in records],
        }
        Path(report_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        log.info("report written to %s", report_path)
    return EXIT_OK if all(r.passed for r in records) else EXIT_STATISTICAL


def _cmd_bench(args) -> int:
    filecfg = _load_config_file(args.config)
    trials = int(_pick(args, filecfg, "trials", 100))
    seed = int(_pick(args, filecfg, "seed", 7))
    candidates = int(_pick(args, filecfg, "candidates", 128))
    tiers = _parse_tiers(_pick(args, filecfg, "tiers", "4,8,32"))
    tau = float(_pick(args, filecfg, "tau", 0.8))
    policies = _pick(args, filecfg, "policy") or ["uniform", "topk", "gumbel"]
    if isinstance(policies, str):
        policies = [policies]
    rng_planted = np.random.default_rng(seed)
    planted = frozenset(int(i) for i in rng_planted.choice(candidates, size=5, replace=False))
    case = SyntheticCase(candidates=candidates, planted=planted, score_gap=2.0, noise_sigma=0.1)
    select_count = min(sum(tiers), candidates)
    results = run_synthetic_benchmark(
        case, policies, trials=trials, seed=seed, select_count=select_count, temperature=tau
    )
    print(f"planted={sorted(planted)} candidates={candidates} recall@{select_count} trials={trials}")
    print(f"{'policy':<10} {'mean_recall':>12} {'select_ms':>10}")
    for policy in policies:
        r = results[policy]
        print(f"{policy:<10} {r.mean_recall:>12.4f} {r.mean_select_ms:>10.3f}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    _load_config_file(args.config)  # uniform --config handling; nothing to pick
    path = Path(args.path)
    if not path.is_file():
        raise StorageError(f"{path} does not exist")
    head = path.open("rb").read(4)
    if head == QFEB_MAGIC:
        matrix = load_embedding_file(path)
        print(f"QFEB embedding file: {path}")
        print(f"  vectors: {matrix.count}")
        print(f"  dim:     {matrix.dim}")
        print(f"  bytes:   {path.stat().st_size}")
        return EXIT_OK
    try:
        data = json.loads(path.read_text())
    except (ValueError, OSError) as exc:
        raise StorageError(f"{path} is neither a QFEB file nor JSON: {exc}") from exc
    if "selections" not in data:
        raise StorageError(f"{path} is JSON but not a run manifest")
    print(f"manifest: {path}")
    print(f"  query:      {data.get('query')!r}")
    print(f"  video:      {data.get('video', {}).get('path')}")
    print(f"  candidates: {len(data.get('candidates', []))}")
    print(f"  selections: {len(data['selections'])}")
    print(f"  token cost: {data.get('realized_token_cost')}")
    for sel in data["selections"][:8]:
        print(
            f"    rank={sel['rank']:>3} frame={sel['frame_index']:>6} "
            f"tier={sel['tier']:<4} score={sel['score']:+.4f}"
        )
    if len(data["selections"]) > 8:
        print(f"    ... {len(data['selections']) - 8} more")
    return EXIT_OK


_COMMANDS = {
    "select": _cmd_select,
    "embed": _cmd_embed,
    "validate": _cmd_validate,
    "bench": _cmd_bench,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliUsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StorageError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except QFrameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
