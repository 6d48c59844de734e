"""Command-line front end: search, score, analyze, export.

Exit codes: 0 success, 1 runtime/domain failure (budget violation,
degenerate architecture, non-finite inference), 2 usage/config failure.
Every subcommand is pure with respect to (inputs, seed): stdout, the best
architecture file, and the search log are byte-identical across repeated
runs. The run manifest additionally records wall-clock duration and is the
one deliberately non-reproducible output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Optional

from . import __version__
from .arch import (
    ArchitectureSpec,
    BlockType,
    InvalidArchitectureError,
    ParseError,
    cost_report,
    count_flops,
    parse,
    serialize,
    structural_hash,
    validate,
)
from .engine import NonFiniteActivationError, STAGE_NAMES
from .entropy import DegenerateArchitectureError, StageWeights, multiscale_entropy
from .evolution import SearchConfig, scoring_stream, search
from .rng import SeededRng

ENV_PREFIX = "MAXENT_NAS_"

OK, RUNTIME_ERROR, USAGE_ERROR = 0, 1, 2

PROFILES = {
    # full-scale defaults; a search at this setting takes many CPU-hours
    "full": {"resolution": 384, "population_size": 256, "iterations": 96000,
             "_initial": "initial"},
    # desk-scale profile used by the test suite: narrow seed net, small budget
    "toy": {"resolution": 64, "population_size": 32, "iterations": 2000,
            "_initial": "toy_initial"},
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def packaged_arch(name: str) -> str:
    return resources.files("maxent_nas.data").joinpath(f"{name}.json").read_text()


def _load_arch(path: str) -> ArchitectureSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read architecture file: {exc}", USAGE_ERROR) from exc
    try:
        return parse(text)
    except ParseError as exc:
        raise CliError(f"{path}: {exc}", USAGE_ERROR) from exc


def _parse_resolution(text: str) -> tuple[int, int]:
    try:
        if "x" in text:
            h, w = text.split("x", 1)
            res = (int(h), int(w))
        else:
            res = (int(text), int(text))
    except ValueError:
        raise CliError(f"bad resolution {text!r}, expected N or HxW", USAGE_ERROR) from None
    if res[0] <= 0 or res[1] <= 0:
        raise CliError(f"resolution must be positive, got {text!r}", USAGE_ERROR)
    return res


def _env_overrides() -> dict:
    """Pick up MAXENT_NAS_<FIELD> environment overrides (for CI)."""
    fields = {
        "SEED": ("seed", int),
        "RESOLUTION": ("resolution", int),
        "ITERATIONS": ("iterations", int),
        "POPULATION": ("population_size", int),
        "FLOPS_BUDGET": ("flops_budget", int),
        "PARAMS_BUDGET": ("params_budget", int),
        "MAX_DEPTH": ("max_depth", int),
        "ALPHA": ("alpha", str),
    }
    found = {}
    for env_key, (field, cast) in fields.items():
        raw = os.environ.get(ENV_PREFIX + env_key)
        if raw is not None:
            try:
                found[field] = cast(raw)
            except ValueError:
                raise CliError(f"bad value for {ENV_PREFIX}{env_key}: {raw!r}", USAGE_ERROR) from None
    return found


def _build_search_config(args: argparse.Namespace) -> tuple[SearchConfig, Path]:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", USAGE_ERROR) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.config}: line {exc.lineno}: {exc.msg}", USAGE_ERROR) from exc
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object", USAGE_ERROR)

    profile = raw.pop("profile", "full")
    if profile not in PROFILES:
        raise CliError(f"unknown profile {profile!r} (choose from {sorted(PROFILES)})", USAGE_ERROR)
    merged = dict(PROFILES[profile])
    default_initial = merged.pop("_initial")
    output_dir = raw.pop("output_dir", "search-output")
    merged.update(raw)
    merged.update(_env_overrides())

    # CLI flags take highest precedence
    for field in ("seed", "resolution", "iterations", "flops_budget",
                  "params_budget", "max_depth"):
        val = getattr(args, field, None)
        if val is not None:
            merged[field] = val
    if args.population is not None:
        merged["population_size"] = args.population
    if args.alpha is not None:
        merged["alpha"] = args.alpha
    if args.out_dir is not None:
        output_dir = args.out_dir

    initial = merged.pop("initial_arch", None)
    if initial is None:
        arch = parse(packaged_arch(default_initial))
    elif isinstance(initial, str):
        arch = _load_arch(initial)
    elif isinstance(initial, dict):
        try:
            arch = parse(json.dumps(initial))
        except ParseError as exc:
            raise CliError(f"config initial_arch: {exc}", USAGE_ERROR) from exc
    else:
        raise CliError("config initial_arch must be a path or an inline document", USAGE_ERROR)

    if "alpha" in merged:
        alpha = merged["alpha"]
        try:
            merged["alpha"] = (StageWeights.parse(alpha) if isinstance(alpha, str)
                               else StageWeights(tuple(alpha)))
        except (ValueError, TypeError) as exc:
            raise CliError(f"bad alpha: {exc}", USAGE_ERROR) from exc
    if "block_types" in merged:
        try:
            merged["block_types"] = tuple(BlockType(t) for t in merged["block_types"])
        except ValueError as exc:
            raise CliError(f"bad block_types: {exc}", USAGE_ERROR) from exc

    if "flops_budget" not in merged:
        if profile == "toy":
            res = merged.get("resolution", 64)
            merged["flops_budget"] = 2 * count_flops(arch, (res, res))
        else:
            raise CliError("config must set flops_budget", USAGE_ERROR)

    known = {f.name for f in SearchConfig.__dataclass_fields__.values()}
    unknown = set(merged) - known
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", USAGE_ERROR)
    try:
        config = SearchConfig(initial_arch=arch, **merged)
        config.check()
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}", USAGE_ERROR) from exc
    return config, Path(output_dir)


def cmd_search(args: argparse.Namespace) -> int:
    config, out_dir = _build_search_config(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    arch_path = out_dir / "best_arch.json"
    log_path = out_dir / "search_log.tsv"
    manifest_path = out_dir / "manifest.json"

    started = time.monotonic()
    try:
        with open(log_path, "w") as log:
            result = search(config, log=log, jobs=args.jobs)
    except (ValueError, NonFiniteActivationError) as exc:
        raise CliError(str(exc), RUNTIME_ERROR) from exc
    duration = time.monotonic() - started

    arch_path.write_text(serialize(result.best_arch))
    best_report = multiscale_entropy(
        result.best_arch, config.alpha, config.resolution,
        scoring_stream(config.seed, result.best_arch),
        gamma_mode=config.gamma_mode, repeats=config.repeats)
    manifest = {
        "engine_version": __version__,
        "seed": config.seed,
        "config": {
            "flops_budget": config.flops_budget,
            "params_budget": config.params_budget,
            "max_depth": config.max_depth,
            "iterations": config.iterations,
            "population_size": config.population_size,
            "alpha": list(config.alpha.alpha),
            "resolution": config.resolution,
            "block_types": [t.value for t in config.block_types],
            "seed_population": config.seed_population,
            "repeats": config.repeats,
            "gamma_mode": config.gamma_mode,
            "initial_arch_hash": structural_hash(config.initial_arch),
        },
        "jobs": args.jobs,
        "best_score": result.best_score,
        "best_arch_hash": structural_hash(result.best_arch),
        "best_entropy_report": best_report.as_dict(),
        "iterations_run": result.iterations_run,
        "duration_seconds": duration,
        "outputs": {
            "best_arch": str(arch_path),
            "search_log": str(log_path),
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"best_score\t{result.best_score!r}")
    print(f"best_arch\t{arch_path}")
    print(f"search_log\t{log_path}")
    print(f"manifest\t{manifest_path}")
    return OK


def cmd_score(args: argparse.Namespace) -> int:
    arch = _load_arch(args.arch)
    result = validate(arch)
    if not result:
        raise CliError(f"invalid architecture: {result.error}", RUNTIME_ERROR)
    try:
        alpha = StageWeights.parse(args.alpha)
    except ValueError as exc:
        raise CliError(str(exc), USAGE_ERROR) from exc
    if args.resolution % 32 != 0:
        raise CliError(f"resolution must be divisible by 32, got {args.resolution}", USAGE_ERROR)
    try:
        report = multiscale_entropy(
            arch, alpha, args.resolution, SeededRng(args.seed),
            repeats=args.repeats)
    except DegenerateArchitectureError as exc:
        raise CliError(str(exc), RUNTIME_ERROR) from exc
    except NonFiniteActivationError as exc:
        raise CliError(f"inference failed: {exc}", RUNTIME_ERROR) from exc
    print("stage\tentropy\tgamma_log_sum")
    for i, name in enumerate(STAGE_NAMES):
        print(f"{name}\t{report.stage_entropy[i]!r}\t{report.gamma_log_sums[i]!r}")
    print(f"score\t{report.score!r}")
    return OK


def cmd_analyze(args: argparse.Namespace) -> int:
    arch = _load_arch(args.arch)
    resolution = _parse_resolution(args.resolution)
    try:
        report = cost_report(arch, resolution)
    except InvalidArchitectureError as exc:
        raise CliError(str(exc), RUNTIME_ERROR) from exc
    print(f"resolution\t{resolution[0]}x{resolution[1]}")
    print(f"params\t{report.params}")
    print(f"flops\t{report.flops}")
    print(f"depth\t{report.depth}")
    print(f"layers\t{arch.total_layers}")
    return OK


def cmd_export(args: argparse.Namespace) -> int:
    if args.format != "json":
        raise CliError(f"unknown export format {args.format!r}", USAGE_ERROR)
    arch = _load_arch(args.arch)
    text = serialize(arch)
    if args.out is not None:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxent-nas",
        description="Training-free backbone search by multi-scale entropy maximization.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the evolutionary search")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--alpha", help="five comma-separated stage weights")
    p.add_argument("--flops-budget", dest="flops_budget", type=int)
    p.add_argument("--params-budget", dest="params_budget", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--jobs", type=int, default=1, help="parallel candidate evaluations per batch")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("score", help="score an architecture file")
    p.add_argument("arch")
    p.add_argument("--alpha", default="0,0,1,1,6")
    p.add_argument("--resolution", type=int, default=384)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("analyze", help="print FLOPs / params / depth")
    p.add_argument("arch")
    p.add_argument("--resolution", default="1333x800", help="N or HxW")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export", help="emit the canonical JSON consumed by model builders")
    p.add_argument("arch")
    p.add_argument("--format", default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
