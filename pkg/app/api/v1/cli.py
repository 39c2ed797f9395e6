"""
Command-line surface.

  run [CONFIG ...] [--suite acceptance|identities] [--out PATH] [--samples-dir DIR]
      [--seed N] [--threads N] [--dry-run]
  describe CONFIG

Exit codes: 0 success, 1 a suite check failed, 2 invalid configuration,
3 rejected (point budget exceeded or a tolerance missed), 130 interrupted
(partial manifest written).
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from api.services import acceptance_suite, experiment_harness, lattice_sampler, result_writer, theory_engine
from api.services.quadrature import QuadratureError
from core.config import VERSION, settings
from schemas.experiment import ExperimentConfig
from schemas.manifest import RunManifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_REJECTED = 3
EXIT_INTERRUPTED = 130


class ConfigFileError(ValueError):
    def __init__(self, path: Path, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = f"{path}" if line is None else f"{path}:{line}:{column}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
        self.column = column


# ── config files ──────────────────────────────────────────────────────────────

def _records(document) -> tuple[list, Optional[int]]:
    """Experiment records and the file-level seed, for the three accepted shapes."""
    if isinstance(document, list):
        return document, None
    if isinstance(document, dict) and "experiments" in document:
        return document["experiments"], document.get("seed")
    return [document], None


def parse_config_bytes(raw: bytes, path: Path = Path("<config>")) -> tuple[list[ExperimentConfig], Optional[int]]:
    try:
        document = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigFileError(path, e.msg, e.lineno, e.colno) from e
    except UnicodeDecodeError as e:
        raise ConfigFileError(path, f"not UTF-8: {e.reason}") from e
    records, seed = _records(document)
    if not isinstance(records, list) or not records:
        raise ConfigFileError(path, "expected one or more experiment records")
    configs = []
    for index, record in enumerate(records):
        try:
            configs.append(ExperimentConfig.model_validate(record))
        except ValidationError as e:
            raise ConfigFileError(path, f"experiment {index}: {e}") from e
    return configs, seed


def parse_config(path) -> list[ExperimentConfig]:
    """Validated experiments of one JSON file (an object, a list, or {"seed", "experiments"})."""
    path = Path(path)
    configs, _ = parse_config_bytes(path.read_bytes(), path)
    return configs


# ── commands ──────────────────────────────────────────────────────────────────

def _load(paths: Sequence[str], seed_override: Optional[int]) -> tuple[list[ExperimentConfig], str, int]:
    ordered = sorted(Path(p) for p in paths)
    raws = [p.read_bytes() for p in ordered]
    configs: list[ExperimentConfig] = []
    file_seed = None
    for path, raw in zip(ordered, raws):
        parsed, seed = parse_config_bytes(raw, path)
        configs.extend(parsed)
        file_seed = seed if file_seed is None else file_seed
    seed = seed_override if seed_override is not None else file_seed
    if seed is not None:
        configs = [c.model_copy(update={"master_seed": seed}) for c in configs]
    manifest_seed = seed if seed is not None else configs[0].master_seed
    return configs, result_writer.config_digest(raws), manifest_seed


def _dry_run(configs: list[ExperimentConfig]) -> None:
    for index, cfg in enumerate(configs):
        sites = lattice_sampler.check_budget(cfg.sample)
        tail = lattice_sampler.estimate_tail(cfg.sample)
        print(
            f"experiment {index} ({cfg.name or cfg.regime.value}): {sites} sites per replicate, "
            f"{sites * cfg.replicates} in total, estimated tail {tail:.3g}"
        )
        for r in cfg.scan_r or []:
            scan = cfg.sample.model_copy(update={"r": float(r)})
            sites = lattice_sampler.check_budget(scan)
            print(f"  scan r={r:g}: {sites} sites per replicate, estimated tail {lattice_sampler.estimate_tail(scan):.3g}")


def _write(args, manifest: RunManifest, results) -> None:
    result_writer.write_manifest(manifest, Path(args.out))
    if args.samples_dir:
        result_writer.write_experiment_samples(results, Path(args.samples_dir))


def _run_suite(args, threads: int, started: float) -> int:
    entries = acceptance_suite.suite_entries(args.suite)
    digest = result_writer.config_digest([json.dumps(entries, sort_keys=True).encode("utf-8")])
    checks, results = [], []
    complete = True
    try:
        for entry in entries:
            check, result = acceptance_suite.run_criterion(entry, args.seed, threads)
            checks.append(check)
            if result is not None:
                results.append(result)
    except KeyboardInterrupt:
        complete = False
    manifest = RunManifest(
        version=VERSION, config_digest=digest, seed=args.seed or 0,
        duration_seconds=time.monotonic() - started, complete=complete,
        experiments=results, checks=checks,
    )
    _write(args, manifest, results)
    if not complete:
        return EXIT_INTERRUPTED
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED


def cmd_run(args) -> int:
    started = time.monotonic()
    threads = args.threads or settings.THREADS
    if args.suite:
        return _run_suite(args, threads, started)
    if not args.configs:
        raise ConfigFileError(Path("."), "run needs at least one config file or --suite")

    configs, digest, seed = _load(args.configs, args.seed)
    if args.dry_run:
        _dry_run(configs)
        return EXIT_OK

    results = []
    complete = True
    try:
        for cfg in configs:
            results.append(experiment_harness.run_experiment(cfg, threads))
    except KeyboardInterrupt:
        complete = False
        logger.warning(f"[CLI] interrupted after {len(results)} of {len(configs)} experiment(s)")
    manifest = RunManifest(
        version=VERSION, config_digest=digest, seed=seed,
        duration_seconds=time.monotonic() - started, complete=complete, experiments=results,
    )
    _write(args, manifest, results)
    return EXIT_OK if complete else EXIT_INTERRUPTED


def cmd_describe(args) -> int:
    configs = parse_config(args.config)
    for index, cfg in enumerate(configs):
        predictions, target = theory_engine.regime_predictions(cfg)
        print(json.dumps(
            {
                "index": index,
                "config": cfg.model_dump(mode="json"),
                "predictions": [p.model_dump(mode="json") for p in predictions],
                "target": target,
            },
            indent=2,
        ))
    return EXIT_OK


# ── entry point ───────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperlattice",
        description="Simulate and verify linear statistics of perturbed lattices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run experiments or a built-in suite")
    run.add_argument("configs", nargs="*", help="experiment JSON files")
    run.add_argument("--out", default="results.json", help="manifest path (default results.json)")
    run.add_argument("--samples-dir", help="write normalized samples as CSV here")
    run.add_argument("--seed", type=int, help="master seed, overrides the config files")
    run.add_argument("--threads", type=int, help=f"worker threads (default HYPERLATTICE_THREADS={settings.THREADS})")
    run.add_argument("--suite", choices=["acceptance", "identities"], help="run a built-in suite")
    run.add_argument("--dry-run", action="store_true", help="print point budgets and tail bounds only")
    run.set_defaults(handler=cmd_run)

    describe = sub.add_parser("describe", help="print parsed configs and predictions")
    describe.add_argument("config", help="experiment JSON file")
    describe.set_defaults(handler=cmd_describe)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        logger.error("[CLI] --threads must be ≥ 1")
        return EXIT_INVALID
    try:
        return args.handler(args)
    except (lattice_sampler.PointBudgetError, lattice_sampler.TailToleranceError, QuadratureError) as e:
        logger.error(f"[CLI] rejected: {e}")
        return EXIT_REJECTED
    except (ValueError, OSError) as e:
        logger.error(f"[CLI] invalid configuration: {e}")
        return EXIT_INVALID
    except KeyboardInterrupt:
        logger.warning("[CLI] interrupted")
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
