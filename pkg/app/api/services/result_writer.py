"""
Serialization of run results: the RunManifest as JSON and normalized samples as CSV.

JSON goes through pydantic, so non-finite floats (an infinite tail bound) are
written as null.
"""

import hashlib
import logging
import re
from pathlib import Path
from typing import Iterable

import numpy as np

from schemas.experiment import ExperimentResult
from schemas.manifest import RunManifest

logger = logging.getLogger(__name__)


def config_digest(raw_files: Iterable[bytes]) -> str:
    """SHA-256 of the given file contents, concatenated in order."""
    h = hashlib.sha256()
    for raw in raw_files:
        h.update(raw)
    return h.hexdigest()


def write_manifest(manifest: RunManifest, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"[CLI] wrote {len(manifest.experiments)} experiment(s) to {path}")


def read_manifest(path: Path) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "experiment"


def write_samples_csv(samples: np.ndarray, path: Path) -> None:
    """One value per line, shortest round-trip decimal, '.' separator, replicate order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="ascii", newline="\n") as fh:
        for x in np.asarray(samples, dtype=float).ravel():
            fh.write(f"{float(x)!r}\n")


def read_samples_csv(path: Path) -> np.ndarray:
    return np.array([float(line) for line in Path(path).read_text(encoding="ascii").splitlines() if line])


def write_experiment_samples(results: list[ExperimentResult], directory: Path) -> list[Path]:
    """Dump each result's normalized samples; results in histogram mode have none and are skipped."""
    written = []
    for index, result in enumerate(results):
        if result.samples is None:
            logger.warning(f"[CLI] experiment {index}: histogram mode, no samples to write")
            continue
        name = f"{index:03d}_{_slug(result.name or result.config.get('regime', 'experiment'))}.csv"
        path = Path(directory) / name
        write_samples_csv(result.samples, path)
        written.append(path)
    return written
