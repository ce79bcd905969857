"""Deterministic result files and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_timestamp() -> str:
    """UTC timestamp, pinned by ``SOURCE_DATE_EPOCH`` when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch is not None else int(time.time())
    return time.strftime("%Y%m%dT%H%M%SZ", time.gmtime(t))


def run_directory(out: Path, command: str, timestamp: str, seed: int) -> Path:
    path = Path(out) / command / f"{timestamp}-{seed}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(
    directory: Path, command: str, config_path, seed: int, timestamp: str, artifacts: Sequence[Path]
) -> Path:
    """``manifest.json`` listing the run inputs and a hash of every artifact."""
    return write_json(
        Path(directory) / "manifest.json",
        {
            "command": command,
            "config": None if config_path is None else str(config_path),
            "seed": seed,
            "output_directory": str(directory),
            "timestamp": timestamp,
            "artifacts": {Path(p).name: sha256(p) for p in sorted(artifacts)},
        },
    )
