"""File formats: NPY cubes (Fortran order), CSV tables, JSON manifests."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def save_npy(path, array) -> Path:
    """Write float64 data as NPY v1.0 with ``fortran_order`` set."""
    path = Path(path)
    arr = np.asfortranarray(np.asarray(array, dtype="<f8"))
    with path.open("wb") as fh:
        np.lib.format.write_array(fh, arr, version=(1, 0), allow_pickle=False)
    return path


def load_npy(path) -> np.ndarray:
    return np.asarray(np.load(path, allow_pickle=False), dtype=np.float64)


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_history(path, iterations, history) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective"])
        for it, value in zip(iterations, history):
            writer.writerow([int(it), repr(float(value))])


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
