"""CSV/JSON writers for trajectories, tables and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from npmle.optimizers import TrajectoryRecord


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_trajectory(rec: TrajectoryRecord, path):
    rows = zip(rec.iters, rec.train_nll, rec.test_nll, rec.gap_hat)
    return write_csv(path, ["iter", "train_nll", "test_nll", "gap_hat"], rows)


def read_trajectory(path) -> TrajectoryRecord:
    header, rows = read_csv(path)
    if header != ["iter", "train_nll", "test_nll", "gap_hat"]:
        raise ValueError(f"{path}: not a trajectory CSV")
    rec = TrajectoryRecord()
    for r in rows:
        rec.append(int(r[0]), *(float(v) if v else None for v in r[1:]))
    return rec


def write_snapshots(rec: TrajectoryRecord, path):
    if not rec.snapshots:
        return None
    d = next(iter(rec.snapshots.values())).dim
    rows = []
    for it in sorted(rec.snapshots):
        rho = rec.snapshots[it]
        for j, (w, mu) in enumerate(zip(rho.weights, rho.locations)):
            rows.append([it, j, w, *mu])
    header = ["iter", "particle", "weight"] + [f"mu_{k + 1}" for k in range(d)]
    return write_csv(path, header, rows)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, config: dict, seeds, extra=None):
    """manifest.json: config, seeds, tool version, SHA-256 of every other file."""
    from npmle import BACKEND, __version__

    out_dir = Path(out_dir)
    files = {
        str(p.relative_to(out_dir)): sha256(p)
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }
    manifest = {"tool": "npmle", "version": __version__, "backend": BACKEND,
                "config": config, "seeds": list(seeds), "files": files}
    if extra:
        manifest.update(extra)
    return write_json(out_dir / "manifest.json", manifest)
