"""Seeded synthetic data: X = Y + Z with Y ~ rho* and Z ~ N(0, I_d).

The random stream is fixed so datasets can be regenerated anywhere from
``(kind, d, N, seed)``:

* bits: Philox4x64-10 with key = seed and counter starting at 0
  (``numpy.random.Philox(key=seed).random_raw``);
* uniforms: u = ((raw >> 12) + 0.5) * 2**-52, so 2**-53 <= u <= 1 - 2**-53;
* normals: Box-Muller on consecutive uniform pairs (u1, u2),
  z = sqrt(-2 ln u1) cos(2 pi u2), sqrt(-2 ln u1) sin(2 pi u2);
* draw order: N component uniforms (discrete kinds only), then N*d mixing
  normals (continuous kind only), then N*d noise normals, all row-major.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from npmle.mixture import GroundTruthKind, GroundTruthMixture, SampleSet

GENERATOR = "philox4x64-10(key=seed)+u52+box-muller"


class _Stream:
    def __init__(self, seed: int):
        self._bits = np.random.Philox(key=int(seed) % (1 << 128))

    def uniforms(self, n: int) -> np.ndarray:
        raw = self._bits.random_raw(n).astype(np.uint64)
        return ((raw >> np.uint64(12)).astype(float) + 0.5) * 2.0 ** -52

    def normals(self, n: int) -> np.ndarray:
        u = self.uniforms(2 * ((n + 1) // 2)).reshape(-1, 2)
        rad = np.sqrt(-2.0 * np.log(u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]).reshape(-1)[:n]


def sample(gt: GroundTruthMixture, d: int, N: int, seed: int) -> SampleSet:
    if N < 1 or d < 1:
        raise ValueError(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    stream = _Stream(seed)
    if gt.kind is GroundTruthKind.CONTINUOUS_GAUSSIAN:
        Y = stream.normals(N * d).reshape(N, d)
    else:
        atoms = gt.atom_matrix(d)
        cum = np.cumsum(gt.weights)
        cum[-1] = 1.0
        comp = np.searchsorted(cum, stream.uniforms(N), side="right")
        Y = atoms[comp]
    Z = stream.normals(N * d).reshape(N, d)
    return SampleSet(Y + Z)


def component_labels(gt: GroundTruthMixture, N: int, seed: int) -> np.ndarray:
    """Latent component index of each sample drawn by :func:`sample`."""
    if gt.kind is GroundTruthKind.CONTINUOUS_GAUSSIAN:
        raise ValueError("continuous ground truth has no components")
    cum = np.cumsum(gt.weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, _Stream(seed).uniforms(N), side="right")


def metadata(gt: GroundTruthMixture, d: int, N: int, seed: int) -> dict:
    return {"kind": gt.kind.value, "d": d, "N": N, "seed": int(seed), "generator": GENERATOR}


def write_dataset(out_dir, gt: GroundTruthMixture, d: int, N: int, seed: int,
                  stem: str = "samples") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    s = sample(gt, d, N, seed)
    csv_path = out_dir / f"{stem}.csv"
    meta_path = out_dir / f"{stem}.meta.json"
    s.to_csv(csv_path)
    meta_path.write_text(json.dumps(metadata(gt, d, N, seed), indent=2) + "\n", encoding="utf-8")
    return csv_path, meta_path
