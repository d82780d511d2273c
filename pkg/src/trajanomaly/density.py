"""Gaussian kernel density estimate over latent feature vectors."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

# h in {2^-4.5, 2^-4, ..., 2^5}
BANDWIDTH_GRID = tuple(2.0 ** (k / 2.0) for k in range(-9, 11))
LOG_DENSITY_FLOOR = -745.0
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True, eq=False)
class DensityModel:
    latents: np.ndarray  # (M, d)
    bandwidth: float

    @property
    def n_samples(self) -> int:
        return self.latents.shape[0]

    @property
    def dim(self) -> int:
        return self.latents.shape[1]


def fit(latents, bandwidth: float) -> DensityModel:
    """Store the samples; there is nothing else to learn."""
    Z = np.array(latents, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[0] == 0 or Z.shape[1] == 0:
        raise ValueError("need a non-empty (M, d) set of latent vectors")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("latent vectors must be finite")
    Z.setflags(write=False)
    return DensityModel(Z, float(bandwidth))


def _normaliser(model: DensityModel) -> float:
    d, h = model.dim, model.bandwidth
    return math.log(model.n_samples) + d * math.log(h) + 0.5 * d * math.log(2.0 * math.pi)


def log_density(model: DensityModel, z) -> float:
    """log p(z) = log[(1 / (M h^d)) sum_i K((z - z_i) / h)], standard Gaussian K, floored at -745."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.dim,):
        raise ValueError(f"query has shape {z.shape}, model dimension is {model.dim}")
    u = (z - model.latents) / model.bandwidth
    val = float(logsumexp(-0.5 * np.einsum("ij,ij->i", u, u))) - _normaliser(model)
    return max(val, LOG_DENSITY_FLOOR)


def log_density_many(model: DensityModel, Z) -> np.ndarray:
    """Vectorised ``log_density`` for a (Q, d) array of queries.

    Squared distances come from the |a|^2 + |b|^2 - 2ab expansion, so results
    agree with ``log_density`` to rounding (about 1e-12 absolute for latents of
    moderate norm), not bit for bit.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != model.dim:
        raise ValueError(f"queries have shape {Z.shape}, model dimension is {model.dim}")
    h2 = model.bandwidth ** 2
    ref = model.latents
    ref_sq = np.einsum("ij,ij->i", ref, ref)
    out = np.empty(Z.shape[0])
    step = max(1, _CHUNK_ELEMENTS // max(1, model.n_samples))
    for lo in range(0, Z.shape[0], step):
        q = Z[lo:lo + step]
        sq = np.einsum("ij,ij->i", q, q)[:, None] + ref_sq[None, :] - 2.0 * (q @ ref.T)
        np.maximum(sq, 0.0, out=sq)
        out[lo:lo + step] = logsumexp(sq * (-0.5 / h2), axis=1)
    out -= _normaliser(model)
    return np.maximum(out, LOG_DENSITY_FLOOR)


def _fold_scores(train: np.ndarray, held: np.ndarray, grid) -> np.ndarray:
    """Mean held-out log-density for each bandwidth; distances computed once."""
    diff_sq = (np.einsum("ij,ij->i", held, held)[:, None] + np.einsum("ij,ij->i", train, train)[None, :]
               - 2.0 * held @ train.T)
    np.maximum(diff_sq, 0.0, out=diff_sq)
    M, d = train.shape
    scores = []
    for h in grid:
        lp = logsumexp(diff_sq * (-0.5 / h ** 2), axis=1)
        lp -= math.log(M) + d * math.log(h) + 0.5 * d * math.log(2.0 * math.pi)
        scores.append(float(np.maximum(lp, LOG_DENSITY_FLOOR).mean()))
    return np.array(scores)


def cross_validation_scores(latents, grid=BANDWIDTH_GRID, n_folds: int = 5, seed: int = 0) -> np.ndarray:
    """Average held-out mean log-density per bandwidth over contiguous folds of a seeded shuffle."""
    Z = np.asarray(latents, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < n_folds:
        raise ValueError(f"bandwidth selection needs at least {n_folds} latent vectors")
    order = np.random.default_rng(seed).permutation(Z.shape[0])
    folds = np.array_split(order, n_folds)
    total = np.zeros(len(grid))
    for k in range(n_folds):
        held = Z[folds[k]]
        rest = Z[np.concatenate([folds[j] for j in range(n_folds) if j != k])]
        total += _fold_scores(rest, held, grid)
    return total / n_folds


def select_bandwidth(latents, grid=BANDWIDTH_GRID, n_folds: int = 5, seed: int = 0) -> float:
    """5-fold cross-validated log-likelihood bandwidth; ties go to the smaller h."""
    grid = tuple(float(h) for h in grid)
    if not grid:
        raise ValueError("empty bandwidth grid")
    scores = cross_validation_scores(latents, grid, n_folds, seed)
    best = max(scores)
    return min(h for h, s in zip(grid, scores) if s == best)


def subsample(latents, M: int, seed: int = 0, jitter: float = 0.1) -> np.ndarray:
    """Uniform draw without replacement, or with replacement plus Gaussian jitter when upsampling."""
    Z = np.asarray(latents, dtype=np.float64)
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    if M <= Z.shape[0]:
        return Z[rng.choice(Z.shape[0], size=M, replace=False)]
    picks = Z[rng.integers(0, Z.shape[0], size=M)]
    return picks + rng.normal(0.0, jitter, size=picks.shape)


# ------------------------------------------------------------------------- I/O

def save_density(model: DensityModel, path: str | os.PathLike) -> Path:
    """Text file: header ``M,d,h`` then one comma-separated vector per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"{model.n_samples},{model.dim},{model.bandwidth!r}\n")
        for row in model.latents:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def load_density(path: str | os.PathLike) -> DensityModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (run the 'fit-density' command first)")
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        if len(head) != 3:
            raise ValueError(f"{path}: line 1: expected header M,d,h")
        M, d, h = int(head[0]), int(head[1]), float(head[2])
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (M, d):
        raise ValueError(f"{path}: header says {M}x{d} but found {data.shape[0]}x{data.shape[1]}")
    return fit(data, h)
