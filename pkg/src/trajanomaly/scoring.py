"""Per-agent and per-frame anomaly scores from overlapping segment evidence.

Each method maps a segment to a (T', N) array of per-(frame, agent) values,
higher meaning more anomalous. A scene's agent score is the mean over the
segments covering that (frame, agent); the frame score is the max over agents.
"""
from __future__ import annotations

import csv
import math
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .density import DensityModel, log_density_many
from .simdata import Scene
from .stgae import ModelParams, decode, encode, encode_without_interaction, to_bivariate
from .train import Segment, segment_scenes

METHODS = ("kde", "stgae-mse", "stgae-biv", "cvm", "lti")
N_RECONSTRUCTION_SAMPLES = 20

SegmentScorer = Callable[[Sequence[Segment]], list]


@dataclass
class ScoreSeries:
    scene_id: str
    agent: np.ndarray  # (T, N); NaN where no segment covers (t, i)

    @property
    def n_frames(self) -> int:
        return self.agent.shape[0]

    @property
    def covered(self) -> np.ndarray:
        """Frames with at least one scored agent."""
        return ~np.all(np.isnan(self.agent), axis=1)

    @property
    def frame(self) -> np.ndarray:
        """alpha_t: max over agents; NaN for uncovered frames."""
        out = np.full(self.n_frames, np.nan)
        ok = self.covered
        out[ok] = np.nanmax(self.agent[ok], axis=1)
        return out

    def normalized(self) -> np.ndarray:
        """Frame scores min-max scaled to [0, 1] within the scene (for plotting only)."""
        f = self.frame
        ok = ~np.isnan(f)
        if not ok.any():
            return f
        lo, hi = f[ok].min(), f[ok].max()
        return np.where(ok, (f - lo) / (hi - lo), np.nan) if hi > lo else np.where(ok, 0.0, np.nan)


def agent_frame_score(values) -> float:
    """Mean of the per-segment values of every segment covering one (t, i)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no segment covers this agent and frame")
    return float(values.mean())


def frame_score(agent_scores) -> float:
    agent_scores = np.asarray(agent_scores, dtype=np.float64)
    if agent_scores.size == 0:
        raise ValueError("need at least one agent")
    return float(agent_scores.max())


class ScoreAccumulator:
    """Running sum and count per (frame, agent) over overlapping segments."""

    def __init__(self, n_frames: int, n_agents: int):
        self.total = np.zeros((n_frames, n_agents))
        self.count = np.zeros((n_frames, n_agents), dtype=np.int64)

    def add(self, start: int, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        stop = start + values.shape[0]
        if start < 0 or stop > self.total.shape[0] or values.shape[1] != self.total.shape[1]:
            raise ValueError(f"segment [{start}, {stop}) x {values.shape[1]} outside score grid {self.total.shape}")
        if not np.all(np.isfinite(values)):
            raise FloatingPointError(f"non-finite segment score at start frame {start}")
        self.total[start:stop] += values
        self.count[start:stop] += 1

    def mean(self) -> np.ndarray:
        out = np.full(self.total.shape, np.nan)
        np.divide(self.total, self.count, out=out, where=self.count > 0)
        return out


# ------------------------------------------------------------- segment scorers

def cvm_score(trajectory) -> np.ndarray:
    """Squared error against constant-velocity extrapolation from the first two frames.

    Accepts (T, 2) or (T, N, 2); returns (T,) or (T, N).
    """
    x = np.asarray(trajectory, dtype=np.float64)
    if x.shape[0] < 3:
        raise ValueError(f"constant-velocity scoring needs >= 3 frames, got {x.shape[0]}")
    steps = np.arange(x.shape[0], dtype=np.float64).reshape((-1,) + (1,) * (x.ndim - 1))
    pred = x[0] + steps * (x[1] - x[0])
    return np.sum((x - pred) ** 2, axis=-1)


def lti_score(trajectory) -> np.ndarray:
    """Squared error against equidistant points on the chord from first to last frame."""
    x = np.asarray(trajectory, dtype=np.float64)
    T = x.shape[0]
    if T < 2:
        raise ValueError(f"linear interpolation needs >= 2 frames, got {T}")
    frac = (np.arange(T, dtype=np.float64) / (T - 1)).reshape((-1,) + (1,) * (x.ndim - 1))
    pred = x[0] + frac * (x[-1] - x[0])
    err = np.sum((x - pred) ** 2, axis=-1)
    err[0] = 0.0
    err[-1] = 0.0
    return err


def segment_latents(params: ModelParams, segment: Segment, interaction: bool = True) -> np.ndarray:
    if interaction:
        return encode(segment.batch, params).data
    return encode_without_interaction(segment.batch.V, params).data


def kde_segment_scores(params: ModelParams, density: DensityModel, segment: Segment,
                       interaction: bool = True) -> np.ndarray:
    """-log p(z) for every latent vector of the segment; the decoder is never run."""
    Z = segment_latents(params, segment, interaction)
    return -log_density_many(density, Z.reshape(-1, Z.shape[-1])).reshape(Z.shape[:-1])


def _segment_rng(seed: int, segment: Segment) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(segment.scene_id.encode()), segment.start_frame])


def reconstruction_score(params: ModelParams, segment: Segment, mode: str = "mse",
                         n_samples: int = N_RECONSTRUCTION_SAMPLES,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-(t, i) squared reconstruction error of the relative displacements.

    ``mse`` uses the predicted mean; ``biv`` averages over ``n_samples`` draws
    from the predicted bivariate Gaussian.
    """
    target = np.asarray(segment.batch.V)
    raw = decode(encode(segment.batch, params), params)
    mu, sigma, rho = to_bivariate(raw).numpy()
    if mode == "mse":
        return np.sum((mu - target) ** 2, axis=-1)
    if mode != "biv":
        raise ValueError(f"mode must be 'mse' or 'biv', got {mode!r}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    e = rng.standard_normal((n_samples,) + mu.shape)
    # correlated draw via the 2x2 Cholesky factor
    sx, sy = sigma[..., 0], sigma[..., 1]
    x = mu[..., 0] + sx * e[..., 0]
    y = mu[..., 1] + sy * (rho * e[..., 0] + np.sqrt(1.0 - rho * rho) * e[..., 1])
    err = (x - target[..., 0]) ** 2 + (y - target[..., 1]) ** 2
    return err.mean(axis=0)


def make_scorer(method: str, params: ModelParams | None = None, density: DensityModel | None = None,
                seed: int = 0, interaction: bool = True,
                n_samples: int = N_RECONSTRUCTION_SAMPLES) -> SegmentScorer:
    """Batch scorer: list of segments -> list of (T', N) arrays."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "cvm":
        return lambda segs: [cvm_score(s.window) for s in segs]
    if method == "lti":
        return lambda segs: [lti_score(s.window) for s in segs]
    if params is None:
        raise ValueError(f"method {method!r} needs a trained model")
    if method == "kde":
        if density is None:
            raise ValueError("method 'kde' needs a fitted density model")

        def kde(segs):
            # one density evaluation for all latents of the scene
            Zs = [segment_latents(params, s, interaction) for s in segs]
            if not Zs:
                return []
            flat = np.concatenate([Z.reshape(-1, Z.shape[-1]) for Z in Zs])
            scores = -log_density_many(density, flat)
            out, lo = [], 0
            for Z in Zs:
                n = Z.shape[0] * Z.shape[1]
                out.append(scores[lo:lo + n].reshape(Z.shape[:-1]))
                lo += n
            return out
        return kde
    mode = "mse" if method == "stgae-mse" else "biv"
    return lambda segs: [reconstruction_score(params, s, mode, n_samples, _segment_rng(seed, s)) for s in segs]


def score_scene(scene: Scene, scorer: SegmentScorer, length: int, stride: int = 1,
                interaction: bool = True) -> ScoreSeries:
    segments = segment_scenes([scene], length, stride, interaction)
    acc = ScoreAccumulator(scene.n_frames, scene.n_agents)
    for seg, values in zip(segments, scorer(segments)):
        acc.add(seg.start_frame, values)
    return ScoreSeries(scene.scene_id, acc.mean())


def score_scenes(scenes: Sequence[Scene], scorer: SegmentScorer, length: int, stride: int = 1,
                 interaction: bool = True) -> list[ScoreSeries]:
    return [score_scene(s, scorer, length, stride, interaction) for s in scenes]


# ------------------------------------------------------------------------- I/O

SCORE_FIELDS = ("kind", "frame", "agent_id", "alpha")


def write_scores(series: ScoreSeries, path: str | os.PathLike) -> Path:
    """Rows ``agent,t,i,alpha_t^i`` then ``frame,t,,alpha_t``; missing values are left empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def fmt(v):
        return "" if math.isnan(v) else repr(float(v))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_FIELDS)
        for t in range(series.n_frames):
            for i in range(series.agent.shape[1]):
                w.writerow(("agent", t, i, fmt(series.agent[t, i])))
        for t, v in enumerate(series.frame):
            w.writerow(("frame", t, "", fmt(v)))
    return path


def read_scores(path: str | os.PathLike, scene_id: str | None = None) -> ScoreSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (run the 'score' command first)")
    cells: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != SCORE_FIELDS:
            raise ValueError(f"{path}: line 1: expected header {','.join(SCORE_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            if row[0] == "agent":
                try:
                    cells[int(row[1]), int(row[2])] = float(row[3]) if row[3] else math.nan
                except ValueError:
                    raise ValueError(f"{path}: line {lineno}: bad agent row {row}") from None
            elif row[0] != "frame":
                raise ValueError(f"{path}: line {lineno}: unknown row kind {row[0]!r}")
    if not cells:
        raise ValueError(f"{path}: no agent scores")
    T = 1 + max(t for t, _ in cells)
    N = 1 + max(i for _, i in cells)
    agent = np.full((T, N), np.nan)
    for (t, i), v in cells.items():
        agent[t, i] = v
    return ScoreSeries(scene_id or path.stem, agent)
