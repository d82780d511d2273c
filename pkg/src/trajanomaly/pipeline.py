"""File-backed pipeline: generate -> train -> fit density -> score -> evaluate."""
from __future__ import annotations

import csv
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import density as de
from . import metrics as me
from . import scoring as sc
from . import simdata as sd
from .stgae import ModelParams
from .train import TrainConfig, load_checkpoint, save_checkpoint, segment_scenes, train

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "ckpt_final"
DENSITY_NAME = "density.csv"


def _parse_tuple(raw: str, convert) -> tuple:
    return tuple(convert(v) for v in raw.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    data_root: str = "data"
    runs_root: str = "runs"
    name: str = "default"
    # dataset
    data_seed: int = 0
    n_train: int = 80
    n_abnormal_per_class: int = 3
    n_abnormal: int | None = None
    n_frames: int = 150
    n_agents: int = 2
    # model / training
    epochs: int = 250
    lr: float = 0.01
    lr_after_decay: float = 0.002
    decay_epoch: int = 150
    segment_length: int = 15
    stride: int = 1
    clip_norm: float = 10.0
    # density
    bandwidth_grid: tuple[float, ...] = de.BANDWIDTH_GRID
    kde_subsample: int | None = None
    bandwidth_cv_max: int = 5000
    # evaluation
    seeds: tuple[int, ...] = (0,)
    sweep_lengths: tuple[int, ...] = (4, 8, 10, 15, 20, 30, 40)
    sweep_methods: tuple[str, ...] = ("kde", "cvm", "lti")

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.kde_subsample is not None and self.kde_subsample < 1:
            raise ValueError("kde_subsample must be >= 1")
        if self.bandwidth_cv_max < 5:
            raise ValueError("bandwidth_cv_max must be >= 5")
        for m in self.sweep_methods:
            if m not in sc.METHODS:
                raise ValueError(f"unknown sweep method {m!r}")
        self.train_config(self.seeds[0])  # validates the training fields

    def train_config(self, seed: int, loss: str = "nll", segment_length: int | None = None) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, lr_after_decay=self.lr_after_decay,
                           decay_epoch=self.decay_epoch, segment_length=segment_length or self.segment_length,
                           stride=self.stride, seed=seed, loss=loss, clip_norm=self.clip_norm)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})


_TUPLE_FIELDS = {"bandwidth_grid": float, "seeds": int, "sweep_lengths": int, "sweep_methods": str}


def _convert(name: str, raw: str):
    f = {fl.name: fl for fl in dataclasses.fields(RunConfig)}[name]
    if name in _TUPLE_FIELDS:
        return _parse_tuple(raw, _TUPLE_FIELDS[name])
    default = f.default
    if name in ("n_abnormal", "kde_subsample"):
        return None if raw.lower() in ("", "none") else int(raw)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    return type(default)(raw)


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    """``key = value`` lines; ``#`` starts a comment; sequences are comma or space separated."""
    known = {f.name for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}: line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{source}: line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ValueError(f"{source}: line {lineno}: bad value {raw!r} for {key}") from None
    return RunConfig(**values)


def load_run_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} not found")
    return parse_run_config(path.read_text(), str(path))


def dump_run_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------- layout

def model_kind(method: str) -> str | None:
    """Which trained model a scoring method needs: the NLL model, the MSE model, or none."""
    return {"kde": "nll", "stgae-biv": "nll", "stgae-mse": "mse"}.get(method)


def run_dir(cfg: RunConfig, seed: int, loss: str = "nll", segment_length: int | None = None) -> Path:
    tag = cfg.name
    if loss == "mse":
        tag += "-mse"
    if segment_length is not None and segment_length != cfg.segment_length:
        tag += f"-L{segment_length}"
    return Path(cfg.runs_root) / f"{tag}-s{seed}"


def checkpoint_path(cfg: RunConfig, seed: int, loss: str = "nll", segment_length: int | None = None) -> Path:
    return run_dir(cfg, seed, loss, segment_length) / CHECKPOINT_NAME


def density_path(cfg: RunConfig, seed: int, segment_length: int | None = None) -> Path:
    return run_dir(cfg, seed, "nll", segment_length) / DENSITY_NAME


def score_dir(cfg: RunConfig, seed: int, method: str, data_root: str | os.PathLike | None = None) -> Path:
    tag = method
    if data_root is not None and Path(data_root) != Path(cfg.data_root):
        tag += "@" + Path(data_root).name
    return run_dir(cfg, seed) / "scores" / tag


# ------------------------------------------------------------------- commands

def generate(cfg: RunConfig, force: bool = False, out: str | os.PathLike | None = None) -> Path:
    trn, tst = sd.generate_dataset(cfg.n_train, cfg.n_abnormal_per_class, cfg.data_seed, n_abnormal=cfg.n_abnormal,
                                   n_agents=cfg.n_agents, duration_frames=cfg.n_frames)
    return sd.write_dataset(out or cfg.data_root, trn, tst, force=force)


def train_model(cfg: RunConfig, seed: int, loss: str = "nll", segment_length: int | None = None,
                train_scenes: Sequence[sd.Scene] | None = None) -> tuple[ModelParams, Path]:
    L = segment_length or cfg.segment_length
    scenes = sd.read_split(cfg.data_root, "train") if train_scenes is None else train_scenes
    segments = segment_scenes(list(scenes), L, cfg.stride)
    tc = cfg.train_config(seed, loss, L)
    params, _ = train(segments, tc)
    return params, save_checkpoint(params, tc, checkpoint_path(cfg, seed, loss, segment_length))


def training_latents(params: ModelParams, scenes: Sequence[sd.Scene], length: int, stride: int = 1) -> np.ndarray:
    segs = segment_scenes(list(scenes), length, stride)
    Zs = [sc.segment_latents(params, s) for s in segs]
    return np.concatenate([Z.reshape(-1, Z.shape[-1]) for Z in Zs])


def fit_density(cfg: RunConfig, seed: int, segment_length: int | None = None,
                train_scenes: Sequence[sd.Scene] | None = None) -> tuple[de.DensityModel, Path]:
    """Latents of every training segment, optional subsample, CV bandwidth, saved model."""
    params, tc = load_checkpoint(checkpoint_path(cfg, seed, "nll", segment_length))
    scenes = sd.read_split(cfg.data_root, "train") if train_scenes is None else train_scenes
    Z = training_latents(params, scenes, tc.segment_length, tc.stride)
    if cfg.kde_subsample is not None:
        Z = de.subsample(Z, cfg.kde_subsample, seed)
    cv = Z if len(Z) <= cfg.bandwidth_cv_max else de.subsample(Z, cfg.bandwidth_cv_max, seed + 1)
    h = de.select_bandwidth(cv, cfg.bandwidth_grid, seed=seed)
    log.info("bandwidth %.4g from %d latents (%d stored)", h, len(cv), len(Z))
    model = de.fit(Z, h)
    return model, de.save_density(model, density_path(cfg, seed, segment_length))


def build_scorer(cfg: RunConfig, seed: int, method: str, segment_length: int | None = None) -> sc.SegmentScorer:
    kind = model_kind(method)
    if kind is None:
        return sc.make_scorer(method)
    params, _ = load_checkpoint(checkpoint_path(cfg, seed, kind, segment_length))
    dens = de.load_density(density_path(cfg, seed, segment_length)) if method == "kde" else None
    return sc.make_scorer(method, params, dens, seed=seed)


def score(cfg: RunConfig, seed: int, method: str, data_root: str | os.PathLike | None = None,
          segment_length: int | None = None) -> list[sc.ScoreSeries]:
    """Score every test scene and write one score file per scene."""
    scorer = build_scorer(cfg, seed, method, segment_length)
    scenes = sd.read_split(data_root or cfg.data_root, "test")
    series = sc.score_scenes(scenes, scorer, segment_length or cfg.segment_length, cfg.stride)
    out = score_dir(cfg, seed, method, data_root)
    for s in series:
        sc.write_scores(s, out / f"{s.scene_id}.csv")
    return series


def load_scores(cfg: RunConfig, seed: int, method: str, scenes: Sequence[sd.Scene],
                data_root: str | os.PathLike | None = None) -> list[sc.ScoreSeries]:
    d = score_dir(cfg, seed, method, data_root)
    return [sc.read_scores(d / f"{s.scene_id}.csv", s.scene_id) for s in scenes]


def evaluate(cfg: RunConfig, method: str, seeds: Sequence[int] | None = None,
             data_root: str | os.PathLike | None = None) -> tuple[list[me.Report], Path]:
    """Per-seed reports from stored scores, summary report, ROC points and normalized traces."""
    seeds = tuple(seeds or cfg.seeds)
    scenes = sd.read_split(data_root or cfg.data_root, "test")
    reports = []
    for seed in seeds:
        series = load_scores(cfg, seed, method, scenes, data_root)
        reports.append(me.evaluate(series, scenes))
        if seed == seeds[0]:
            base = score_dir(cfg, seed, method, data_root)
            me.write_roc(base.parent / f"roc_{base.name}.csv", me.frame_data(series, scenes))
            write_traces(base.parent / f"traces_{base.name}.csv", series, scenes)
    tag = score_dir(cfg, seeds[0], method, data_root).name
    path = me.write_report(Path(cfg.runs_root) / cfg.name / f"report_{tag}.csv", reports)
    return reports, path


def write_traces(path: Path, series: Sequence[sc.ScoreSeries], scenes: Sequence[sd.Scene]) -> Path:
    """Normalized per-frame scores with frame states, for score-over-time plots."""
    states = {s.scene_id: s.states for s in scenes}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("scene_id", "frame", "state", "alpha_normalized"))
        for s in series:
            for t, v in enumerate(s.normalized()):
                w.writerow((s.scene_id, t, states[s.scene_id][t], "" if np.isnan(v) else repr(float(v))))
    return path


@dataclass
class SweepRow:
    segment_length: int
    method: str
    auroc: float


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def by_method(self) -> dict[str, list[float]]:
        out: dict[str, list[float]] = {}
        for r in self.rows:
            out.setdefault(r.method, []).append(r.auroc)
        return out

    def spread(self, method: str) -> float:
        v = self.by_method()[method]
        return max(v) - min(v)


def sweep_segment_length(cfg: RunConfig, lengths: Sequence[int] | None = None,
                         methods: Sequence[str] | None = None, seed: int | None = None) -> tuple[SweepResult, Path]:
    """Retrain and re-evaluate every method at each segment length (single seed)."""
    lengths = tuple(lengths or cfg.sweep_lengths)
    methods = tuple(methods or cfg.sweep_methods)
    seed = cfg.seeds[0] if seed is None else seed
    train_scenes = sd.read_split(cfg.data_root, "train")
    test_scenes = sd.read_split(cfg.data_root, "test")
    result = SweepResult()
    for L in lengths:
        for kind in sorted({model_kind(m) for m in methods} - {None}):
            path = checkpoint_path(cfg, seed, kind, L)
            if not path.exists():
                train_model(cfg, seed, kind, L, train_scenes)
        if "kde" in methods:
            fit_density(cfg, seed, L, train_scenes)
        for m in methods:
            series = sc.score_scenes(test_scenes, build_scorer(cfg, seed, m, L), L, cfg.stride)
            value = me.evaluate(series, test_scenes).metrics["auroc"]
            log.info("segment length %d %s auroc %.4f", L, m, value)
            result.rows.append(SweepRow(L, m, value))
    path = Path(cfg.runs_root) / cfg.name / "sweep_seglen.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("segment_length", "method", "auroc"))
        for r in result.rows:
            w.writerow((r.segment_length, r.method, repr(r.auroc)))
    return result, path


def read_sweep(path: str | os.PathLike) -> SweepResult:
    with open(path, newline="") as fh:
        return SweepResult([SweepRow(int(r["segment_length"]), r["method"], float(r["auroc"]))
                            for r in csv.DictReader(fh)])
