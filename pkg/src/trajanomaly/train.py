"""Sliding-window segmentation, SGD training and checkpoints."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import diffcore as dc
from .graph import StGraphBatch, build_graph, identity_graph
from .simdata import Scene
from .stgae import ModelParams, objective

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "stgae-checkpoint"
CHECKPOINT_VERSION = 1


class NumericalError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    lr: float = 0.01
    lr_after_decay: float = 0.002
    decay_epoch: int = 150
    segment_length: int = 15
    stride: int = 1
    seed: int = 0
    loss: str = "nll"
    clip_norm: float = 10.0
    interaction: bool = True

    def __post_init__(self):
        if min(self.epochs, self.segment_length, self.stride) < 1:
            raise ValueError("epochs, segment_length and stride must be >= 1")
        if self.segment_length < 2:
            raise ValueError("segment_length must be >= 2")
        if self.lr <= 0 or self.lr_after_decay <= 0 or self.clip_norm <= 0:
            raise ValueError("learning rates and clip_norm must be positive")
        if self.loss not in ("nll", "mse"):
            raise ValueError(f"loss must be 'nll' or 'mse', got {self.loss!r}")

    def learning_rate(self, epoch: int) -> float:
        """Rate for a 1-indexed epoch; decays strictly after ``decay_epoch``."""
        return self.lr if epoch <= self.decay_epoch else self.lr_after_decay


@dataclass
class Segment:
    scene_id: str
    start_frame: int
    window: np.ndarray  # (T', N, 2) absolute positions
    batch: StGraphBatch

    @property
    def segment_id(self) -> str:
        return f"{self.scene_id}@{self.start_frame}"


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)


def n_segments(n_frames: int, length: int, stride: int = 1) -> int:
    return max(0, (n_frames - length) // stride + 1)


def segment_scenes(scenes: list[Scene], length: int, stride: int = 1, interaction: bool = True) -> list[Segment]:
    """All windows of ``length`` frames, ``stride`` apart, with their graphs."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    make = build_graph if interaction else identity_graph
    out = []
    for scene in scenes:
        count = n_segments(scene.n_frames, length, stride)
        if count == 0:
            warnings.warn(f"scene {scene.scene_id} has {scene.n_frames} frames, shorter than the "
                          f"segment length {length}; no segments", stacklevel=2)
            continue
        for k in range(count):
            start = k * stride
            window = scene.positions[start:start + length].copy()
            out.append(Segment(scene.scene_id, start, window, make(window)))
    return out


def _clip(grads: list[np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def train(segments: list[Segment], config: TrainConfig = TrainConfig(),
          params: ModelParams | None = None,
          on_epoch: Callable[[int, float], None] | None = None) -> tuple[ModelParams, TrainHistory]:
    """Plain SGD, one step per segment, segment order reshuffled every epoch."""
    if not segments:
        raise ValueError("training needs at least one segment")
    rng = np.random.default_rng(config.seed)
    params = ModelParams.initialize(config.seed) if params is None else params.copy()
    tensors = list(params)
    history = TrainHistory()
    for epoch in range(1, config.epochs + 1):
        lr = config.learning_rate(epoch)
        total = 0.0
        for k in rng.permutation(len(segments)):
            seg = segments[k]
            with dc.Tape() as tape:
                loss = objective(params, seg.batch, config.loss)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalError(f"non-finite loss {value} on segment {seg.segment_id} (epoch {epoch})")
            grads = dc.backward(tape, loss, tensors)
            g = [grads[t] for t in tensors]
            _clip(g, config.clip_norm)
            for t, gt in zip(tensors, g):
                t.data -= lr * gt
            total += value
        mean_loss = total / len(segments)
        history.loss.append(mean_loss)
        history.lr.append(lr)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
        if epoch == 1 or epoch % 25 == 0 or epoch == config.epochs:
            log.info("epoch %d lr %.4g loss %.5f", epoch, lr, mean_loss)
    return params, history


# ----------------------------------------------------------------- checkpoints

def save_checkpoint(params: ModelParams, config: TrainConfig, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(config),
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in params.arrays().items()},
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc))
    tmp.replace(path)
    return path


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, TrainConfig]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (run the 'train' command first)")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    try:
        config = TrainConfig(**doc["config"])
        blocks = doc["params"]
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from None
    expected = ModelParams.initialize(0).shapes()
    if set(blocks) != set(expected):
        raise CheckpointError(f"{path}: parameter names {sorted(blocks)} do not match the model")
    arrays = {}
    for name, shape in expected.items():
        block = blocks[name]
        if tuple(block["shape"]) != shape or len(block["data"]) != int(np.prod(shape)):
            raise CheckpointError(f"{path}: parameter {name} has shape {block['shape']}, expected {list(shape)}")
        arrays[name] = np.asarray(block["data"], dtype=np.float64).reshape(shape)
    return ModelParams.from_arrays(arrays), config
