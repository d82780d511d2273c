"""Shared setup for the experiment scripts: a desk-scale run configuration."""
from __future__ import annotations

import argparse
from pathlib import Path

from trajanomaly import pipeline as pl

DESK = dict(n_train=60, n_abnormal=20, n_frames=40, epochs=250)


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--workdir", default="experiments", help="datasets and runs are written here")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--epochs", type=int, default=DESK["epochs"])
    return p


def desk_config(args, name: str) -> pl.RunConfig:
    root = Path(args.workdir)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    return pl.RunConfig(data_root=str(root / "data"), runs_root=str(root / "runs"), name=name, seeds=seeds,
                        **dict(DESK, epochs=args.epochs))


def ensure_dataset(cfg: pl.RunConfig) -> None:
    if not (Path(cfg.data_root) / "manifest.csv").exists():
        pl.generate(cfg)


def ensure_model(cfg: pl.RunConfig, seed: int, loss: str = "nll") -> None:
    if not pl.checkpoint_path(cfg, seed, loss).exists():
        pl.train_model(cfg, seed, loss)
    if loss == "nll" and not pl.density_path(cfg, seed).exists():
        pl.fit_density(cfg, seed)
