"""Command-line entry point: ``trajanomaly <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
import time

from . import metrics as me
from . import pipeline as pl
from . import scoring as sc
from .diffcore import grad_check
from .graph import build_graph
from .simdata import SceneFormatError, ScenarioConfig, generate_scene
from .stgae import ModelParams, objective
from .train import CheckpointError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRADCHECK_TOLERANCE = 1e-4

log = logging.getLogger("trajanomaly")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--seed", type=int, help="single seed (default: every seed in the config)")
    common.add_argument("--out", help="output directory (dataset root for generate, runs root otherwise)")
    common.add_argument("--data", help="dataset root to read (default: data_root from the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="trajanomaly", description="Trajectory anomaly detection with a graph auto-encoder and KDE.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="simulate a dataset")
    g.add_argument("--agents", type=int, choices=(2, 3, 4), help="agents per test scene")
    g.add_argument("--force", action="store_true", help="overwrite a non-empty target directory")

    t = sub.add_parser("train", parents=[common], help="train the auto-encoder")
    t.add_argument("--method", choices=("kde", "stgae-mse", "stgae-biv"), default="kde",
                   help="stgae-mse trains with the MSE loss; the others share the likelihood model")

    f = sub.add_parser("fit-density", parents=[common], help="fit the latent KDE")
    f.add_argument("--kde-subsample", type=int, metavar="M", help="keep M stored latents")

    s = sub.add_parser("score", parents=[common], help="score the test split")
    s.add_argument("--method", choices=sc.METHODS, default="kde")

    e = sub.add_parser("eval", parents=[common], help="metrics from stored scores")
    e.add_argument("--method", choices=sc.METHODS, default="kde")

    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    gc.add_argument("--agents", type=int, default=2, choices=(2, 3, 4))

    sw = sub.add_parser("sweep-seglen", parents=[common], help="retrain and evaluate over segment lengths")
    sw.add_argument("--lengths", help="comma separated segment lengths (default: sweep_lengths)")
    sw.add_argument("--method", choices=sc.METHODS, action="append", help="repeatable; default: sweep_methods")
    return p


def _config(args) -> pl.RunConfig:
    cfg = pl.load_run_config(args.config)
    changes = {}
    if args.command != "generate" and args.out:
        changes["runs_root"] = args.out
    if args.data and args.command not in ("score", "eval"):
        # score and eval keep data_root for the models and read --data as the test set
        changes["data_root"] = args.data
    if getattr(args, "kde_subsample", None) is not None:
        changes["kde_subsample"] = args.kde_subsample
    if args.command == "generate" and args.agents is not None:
        changes["n_agents"] = args.agents
    return cfg.replace(**changes)


def _seeds(args, cfg: pl.RunConfig) -> tuple[int, ...]:
    return (args.seed,) if args.seed is not None else cfg.seeds


def gradcheck_report(seed: int = 0, n_agents: int = 2, length: int = 15) -> float:
    """Max relative error of the full likelihood objective on one simulated segment."""
    scene = generate_scene(ScenarioConfig(seed=seed, n_agents=n_agents, duration_frames=length))
    batch = build_graph(scene.positions)
    params = ModelParams.initialize(seed)
    return grad_check(lambda: objective(params, batch, "nll"), list(params), epsilon=1e-5)


def run(args, cfg: pl.RunConfig) -> int:
    cmd = args.command
    if cmd == "generate":
        if args.seed is not None:
            cfg = cfg.replace(data_seed=args.seed)
        root = pl.generate(cfg, force=args.force, out=args.out)
        print(f"wrote dataset to {root}")
    elif cmd == "train":
        loss = pl.model_kind(args.method)
        for seed in _seeds(args, cfg):
            _, path = pl.train_model(cfg, seed, loss)
            print(f"wrote {path}")
    elif cmd == "fit-density":
        for seed in _seeds(args, cfg):
            model, path = pl.fit_density(cfg, seed)
            print(f"wrote {path} (M={model.n_samples}, h={model.bandwidth:.6g})")
    elif cmd == "score":
        for seed in _seeds(args, cfg):
            series = pl.score(cfg, seed, args.method, args.data)
            print(f"scored {len(series)} scenes into {pl.score_dir(cfg, seed, args.method, args.data)}")
    elif cmd == "eval":
        reports, path = pl.evaluate(cfg, args.method, _seeds(args, cfg), args.data)
        summary = me.summarize(reports)
        for k, (m, s) in summary.items():
            print(f"{k:32s} {m:.4f} +- {s:.4f}")
        print(f"wrote {path}")
    elif cmd == "gradcheck":
        seed = 0 if args.seed is None else args.seed
        t0 = time.perf_counter()
        err = gradcheck_report(seed, args.agents)
        ok = err < GRADCHECK_TOLERANCE
        print(f"max relative error {err:.3e} ({'ok' if ok else 'FAIL'}, {time.perf_counter() - t0:.1f}s)")
        return EXIT_OK if ok else EXIT_NUMERIC
    elif cmd == "sweep-seglen":
        lengths = tuple(int(v) for v in args.lengths.split(",")) if args.lengths else None
        result, path = pl.sweep_segment_length(cfg, lengths, args.method, args.seed)
        for method, values in result.by_method().items():
            print(f"{method:10s} auroc range {max(values) - min(values):.4f}")
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return run(args, cfg)
    except (NumericalError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, FileExistsError, SceneFormatError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
