"""Every detector on the desk-scale dataset: mean +- std of the headline metrics over seeds."""
import time

from _common import desk_config, ensure_dataset, ensure_model, parser
from trajanomaly import metrics as me
from trajanomaly import pipeline as pl
from trajanomaly.scoring import METHODS


def main():
    p = parser(__doc__)
    p.add_argument("--methods", default=",".join(METHODS))
    args = p.parse_args()
    cfg = desk_config(args, "desk")
    ensure_dataset(cfg)
    methods = args.methods.split(",")
    print(f"{'method':10s} " + " ".join(f"{k:>18s}" for k in me.HEADLINE))
    for method in methods:
        t0 = time.perf_counter()
        for seed in cfg.seeds:
            kind = pl.model_kind(method)
            if kind is not None:
                ensure_model(cfg, seed, kind)
            pl.score(cfg, seed, method)
        reports, _ = pl.evaluate(cfg, method)
        summary = me.summarize(reports)
        cells = " ".join(f"{summary[k][0]:10.4f}+-{summary[k][1]:.4f}" for k in me.HEADLINE)
        print(f"{method:10s} {cells}   ({time.perf_counter() - t0:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
