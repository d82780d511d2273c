"""Train on two-agent scenes, score test sets with 2, 3 and 4 agents."""
from pathlib import Path

from _common import desk_config, ensure_dataset, ensure_model, parser
from trajanomaly import metrics as me
from trajanomaly import pipeline as pl
from trajanomaly import simdata as sd


def main():
    p = parser(__doc__)
    p.add_argument("--methods", default="kde,stgae-biv,cvm,lti")
    args = p.parse_args()
    cfg = desk_config(args, "desk")
    ensure_dataset(cfg)
    roots = {2: None}
    for n in (3, 4):
        root = Path(args.workdir) / f"data_n{n}"
        if not (root / "manifest.csv").exists():
            pl.generate(cfg.replace(n_agents=n), out=root)
        roots[n] = root
    print(f"{'method':10s} {'N=2':>8s} {'N=3':>8s} {'N=4':>8s} {'drop':>8s}")
    for method in args.methods.split(","):
        row = {}
        for n, root in roots.items():
            values = []
            for seed in cfg.seeds:
                kind = pl.model_kind(method)
                if kind is not None:
                    ensure_model(cfg, seed, kind)
                series = pl.score(cfg, seed, method, root)
                scenes = sd.read_split(root or cfg.data_root, "test")
                values.append(me.evaluate(series, scenes).metrics["auroc"])
            row[n] = sum(values) / len(values)
        print(f"{method:10s} {row[2]:8.4f} {row[3]:8.4f} {row[4]:8.4f} {row[2] - row[4]:8.4f}", flush=True)


if __name__ == "__main__":
    main()
