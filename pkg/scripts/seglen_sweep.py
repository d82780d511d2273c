"""AUROC of the KDE detector and the linear baselines across segment lengths."""
from _common import desk_config, ensure_dataset, parser
from trajanomaly import pipeline as pl


def main():
    p = parser(__doc__)
    p.add_argument("--lengths", default="4,8,10,15,20,30")
    args = p.parse_args()
    cfg = desk_config(args, "desk")
    ensure_dataset(cfg)
    lengths = tuple(int(v) for v in args.lengths.split(","))
    result, path = pl.sweep_segment_length(cfg, lengths, ("kde", "cvm", "lti"), cfg.seeds[0])
    table = result.by_method()
    print("T'      " + " ".join(f"{m:>8s}" for m in table))
    for k, L in enumerate(lengths):
        print(f"{L:<7d} " + " ".join(f"{v[k]:8.4f}" for v in table.values()))
    print("range   " + " ".join(f"{result.spread(m):8.4f}" for m in table))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
