"""KDE evaluation time against the number of stored latents."""
import argparse
import time

import numpy as np

from trajanomaly import density as de


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", default="1000,2000,5000,10000,20000,50000")
    p.add_argument("--queries", type=int, default=2000)
    p.add_argument("--trials", type=int, default=5)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    Q = rng.normal(size=(args.queries, 5))
    base = None
    print(f"{'M':>8s} {'median s':>10s} {'per query us':>13s} {'ratio':>7s}")
    for M in map(int, args.sizes.split(",")):
        model = de.fit(rng.normal(size=(M, 5)), 0.5)
        times = []
        for _ in range(args.trials):
            t0 = time.perf_counter()
            de.log_density_many(model, Q)
            times.append(time.perf_counter() - t0)
        t = float(np.median(times))
        base = base or t
        print(f"{M:8d} {t:10.4f} {1e6 * t / args.queries:13.2f} {t / base:7.2f}")


if __name__ == "__main__":
    main()
