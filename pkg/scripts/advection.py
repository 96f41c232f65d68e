"""Advection sweeps over thresholds, ranks and time steps against one dense reference each."""

import argparse

from deimfs.experiments import ExperimentConfig, run_advection

SWEEPS = {
    "thresholds": dict(ranks=(6,), threshold_sets=((1e-3, 1e-2), (1e-5, 1e-4), (1e-7, 1e-6))),
    "ranks": dict(ranks=(6, 9, 11), threshold_sets=((1e-5, 1e-4),)),
    "dt": dict(ranks=(6,), threshold_sets=((1e-5, 1e-4),), dts=(4e-3, 2e-3, 1e-3)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/advection")
    ap.add_argument("--sweep", choices=sorted(SWEEPS), action="append")
    ap.add_argument("--n", type=int, default=33)
    ap.add_argument("--t-end", type=float, default=4.0)
    args = ap.parse_args()
    for sweep in args.sweep or sorted(SWEEPS):
        cfg = ExperimentConfig("advection", n=args.n, t_end=args.t_end, marginal_times=(0.0, args.t_end),
                               out_dir=f"{args.out_dir}/{sweep}", **SWEEPS[sweep])
        for name, path in run_advection(cfg).items():
            print(f"{sweep} {name}: {path}")


if __name__ == "__main__":
    main()
