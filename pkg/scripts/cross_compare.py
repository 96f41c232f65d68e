"""Rank sweep of DEIM-FS, iterative DEIM-FS, FSTD and HOSVD on the toy tensors."""

import argparse

from deimfs.experiments import ExperimentConfig, run_cross_compare


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/cross_compare")
    ap.add_argument("--ranks", default="2-16", help="inclusive range lo-hi")
    ap.add_argument("--tensors", default="f1,f2:3,f2:5")
    ap.add_argument("--seeds", type=int, default=1)
    args = ap.parse_args()
    lo, hi = (int(x) for x in args.ranks.split("-"))
    cfg = ExperimentConfig("cross-compare", out_dir=args.out_dir, ranks=tuple(range(lo, hi + 1)),
                           tensors=tuple(args.tensors.split(",")), n_seeds=args.seeds)
    for name, path in run_cross_compare(cfg).items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
