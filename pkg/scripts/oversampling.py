"""Error of DEIM-FS on F1 at fixed target rank as the fiber count r' grows."""

import argparse
import csv
import sys

from deimfs.cross import CrossConfig, absolute_error, deim_fs, hosvd, unfolding_bases
from deimfs.models import toy_tensor_oracle


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rank", type=int, default=10)
    ap.add_argument("--max-extra", type=int, default=4)
    args = ap.parse_args()
    oracle = toy_tensor_oracle("f1")
    truth = oracle.dense()
    bases = unfolding_bases(truth, [args.rank + args.max_extra] * 3)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["fibers", "abs_error", "hosvd_abs_error"])
    e_h = absolute_error(hosvd(truth, args.rank, bases=bases), truth)
    for extra in range(args.max_extra + 1):
        res = deim_fs(oracle, bases, CrossConfig((args.rank,) * 3, extra), keep_fibers=False)
        w.writerow([args.rank + extra, repr(absolute_error(res.tucker, truth)), repr(e_h)])


if __name__ == "__main__":
    main()
