"""Accuracy against depth for GCN and DFGNN on the homophilic benchmark graph."""
import argparse
import sys

from dfgnn.bench import depth_sweep
from dfgnn.trainer import SWEEP_DEPTHS, sweep_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", default=",".join(map(str, SWEEP_DEPTHS)))
    ap.add_argument("--variants", default="gcn,full")
    args = ap.parse_args()
    rows, seconds = depth_sweep(tuple(int(d) for d in args.depths.split(",")),
                                tuple(args.variants.split(",")))
    sys.stdout.write(sweep_csv(rows))
    print(f"# {seconds:.0f} s", file=sys.stderr)


if __name__ == "__main__":
    main()
