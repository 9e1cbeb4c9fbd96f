"""Mean test accuracy of every variant on the homophilic and heterophilic benchmark graphs."""
import argparse

from dfgnn.bench import BENCH, variant_accuracy
from dfgnn.model import VARIANTS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variants", default=",".join(VARIANTS))
    ap.add_argument("--homophily", default=f"{BENCH.homophilic},{BENCH.heterophilic}")
    args = ap.parse_args()
    print("homophily\tvariant\tmean\tstd\tseconds")
    for h in (float(x) for x in args.homophily.split(",")):
        for v in args.variants.split(","):
            mean, std, seconds = variant_accuracy(h, v)
            print(f"{h:g}\t{v}\t{mean:.4f}\t{std:.4f}\t{seconds:.1f}", flush=True)


if __name__ == "__main__":
    main()
