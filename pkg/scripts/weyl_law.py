"""Resonance counts against the leading Weyl term for several cutoffs."""
import argparse

import numpy as np

from morse_ruelle.critical import find_critical_points
from morse_ruelle.manifold import builtin
from morse_ruelle.spectrum import weyl_check


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="torus")
    ap.add_argument("--degree", type=int, default=0)
    ap.add_argument("--cutoffs", type=float, nargs="+", default=[50, 100, 200, 400])
    args = ap.parse_args()

    recs = find_critical_points(builtin(args.model))
    counts = []
    print(f"{'Lambda':>8} {'count':>10} {'leading':>12} {'rel_gap':>10}")
    for L in args.cutoffs:
        r = weyl_check(recs, args.degree, L)
        counts.append(r["count"])
        print(f"{L:8.1f} {r['count']:10d} {r['leading']:12.1f} {r['relative_gap']:10.2e}")
    slope = np.polyfit(np.log(args.cutoffs), np.log(counts), 1)[0]
    print(f"log-log slope: {slope:.4f}")


if __name__ == "__main__":
    main()
