"""Half-perimeter and volume growth of the peeling process.

Prints the mean of ln p_n and ln v_n at log-spaced n and the fitted
exponents (expected 2/3 and 4/3).

    python3 demos/boundary_growth.py [--chains 50] [--steps 100000]
"""

import argparse
import math

import numpy as np

from peelperc.peeling import chain_rng, simulate_peeling


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--chains", type=int, default=50)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    n = np.unique(np.round(np.logspace(2, math.log10(a.steps), 12)).astype(int))
    lp = np.zeros(len(n))
    lv = np.zeros(len(n))
    for c in range(a.chains):
        tr = simulate_peeling(1, a.steps, track_volume=True, rng=chain_rng(a.seed, c))
        lp += np.log(tr.p[n]) / a.chains
        lv += np.log(tr.v[n]) / a.chains
    print(f"{'n':>8s} {'E ln p_n':>10s} {'E ln v_n':>10s}")
    for row in zip(n, lp, lv):
        print(f"{row[0]:8d} {row[1]:10.4f} {row[2]:10.4f}")
    top = n >= a.steps // 100
    sp = np.polyfit(np.log(n[top]), lp[top], 1)[0]
    sv = np.polyfit(np.log(n[top]), lv[top], 1)[0]
    print(f"perimeter exponent {sp:.3f} (2/3), volume exponent {sv:.3f} (4/3)")


if __name__ == "__main__":
    main()
