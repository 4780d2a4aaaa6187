"""Exact drifts of the primed chains against their p -> infinity limits.

    python3 demos/exact_drifts.py
"""

from fractions import Fraction

from peelperc.percolation import PrimedKind, prime_drift, prime_drift_limit

CASES = {
    PrimedKind.B: [Fraction(1, 2), Fraction(2, 3), Fraction(4, 5)],
    PrimedKind.A_map: [Fraction(2, 5), Fraction(1, 2), Fraction(3, 5)],
    PrimedKind.A_quad: [Fraction(1, 4), Fraction(1, 3), Fraction(2, 5)],
}


def main():
    print(f"{'chain':8s} {'q':>5s} {'limit':>9s}" + "".join(f"{'p=' + str(p):>11s}" for p in (10, 100, 1000)))
    for kind, qs in CASES.items():
        for q in qs:
            lim = float(prime_drift_limit(kind, q))
            vals = "".join(f"{float(prime_drift(kind, p, q)):11.5f}" for p in (10, 100, 1000))
            print(f"{kind.value:8s} {str(q):>5s} {lim:9.5f}{vals}")


if __name__ == "__main__":
    main()
