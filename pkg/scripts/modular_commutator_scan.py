"""Modular commutator of decohered chiral states versus system size.

Writes ``L,p,m,J,J_over_J0,clipped`` rows to stdout.
"""

import argparse
import math

from seplab import gaussian as ga


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, nargs="+", default=[12, 24, 36])
    ap.add_argument("--p", type=float, nargs="+", default=[0.0, 0.02, 0.04])
    ap.add_argument("--m", nargs="+", default=["uniform", "staggered", "random"])
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    print("L,p,m,J,J_over_J0,clipped")
    for p in args.p:
        for m in args.m if p > 0 else ["uniform"]:
            for L in args.L:
                res = ga.cda_modular_commutator(L, p, m, seed=args.seed)
                print(f"{L},{p},{m},{res.value:.10g},{res.value / (math.pi / 6):.6f},"
                      f"{res.clipped}", flush=True)


if __name__ == "__main__":
    main()
