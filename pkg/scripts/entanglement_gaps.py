"""Entanglement-spectrum gaps of decohered chiral states and of their double states.

Writes ``kind,Lx,Ly,p,min_gap`` rows to stdout.
"""

import argparse

from seplab import doublestate as ds
from seplab import gaussian as ga


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Lx", type=int, default=60)
    ap.add_argument("--Ly", type=int, nargs="+", default=[16, 30])
    ap.add_argument("--p", type=float, nargs="+", default=[0.0, 0.02, 0.04, 0.05])
    args = ap.parse_args()
    print("kind,Lx,Ly,p,min_gap")
    for Ly in args.Ly:
        for p in args.p:
            # periodic y puts the k_y = 0 branch crossing of the pure state on the grid
            bc = "periodic" if p == 0 else "antiperiodic"
            gap = ga.cda_entanglement_spectrum(args.Lx, Ly, p, bc_y=bc).min_gap()
            print(f"cda,{args.Lx},{Ly},{p},{gap:.8g}", flush=True)
    for p in args.p:
        gap = ds.cylinder_gap(args.Lx, min(args.Ly), p)
        print(f"double,{args.Lx},{min(args.Ly)},{p},{gap:.8g}", flush=True)


if __name__ == "__main__":
    main()
