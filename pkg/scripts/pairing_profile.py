"""Real-space pair amplitude along x and its power-law versus exponential fit."""

import argparse

from seplab import gaussian as ga


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=48)
    ap.add_argument("--p", type=float, nargs="+", default=[0.0, 0.01, 0.04, 0.1])
    args = ap.parse_args()
    model = ga.BdgModel(args.L, args.L)
    print("p,r,abs_amplitude")
    fits = []
    for p in args.p:
        g = ga.pair_amplitude(model, p)
        for r in range(1, args.L // 2 + 1):
            print(f"{p},{r},{abs(g[0, r]):.10g}")
        fits.append((p, ga.pairing_decay_fit(model, p)))
    for p, f in fits:
        print(f"# p={p}: {f.preferred}, AIC margin {f.margin:.1f}, xi {f.length:.4g}")


if __name__ == "__main__":
    main()
