"""Run the built-in corpus and print every measured constant.

Used to freeze the ceilings in ``czlemma.verify.Ceilings``:

    python scripts/measure_constants.py --cells1d 256 --cells2d 128
"""
import argparse
import time

from czlemma.corpus import corpus_cases, generate
from czlemma.czd import decompose
from czlemma.verify import verify

KEYS = ["C2", "C2_fd", "C3", "C4", "N", "K", "C5", "C5_key", "C_chi", "truncation_residual_bound",
        "neighbor_size_ratio_max"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cells1d", type=int, default=256)
    ap.add_argument("--cells2d", type=int, default=128)
    ap.add_argument("--cells3d", type=int, default=32)
    args = ap.parse_args()
    cells = {1: args.cells1d, 2: args.cells2d, 3: args.cells3d}
    worst = {}
    for case in corpus_cases():
        t0 = time.time()
        f = generate(case.name, cells[case.n], case.n)
        rep = verify(decompose(f, case.alpha, case.p))
        c = rep.constants
        failed = [k for k, v in rep.flags.items() if not v]
        print(f"{case.name:18s} n={case.n} p={case.p:g} a={case.alpha:7.3f} cubes={rep.meta['cube_count']:5d} "
              + " ".join(f"{k}={c[k]:.3g}" for k in KEYS)
              + f" t={time.time() - t0:.1f}s" + (f" FAIL {failed}" if failed else ""))
        for k in KEYS:
            worst[(case.n, k)] = max(worst.get((case.n, k), 0), c[k])
    for (n, k), v in sorted(worst.items()):
        print(f"n={n} max {k} = {v:.4g}")


if __name__ == "__main__":
    main()
