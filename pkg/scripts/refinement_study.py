"""Refinement stability of the measured constants and the gradient-identity residual.

For every corpus case the decomposition is rebuilt on successively doubled
grids and the relative change of each constant is printed.

    python3 scripts/refinement_study.py --dims 1 2
"""
import argparse

from czlemma.corpus import corpus_cases, generate
from czlemma.czd import decompose
from czlemma.verify import verify

KEYS = ["C2", "C3", "C4", "N", "K", "C5", "C5_key", "C_chi", "truncation_residual_bound",
        "weak_type_ratio"]
GRIDS = {1: (128, 256, 512), 2: (128, 256), 3: (32, 64)}


def rel_change(a: float, b: float) -> float:
    """Change relative to the coarser grid's value."""
    if a == b:
        return 0.0
    return abs(b - a) / abs(a) if a else float("inf")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--threshold", type=float, default=0.25)
    args = ap.parse_args()
    for case in corpus_cases(dims=tuple(args.dims)):
        reps = []
        for cells in GRIDS[case.n]:
            f = generate(case.name, cells, case.n)
            reps.append(verify(decompose(f, case.alpha, case.p), test_functions=[]))
        line = []
        for k in KEYS:
            vals = [r.constants[k] for r in reps]
            worst = max(rel_change(a, b) for a, b in zip(vals, vals[1:]))
            mark = "*" if worst >= args.threshold else ""
            line.append(f"{k}={'/'.join(f'{v:.3g}' for v in vals)}{mark}")
        gi = [r.residuals["gradient_identity"]["away_from_boundary"] for r in reps]
        line.append("gi=" + "/".join(f"{v:.2e}" for v in gi))
        print(f"{case.name:18s} n={case.n} p={case.p:g} a={case.alpha:7.3f} " + " ".join(line), flush=True)


if __name__ == "__main__":
    main()
