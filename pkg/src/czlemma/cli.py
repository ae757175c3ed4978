"""Command-line front end.

    czd decompose --generator hat1d --alpha 2 --p 1 --cells 256 --out run/
    czd verify    --input f.csv --alpha 0.5 --p 2 --out run/
    czd sweep     --generator gauss-bump --alphas 2,3,4 --p 1 --out run/
    czd demo-counterexample --generator gauss-bump --alpha 2.5 --p 1 --cells 128 256 512 --out run/

Exit status: 0 when every flag passes, 2 when a flag fails, 1 on bad input.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import GENERATORS, generate
from .czd import counterexample_demo, decompose
from .errors import CZError
from .grid import ScalarField, VectorField, read_field_csv, write_field_csv
from .verify import Ceilings, dumps, sweep, verify, write_report

DEFAULT_CELLS = {1: 256, 2: 128, 3: 32}
DEMO_CELLS = (128, 256, 512)
DEMO_GROWTH = (1.6, 2.4)
DEMO_H_VARIATION = 0.15


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    generator: str | None = None
    dim: int | None = None
    cells: list[int] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    p: float = 1.0
    out: str = "."
    seed: int = 0
    ceilings: str | None = None

    def validate(self):
        if (self.input is None) == (self.generator is None):
            raise CZError("give exactly one of --input and --generator")
        if not self.alphas:
            raise CZError("no alpha given")
        if self.command != "sweep" and len(self.alphas) != 1:
            raise CZError(f"{self.command} takes a single --alpha")
        if self.command == "demo-counterexample" and self.input is not None:
            raise CZError("demo-counterexample needs a generator (it resamples the function)")
        if self.command != "demo-counterexample" and len(self.cells) > 1:
            raise CZError(f"{self.command} takes a single --cells value")


def _load_ceilings(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CZError(f"cannot read ceilings {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise CZError(f"ceilings file {path!r} must hold a JSON object")
    Ceilings.from_json(data)  # reject unknown names before any work
    return data


def _field(cfg: RunConfig, cells: int | None = None) -> tuple[ScalarField, dict]:
    if cfg.input is not None:
        f = read_field_csv(cfg.input)
        if not isinstance(f, ScalarField):
            raise CZError("input must be a scalar field")
        return f, {"input": cfg.input}
    gen = GENERATORS.get(cfg.generator)
    n = cfg.dim or (gen.default_dim if gen else 1)
    cells = cells or (cfg.cells[0] if cfg.cells else DEFAULT_CELLS[n])
    f = generate(cfg.generator, cells, n)
    return f, {"generator": cfg.generator, "cells": cells, "n": n}


def write_table_csv(path, header: list[str], rows: list[list]):
    """Plain CSV with a header row; floats carry 17 significant digits."""
    def fmt(v):
        if isinstance(v, (bool, np.bool_)):
            return str(bool(v)).lower()
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table_csv(path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CZError(f"empty table {path}")
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


def _bad_summary_rows(czd) -> list[list]:
    grid = czd.grid
    rows = []
    for i, cube in enumerate(czd.w.cubes):
        b = czd.bad[i]
        rows.append([i, cube.level, *cube.index, cube.side(grid), czd.means[i],
                     float(np.abs(b).max()), float(np.abs(b).sum()) * grid.cell_volume])
    return rows


def _decompose(cfg: RunConfig, overrides: dict, out: Path, write_fields: bool) -> int:
    f, source = _field(cfg)
    alpha = cfg.alphas[0]
    czd = decompose(f, alpha, cfg.p)
    ceilings = Ceilings.from_json(overrides, f.grid.n)
    report = verify(czd, ceilings, seed=cfg.seed, source=source)
    write_report(out / "report.json", report)
    if write_fields:
        write_field_csv(out / "g.csv", czd.g)
        write_field_csv(out / "h.csv", czd.h_renorm)
        axes = [f"index{k}" for k in range(f.grid.n)]
        write_table_csv(out / "b_summary.csv",
                        ["cube", "level", *axes, "side", "mean", "sup_abs_b", "l1_b"],
                        _bad_summary_rows(czd))
    return 0 if report.passed else 2


def _sweep(cfg: RunConfig, overrides: dict, out: Path) -> int:
    f, source = _field(cfg)
    ceilings = Ceilings.from_json(overrides, f.grid.n)
    reports, summary = sweep(f, cfg.alphas, cfg.p, ceilings, seed=cfg.seed, source=source)
    write_report(out / "reports.json", reports)
    with open(out / "sweep_summary.json", "w") as fh:
        fh.write(dumps(summary))
    rows = [[r.meta["alpha"], r.constants["C2"], r.constants["C3"], r.constants["C4"],
             r.constants["N"], r.constants["sum_Q"]] for r in reports]
    write_table_csv(out / "sweep.csv", ["alpha", "C2", "C3", "C4", "N", "sum_Q"], rows)
    ok = all(r.passed for r in reports) and summary["sum_Q_nonincreasing"] and summary["C2_ratio_within_ceiling"]
    return 0 if ok else 2


def _demo(cfg: RunConfig, out: Path) -> int:
    cells = cfg.cells or list(DEMO_CELLS)
    runs = []
    for c in cells:
        f, _ = _field(cfg, c)
        runs.append(decompose(f, cfg.alphas[0], cfg.p))
    demo = counterexample_demo(runs)
    rows = [[r.cells, r.h_grid, r.sum_chi_grad_sup, r.scaled, r.h_renorm_sup] for r in demo["rows"]]
    write_table_csv(out / "counterexample.csv",
                    ["cells", "h_grid", "grad_indicator_sup", "grad_indicator_sup_times_h", "h_renorm_sup"],
                    rows)
    hs = [r.h_renorm_sup for r in demo["rows"]]
    variation = (max(hs) - min(hs)) / max(hs) if max(hs) > 0 else 0.0
    lo, hi = DEMO_GROWTH
    flags = {
        "indicator_growth": all(lo <= g <= hi for g in demo["indicator_growth"]),
        "h_renorm_bounded": variation < DEMO_H_VARIATION,
    }
    doc = {
        "meta": {"generator": cfg.generator, "alpha": cfg.alphas[0], "p": cfg.p, "cells": cells},
        "rows": [{"cells": r.cells, "h_grid": r.h_grid, "grad_indicator_sup": r.sum_chi_grad_sup,
                  "h_renorm_sup": r.h_renorm_sup} for r in demo["rows"]],
        "indicator_growth": demo["indicator_growth"],
        "h_renorm_ratio": demo["h_renorm_ratio"],
        "h_renorm_variation": variation,
        "flags": flags,
    }
    with open(out / "counterexample.json", "w") as fh:
        fh.write(dumps(doc))
    return 0 if all(flags.values()) else 2


def run(cfg: RunConfig) -> int:
    cfg.validate()
    overrides = _load_ceilings(cfg.ceilings)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.command == "decompose":
        return _decompose(cfg, overrides, out, write_fields=True)
    if cfg.command == "verify":
        return _decompose(cfg, overrides, out, write_fields=False)
    if cfg.command == "sweep":
        return _sweep(cfg, overrides, out)
    if cfg.command == "demo-counterexample":
        return _demo(cfg, out)
    raise CZError(f"unknown command {cfg.command!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are input errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="czd", description="Calderon-Zygmund decomposition of gradients on a grid.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("decompose", "verify", "sweep", "demo-counterexample"):
        sp = sub.add_parser(name)
        sp.add_argument("--input", help="scalar field CSV")
        sp.add_argument("--generator", help=f"built-in function: {', '.join(GENERATORS)}")
        sp.add_argument("--dim", type=int, help="dimension for generators (default: the generator's)")
        sp.add_argument("--cells", type=int, nargs="+", default=[],
                        help="cells per axis (several values for demo-counterexample)")
        if name == "sweep":
            sp.add_argument("--alphas", type=_floats, required=True, help="ascending, comma separated")
        else:
            sp.add_argument("--alpha", type=float, required=True)
        sp.add_argument("--p", type=float, default=1.0)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed of the random truncation ordering")
        sp.add_argument("--ceilings", help="JSON file overriding the default ceilings")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    alphas = args.alphas if args.command == "sweep" else [args.alpha]
    cfg = RunConfig(args.command, args.input, args.generator, args.dim, args.cells, alphas,
                    args.p, args.out, args.seed, args.ceilings)
    try:
        return run(cfg)
    except (CZError, OSError) as exc:
        print(f"czd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
