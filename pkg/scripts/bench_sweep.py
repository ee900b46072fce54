"""Run the bench over several generated corpora and summarize per method.

    python3 scripts/bench_sweep.py --sizes 50 100 200 --count 5 --outdir bench_out
"""

from __future__ import annotations

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from verisparse.cli import main as cli_main


def summarize(paths):
    by = defaultdict(lambda: {"runs": 0, "ok": 0, "iters": [], "rel": []})
    for path in paths:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                s = by[row["method"]]
                s["runs"] += 1
                s["ok"] += row["success"] == "True"
                if row["iterations"]:
                    s["iters"].append(float(row["iterations"]))
                if row["max_rel_rad"]:
                    s["rel"].append(float(row["max_rel_rad"]))
    out = []
    for method, s in by.items():
        out.append({
            "method": method,
            "success_rate": s["ok"] / s["runs"],
            "median_iterations": float(np.median(s["iters"])) if s["iters"] else "",
            "max_rel_rad": max(s["rel"]) if s["rel"] else "",
        })
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", default="bench_out")
    ns = p.parse_args(argv)
    outdir = Path(ns.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for n in ns.sizes:
        path = outdir / f"bench_n{n}.csv"
        rc = cli_main(["bench", "--count", str(ns.count), "--size", str(n), "--seed", str(ns.seed),
                       "--out", str(path)])
        if rc != 0:
            return rc
        paths.append(path)
    rows = summarize(paths)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
