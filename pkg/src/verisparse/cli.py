"""Command-line front end.

Exit codes: 0 success, 2 verification failed, 3 input error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import inv_norm_lu, inv_norm_lu_modified, sigmin_normal_eq
from . import eft
from .generators import constructed_spectrum
from .interval import div_down, div_up, mul_up, sqrt_up
from .refine import LuBreakdown, dumps_report, solution_report, solve_with_certificate
from .shift import ShiftPolicy, estimate_sigma_min
from .sparse import MatrixMarketError, SparseMatrix, mm_read
from .verify import Certificate, verify_sigmin

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4

COMMANDS = ("verify", "solve", "bench", "info")


class InputError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Optional[str] = None
    rhs: Optional[str] = None
    precond: bool = False
    acc: bool = False
    theta_fraction: float = 0.5
    out: Optional[str] = None
    seed: int = 0
    method: str = "augmented"
    count: int = 5
    size: int = 100
    timing: bool = True

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if not 0.0 < self.theta_fraction < 1.0:
            raise InputError("--theta-fraction must lie in (0, 1)")
        if self.command in ("verify", "solve", "info") and not self.input:
            raise InputError(f"{self.command} needs --input")
        if self.method not in ("augmented", "lu"):
            raise InputError("--method must be 'augmented' or 'lu'")
        if self.count < 0 or self.size < 1:
            raise InputError("--count must be >= 0 and --size >= 1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="verisparse", description="Verified smallest singular value bounds and solves.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", help="Matrix Market file (bench: directory of .mtx files)")
    p.add_argument("--rhs", help="right-hand side: Matrix Market array or whitespace-separated text")
    p.add_argument("--precond", action="store_true", help="equilibrate before factorizing")
    p.add_argument("--acc", action="store_true", help="accurate residual bound")
    p.add_argument("--theta-fraction", type=float, default=0.5, help="shift as a fraction of the estimate")
    p.add_argument("--out", help="output file (default: stdout for reports)")
    p.add_argument("--seed", type=int, default=0, help="seed for generated bench matrices")
    p.add_argument("--method", default="augmented", help="refinement variant for solve: augmented or lu")
    p.add_argument("--count", type=int, default=5, help="bench: matrices to generate without --input")
    p.add_argument("--size", type=int, default=100, help="bench: dimension of generated matrices")
    p.add_argument("--no-timing", dest="timing", action="store_false",
                   help="bench: leave the elapsed column empty so reports are reproducible")
    return p


def _config(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    return RunConfig(command=ns.command, input=ns.input, rhs=ns.rhs, precond=ns.precond, acc=ns.acc,
                     theta_fraction=ns.theta_fraction, out=ns.out, seed=ns.seed, method=ns.method,
                     count=ns.count, size=ns.size, timing=ns.timing)


def _read_matrix(path: str) -> SparseMatrix:
    try:
        a = mm_read(path)
    except FileNotFoundError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except MatrixMarketError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if a.nrows != a.ncols:
        raise InputError(f"{path}: matrix is {a.nrows}x{a.ncols}, not square")
    if not np.all(np.isfinite(a.values)):
        raise InputError(f"{path}: non-finite entries")
    return a


def _read_rhs(path: str, n: int) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        if text.lstrip().startswith("%%MatrixMarket"):
            b = mm_read(io.StringIO(text)).to_dense().ravel(order="F")
        else:
            b = np.loadtxt(io.StringIO(text), dtype=np.float64, ndmin=1).ravel()
    except (ValueError, MatrixMarketError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if b.shape != (n,):
        raise InputError(f"{path}: right-hand side has {b.size} entries, matrix has {n} rows")
    if not np.all(np.isfinite(b)):
        raise InputError(f"{path}: non-finite entries")
    return b


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _policy(cfg: RunConfig) -> ShiftPolicy:
    return ShiftPolicy(initial_fraction=cfg.theta_fraction)


def _summary(cert: Certificate) -> str:
    lines = [f"status: {cert.status}", f"n: {cert.n}", f"attempts: {len(cert.attempts)}"]
    if cert.verified:
        lines += [f"theta: {cert.theta!r}", f"rho: {cert.rho!r}", f"delta: {cert.delta!r}",
                  f"sigma_min lower bound: {cert.delta_original!r}",
                  f"inverse 2-norm upper bound: {cert.inv_norm_bound_original!r}"]
    elif cert.message:
        lines.append(f"reason: {cert.message}")
    return "\n".join(lines) + "\n"


def cmd_verify(cfg: RunConfig) -> int:
    a = _read_matrix(cfg.input)
    cert = verify_sigmin(a, precond=cfg.precond, acc=cfg.acc, policy=_policy(cfg))
    if cfg.out:
        Path(cfg.out).write_text(cert.dumps())
    sys.stdout.write(_summary(cert))
    return EXIT_OK if cert.verified else EXIT_FAILED


def cmd_solve(cfg: RunConfig) -> int:
    a = _read_matrix(cfg.input)
    n = a.nrows
    b = _read_rhs(cfg.rhs, n) if cfg.rhs else a.to_scipy() @ np.ones(n)
    cert = verify_sigmin(a, precond=cfg.precond, acc=cfg.acc, policy=_policy(cfg))
    if not cert.verified:
        sys.stdout.write(_summary(cert))
        return EXIT_FAILED
    try:
        enc, ps = solve_with_certificate(a, b, cert, method=cfg.method)
    except LuBreakdown as exc:
        print(f"LU refinement broke down: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ValueError as exc:
        # a diverged refinement has no finite enclosure
        print(f"no enclosure: {exc}", file=sys.stderr)
        return EXIT_FAILED
    ref = {"fingerprint": cert.fingerprint, "delta": cert.delta, "delta_original": cert.delta_original,
           "theta": cert.theta, "rho": cert.rho}
    report = solution_report(enc, ps, ref)
    _emit(dumps_report(report) + "\n", cfg.out)
    if cfg.out:
        sys.stdout.write(f"converged: {ps.converged}\niterations: {ps.iterations}\n"
                         f"max rad/|mid|: {enc.max_rel_rad():.4e}\n")
    return EXIT_OK if ps.converged else EXIT_FAILED


# -- bench ----------------------------------------------------------------------

BENCH_FIELDS = ("matrix", "n", "nnz", "method", "success", "sigma_lower", "inv_norm_bound", "norm",
                "contraction", "fill_density", "iterations", "max_rel_rad", "elapsed")

BENCH_CONDS = (1e2, 1e4, 1e6, 1e8, 1e10)

BASELINE_METHODS = ("normal_eq", "lu", "lu_modified")
PROPOSED_VARIANTS = tuple((p, c) for p in (False, True) for c in (False, True))
REFINE_VARIANTS = ("augmented", "lu")


def bench_methods() -> list:
    names = list(BASELINE_METHODS)
    for precond, acc in PROPOSED_VARIANTS:
        tag = f"proposed_p{int(precond)}{int(acc)}"
        names += [tag] + [f"{tag}+refine_{v}" for v in REFINE_VARIANTS]
    return names


def _corpus(cfg: RunConfig):
    if cfg.input:
        d = Path(cfg.input)
        if not d.is_dir():
            raise InputError(f"{d} is not a directory")
        for f in sorted(d.glob("*.mtx")):
            try:
                yield f.stem, _read_matrix(str(f))
            except InputError as exc:
                yield f.stem, exc
        return
    rng = np.random.default_rng(cfg.seed)
    for k in range(cfg.count):
        cond = BENCH_CONDS[k % len(BENCH_CONDS)]
        a, _ = constructed_spectrum(cfg.size, cond, rng)
        yield f"gen{k:03d}_cond{cond:.0e}", a


def _median_ratio(history) -> Optional[float]:
    h = [v for v in history if v > 0.0 and np.isfinite(v)]
    if len(h) < 2:
        return None
    return float(np.median(np.array(h[1:]) / np.array(h[:-1])))


def bench_rows(name: str, a, timing: bool = True) -> list:
    """One row per method for a single matrix. A failing method, or an
    unreadable matrix, yields rows with ``success`` False."""
    if isinstance(a, Exception):
        print(f"{name}: {a}", file=sys.stderr)
        return [dict.fromkeys(BENCH_FIELDS, None) | {"matrix": name, "method": m, "success": False}
                for m in bench_methods()]
    n, nnz = a.nrows, a.nnz
    rows = []

    def run(method, fn):
        row = dict.fromkeys(BENCH_FIELDS, None)
        row.update(matrix=name, n=n, nnz=nnz, method=method, success=False)
        t0 = time.perf_counter()
        try:
            row.update(fn())
        except Exception as exc:  # a failing method must not stop the sweep
            print(f"{name}/{method}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if timing:
            row["elapsed"] = f"{time.perf_counter() - t0:.4f}"
        rows.append(row)

    def normal_eq():
        est = estimate_sigma_min(a)
        alpha = float(eft.mul_down(0.5 * est, 0.5 * est))
        r = sigmin_normal_eq(a, alpha)
        if r is None:
            return {}
        return {"success": True, "sigma_lower": r, "norm": "2",
                "inv_norm_bound": div_up(1.0, r) if r > 0.0 else None}

    def lu(fn):
        def go():
            # approximate inverses of both LU factors are stored densely
            out = {"fill_density": 2.0 * n * n / max(nnz, 1), "norm": "inf"}
            r = fn(a)
            if r is not None:
                sig = div_down(1.0, mul_up(sqrt_up(float(n)), r.bound))
                out.update(success=True, inv_norm_bound=r.bound, contraction=r.contraction, sigma_lower=sig)
            return out
        return go

    run("normal_eq", normal_eq)
    run("lu", lu(inv_norm_lu))
    run("lu_modified", lu(inv_norm_lu_modified))
    b = a.to_scipy() @ np.ones(n)
    for precond, acc in PROPOSED_VARIANTS:
        tag = f"proposed_p{int(precond)}{int(acc)}"
        holder = {}

        def prop(precond=precond, acc=acc):
            c = verify_sigmin(a, precond=precond, acc=acc)
            holder["cert"] = c
            out = {"success": c.verified, "iterations": len(c.attempts), "norm": "2"}
            if c.factors is not None:
                out["fill_density"] = c.factors.L.nnz / max(nnz, 1)
            if c.verified:
                out.update(sigma_lower=c.delta_original, inv_norm_bound=c.inv_norm_bound_original,
                           contraction=float(div_up(c.rho, c.theta)))
            return out

        run(tag, prop)
        cert = holder.get("cert")
        for variant in REFINE_VARIANTS:
            def ref(variant=variant):
                if cert is None or not cert.verified:
                    return {}
                enc, ps = solve_with_certificate(a, b, cert, method=variant)
                return {"success": ps.converged, "iterations": ps.iterations,
                        "contraction": _median_ratio(ps.residual_history), "max_rel_rad": enc.max_rel_rad()}
            run(f"{tag}+refine_{variant}", ref)
    return rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def cmd_bench(cfg: RunConfig) -> int:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for name, a in _corpus(cfg):
        for row in bench_rows(name, a, timing=cfg.timing):
            w.writerow({k: _cell(v) for k, v in row.items()})
    _emit(buf.getvalue(), cfg.out)
    return EXIT_OK


def cmd_info(cfg: RunConfig) -> int:
    a = _read_matrix(cfg.input)
    info = a.fingerprint()
    info["symmetric"] = bool(a == a.transpose())
    info["max_abs"] = float(np.max(np.abs(a.values))) if a.nnz else 0.0
    _emit(json.dumps(info, indent=1) + "\n", cfg.out)
    return EXIT_OK


_HANDLERS = {"verify": cmd_verify, "solve": cmd_solve, "bench": cmd_bench, "info": cmd_info}


def main(argv=None) -> int:
    try:
        cfg = _config(argv)
        return _HANDLERS[cfg.command](cfg)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    except InputError as exc:
        print(f"verisparse: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything unexpected is an internal error
        print(f"verisparse: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
