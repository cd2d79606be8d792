"""Command-line interface.

Subcommands: ``operator-curve``, ``trace``, ``synth-bench``, ``restore`` and
``replay``. Each run writes its outputs plus a ``run.meta`` JSON file with
the complete effective configuration; ``extdiv replay DIR/run.meta``
re-executes it.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .errors import ExtDivError, ParamError
from .harness import (SyntheticSpec, default_grids, make_trial, nmse, run_benchmark,
                      write_bench_csv, write_trace_csv)
from .imaging import (BlurOperator, GrayImage, degrade, load_pgm, make_phantom, restore,
                      restore_tuned, save_pgm)
from .losses import PoissonModel, step_bound
from .shrinkage import (bregman_prox_l1_burg, bregman_prox_shifted_l1_bs, ext_div_closed_form,
                        firm, soft, validate_ext_div_params)
from .solver import SolverConfig, Variant, default_max_iter, solve

log = logging.getLogger("extdiv")

METHODS = [v.value for v in Variant]


# -- helpers -----------------------------------------------------------------


def _grid(text):
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like lo:hi:steps, got {text!r}")
    if steps < 2 or not hi > lo:
        raise argparse.ArgumentTypeError("grid needs hi > lo and at least 2 steps")
    return text


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _write_meta(out: Path, args: argparse.Namespace) -> None:
    meta = {k: v for k, v in vars(args).items() if k not in ("func", "meta")}
    meta["extdiv_version"] = __version__
    meta["backend"] = BACKEND
    with open(out / "run.meta", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v: float) -> str:
    return repr(float(v))


def _ext_params(args):
    return validate_ext_div_params(args.omega, args.eta1, args.a)


def _single_config(args, method: Variant, model: PoissonModel) -> SolverConfig:
    bound = step_bound(method.fidelity, model)
    ext = _ext_params(args) if method is Variant.PROPOSED else None
    budget = args.max_iter if args.max_iter is not None else default_max_iter(method)
    return SolverConfig(method, lam=args.lam_factor * bound, max_iter=budget, tol=args.tol,
                        l1_weight=args.eta, ext_div=ext, trace_every=args.trace_every or 1)


# -- subcommands ---------------------------------------------------------------


def cmd_operator_curve(args, out: Path) -> int:
    lo, hi, steps = args.grid.split(":")
    xs = np.linspace(float(lo), float(hi), int(steps))
    op = args.op
    if op in ("soft", "firm"):
        ys = soft(xs, args.gamma) if op == "soft" else firm(xs, args.tau, args.gamma)
    else:
        if xs[0] < 0:
            raise ParamError(f"{op} is defined for nonnegative inputs only; grid starts at {xs[0]}")
        pos = xs > 0
        ys = np.zeros_like(xs)  # all three operators tend to 0 at the origin
        if op == "ext-div":
            p = _ext_params(args)
            ys = ext_div_closed_form(xs, p)
        elif op == "bregman-prox-bs":
            ys[pos] = bregman_prox_shifted_l1_bs(xs[pos], args.eta, args.a)
        else:
            ys[pos] = bregman_prox_l1_burg(xs[pos], args.eta)
    with open(out / "curve.csv", "w") as fh:
        fh.write("x,y\n")
        for x, y in zip(xs, ys):
            fh.write(f"{_fmt(x)},{_fmt(y)}\n")
    print(f"wrote {len(xs)} samples of {op} to {out / 'curve.csv'}")
    return 0


def cmd_trace(args, out: Path) -> int:
    spec = SyntheticSpec(args.m, args.n, args.rho, args.k, args.seed, args.trial + 1, args.background)
    A, x_true, b = make_trial(spec, args.trial)
    model = PoissonModel(A, b, np.full(args.m, args.background))
    method = Variant(args.method)
    cfg = _single_config(args, method, model)
    if not args.trace_every:
        cfg.trace_every = max(1, int(cfg.max_iter) // 100_000)
    res = solve(cfg, model, ground_truth=x_true)
    write_trace_csv(res.trace, out / "trace.csv")
    print(f"method={method.value} iterations={res.iterations} converged={str(res.converged).lower()} "
          f"nmse={nmse(res.x, x_true):.6g} step={res.lam_used:.6g}")
    return 0


def cmd_synth_bench(args, out: Path) -> int:
    methods = [Variant(m) for m in args.methods.split(",")] if args.methods != "all" else list(Variant)
    grids = default_grids(args.grid)
    budgets = {v: args.max_iter for v in Variant if v is not Variant.FKL_L1}
    budgets[Variant.FKL_L1] = args.fkl_max_iter
    results = []
    for rho in args.rho_list:
        spec = SyntheticSpec(args.m, args.n, rho, args.k, args.seed, args.trials, args.background)
        results.extend(run_benchmark(spec, methods, grids, budgets, tol=args.tol))
    write_bench_csv(results, out / "bench.csv")
    print(f"{'rho':>6} {'method':>12} {'mean nmse':>10} {'s.e.':>8}")
    for rho in args.rho_list:
        for mth in methods:
            v = np.array([r.nmse for r in results if r.rho == rho and r.method is mth])
            se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else float("nan")
            print(f"{rho:>6g} {mth.value:>12} {v.mean():>10.4f} {se:>8.4f}")
    return 0


def cmd_restore(args, out: Path) -> int:
    if args.input:
        image = load_pgm(args.input)
    else:
        image = make_phantom(args.size)
    methods = list(Variant) if args.method == "all" else [Variant(args.method)]
    fkl_budget = args.fkl_max_iter
    budgets = {v: (fkl_budget if v is Variant.FKL_L1 else args.max_iter) for v in Variant}
    if args.tune:
        observed, results = restore_tuned(image, methods, args.seed, max_iter=budgets,
                                          background=args.background, boundary=args.boundary)
    else:
        blur = BlurOperator(image.width, image.height, boundary=args.boundary)
        observed = degrade(image, blur, np.random.default_rng(args.seed), args.background)
        model = PoissonModel(blur.as_operator(), observed, np.full(blur.n, args.background))
        cfgs = []
        for mth in methods:
            ns = argparse.Namespace(**vars(args))
            ns.max_iter = budgets[mth]
            ns.trace_every = 1 << 30
            cfgs.append((mth.value, _single_config(ns, mth, model)))
        _, results = restore(image, cfgs, args.seed, args.background, args.boundary, observed=observed)
    save_pgm(image, out / "truth.pgm")
    save_pgm(GrayImage.from_vector(observed, image.width, image.height), out / "observed.pgm")
    with open(out / "report.csv", "w") as fh:
        fh.write("method,psnr_db,iters,converged,lambda,l1_weight,omega,eta1,a\n")
        for r in results:
            name = "restored.pgm" if len(results) == 1 else f"restored-{r.method}.pgm"
            save_pgm(r.image, out / name)
            hp = r.hyperparams
            cells = [r.method, _fmt(r.psnr), str(r.iterations), str(r.converged).lower()]
            cells += [_fmt(hp[k]) if k in hp else "" for k in ("lambda", "l1_weight", "omega", "eta1", "a")]
            fh.write(",".join(cells) + "\n")
            print(f"{r.method:>12}  PSNR {r.psnr:7.2f} dB  iterations {r.iterations}")
    return 0


# -- parser ----------------------------------------------------------------------


def _solver_flags(p, *, method_choices, default_method):
    p.add_argument("--method", choices=method_choices, default=default_method)
    p.add_argument("--lam-factor", type=float, default=1.0,
                   help="step size as a multiple of the step bound")
    p.add_argument("--eta", type=float, default=0.01, help="l1 weight for fkl / rkl")
    p.add_argument("--omega", type=float, default=2.0)
    p.add_argument("--eta1", type=float, default=0.25)
    p.add_argument("--a", type=float, default=3.0)
    p.add_argument("--max-iter", type=int, default=None,
                   help="iteration budget (default 10000, or 5000000 for fkl)")
    p.add_argument("--tol", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extdiv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("operator-curve", help="sample a scalar shrinkage operator on a grid")
    p.add_argument("--op", required=True,
                   choices=["ext-div", "bregman-prox-bs", "bregman-prox-burg", "soft", "firm"])
    p.add_argument("--omega", type=float, default=2.0)
    p.add_argument("--eta1", type=float, default=0.3)
    p.add_argument("--a", type=float, default=3.0)
    p.add_argument("--eta", type=float, default=0.3, help="prox index for the Bregman proxes")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--grid", type=_grid, default="0:10:1000", help="lo:hi:steps")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_operator_curve)

    p = sub.add_parser("trace", help="convergence trace on one synthetic instance")
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--k", type=float, default=300.0, help="upper bound of nonzero magnitudes")
    p.add_argument("--background", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--trace-every", type=int, default=0,
                   help="record every N-th iteration (0: about 1e5 records at most)")
    _solver_flags(p, method_choices=METHODS, default_method="proposed")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("synth-bench", help="multi-trial synthetic benchmark with grid search")
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--rho-list", type=_float_list, default=[0.05, 0.1, 0.2])
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--k", type=float, default=300.0, help="upper bound of nonzero magnitudes")
    p.add_argument("--background", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", choices=["desk", "wide"], default="desk")
    p.add_argument("--methods", default="all", help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--fkl-max-iter", type=int, default=100_000)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_synth_bench)

    p = sub.add_parser("restore", help="deblur a Poisson-noisy image")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="binary PGM (P5, maxval 255)")
    src.add_argument("--phantom", action="store_true", help="use the built-in phantom (default)")
    p.add_argument("--size", type=int, default=64, help="phantom size")
    _solver_flags(p, method_choices=METHODS + ["all"], default_method="all")
    p.add_argument("--fkl-max-iter", type=int, default=5_000_000)
    p.add_argument("--tune", action="store_true", help="grid-search each method against the truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--background", type=float, default=0.0)
    p.add_argument("--boundary", choices=["reflect", "zero"], default="reflect")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_restore, trace_every=None)

    p = sub.add_parser("replay", help="re-run a previous invocation from its run.meta")
    p.add_argument("meta", help="path to run.meta")
    p.add_argument("--out", default=None, help="output directory (default: the recorded one)")
    p.set_defaults(func=None)
    return parser


def _replay_args(meta_path, out):
    meta = json.loads(Path(meta_path).read_text())
    meta.pop("extdiv_version", None)
    backend = meta.pop("backend", BACKEND)
    if backend != BACKEND:
        log.warning("run.meta was written with the %s backend, replaying with %s; "
                    "results agree to rounding but may not be byte-identical", backend, BACKEND)
    command = meta.get("command")
    if command not in _COMMANDS:
        raise ParamError(f"run.meta names an unknown subcommand {command!r}")
    ns = argparse.Namespace(**meta)
    ns.func = _COMMANDS[command]
    if out is not None:
        ns.out = out
    return ns


_COMMANDS = {
    "operator-curve": cmd_operator_curve,
    "trace": cmd_trace,
    "synth-bench": cmd_synth_bench,
    "restore": cmd_restore,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            args = _replay_args(args.meta, args.out)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_meta(out, args)
        return args.func(args, out)
    except ExtDivError as exc:
        print(f"extdiv: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
