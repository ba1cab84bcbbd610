"""Command-line front end.

Exit codes: 0 success, 1 negative verdict, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .approxident import constant_CP, default_test_function, gaussian, mollified_limit_check, surface_chart, surface_integral
from .configsearch import PointSet, SearchCapError, c_epsilon_measure, search_configurations
from .fractal import (CantorParams, ball_condition_constant, decay_exponent_fit, fourier_transform,
                      gen_radial_product, gen_random_cantor, mollify_split)
from .functions import BallIndicator, BoxIndicator, smooth_bump
from .linsys import EnumerationCapError, check_nondegenerate, check_reduced_nondegenerate
from .multiform import lambda_direct, lambda_fourier

AGREEMENT_TOL = 0.05
EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class StepError(Exception):
    def __init__(self, step: str, cause: BaseException):
        super().__init__(f"pipeline step '{step}' failed: {cause}")
        self.step = step


def _emit(obj, out) -> None:
    text = io.dumps(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_arg(value: str):
    """A JSON literal, or the path of a JSON file."""
    text = value.strip()
    if text[:1] in "[{" or text[:1].isdigit() or text[:1] == "-":
        return json.loads(text)
    return io.read_json(text)


def bundled_config(name: str) -> Path:
    ref = resources.files("configcount") / "configs" / f"{name}.json"
    with resources.as_file(ref) as path:
        return Path(path)


# ---------------------------------------------------------------------------
# shared pieces


def _generate(spec: dict, seed: int):
    params = CantorParams(1 if spec.get("mode") == "radial-product" else int(spec["n"]),
                          int(spec["M"]), int(spec["T"]), int(spec["stages"]), seed,
                          spec.get("mode", "independent-uniform"))
    N = int(spec.get("N", params.resolution))
    if params.mode == "radial-product":
        return gen_radial_product(params, int(spec["n"]), N)
    return gen_random_cantor(params, N)


def _functions(spec, system, mu1=None) -> list:
    """A single spec (used for every slot) or a list of k specs."""
    specs = spec if isinstance(spec, list) else [spec] * system.k
    if len(specs) != system.k:
        raise UsageError(f"need 1 or k={system.k} function specs, got {len(specs)}")
    out = []
    for s in specs:
        if s == "mu1":
            if mu1 is None:
                raise UsageError("'mu1' needs a mollified measure")
            out.append(mu1)
            continue
        kind = s.get("type")
        if kind == "box":
            out.append(BoxIndicator(tuple(s["lo"]), tuple(s["hi"])))
        elif kind == "ball":
            out.append(BallIndicator(tuple(s["center"]), s["radius"]))
        elif kind == "bump":
            out.append(smooth_bump(system.n, int(s.get("N", 256)), float(s.get("lo", 0.1)), float(s.get("hi", 0.9))))
        elif kind == "grid-function":
            out.append(io.load_grid_function(s["path"]))
        elif kind == "mu1":
            split = mollify_split(io.load_measure(s["measure"]), int(s["N_moll"]))
            out.append(split.mu1)
        else:
            raise UsageError(f"unknown function type {kind!r}")
    return out


def _lambda_pair(system, funcs, method: str, grid: int, R: float, Q: int, samples: int, seed: int) -> dict:
    out = {}
    direct = fourier = None
    if method in ("direct", "both"):
        kind = "grid" if system.m <= 4 else "mc"
        direct = lambda_direct(system, funcs, grid, method=kind, samples=samples, seed=seed)
        out["direct"] = direct.to_dict()
    if method in ("fourier", "both"):
        fourier = lambda_fourier(system, funcs, R, Q, seed=seed, samples=samples)
        out["fourier"] = fourier.to_dict()
    if direct is not None and fourier is not None:
        scale = max(abs(direct.value), 1e-300)
        rel = abs(fourier.value - direct.value) / scale if direct.value != 0 else (
            0.0 if fourier.value == 0 else math.inf)
        out["relative_difference"] = rel if math.isfinite(rel) else "inf"
        out["agreement"] = bool(rel <= AGREEMENT_TOL and not fourier.diverged)
    return out


def _density_bound(split, C: float, alpha: float) -> float:
    n = split.measure.n
    return 2 ** n * C * split.phi_sup * split.N_moll ** (n - alpha)


def _mollify_summary(split, alpha: float | None) -> dict:
    out = {"N_moll": split.N_moll, "phi_sup": split.phi_sup, "mass": split.mass(),
           "max_density": float(split.mu1.values.max())}
    if alpha is not None:
        C = ball_condition_constant(split.measure, alpha)
        out.update(alpha=alpha, ball_constant=C, density_bound=_density_bound(split, C, alpha))
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_nondegen(args) -> int:
    system = io.load_system(args.system)
    report = check_nondegenerate(system, args.tol, threads=args.threads)
    out = report.to_dict()
    if system.B is not None and system.in_main_regime and system.m == system.n * math.ceil((system.k + 1) / 2):
        out["reduced_passed"] = check_reduced_nondegenerate(system, args.tol)
    _emit(out, args.out)
    return EXIT_OK if report.passed else EXIT_NEGATIVE


def cmd_gen_measure(args) -> int:
    spec = {"n": args.dim, "M": args.M, "T": args.T, "stages": args.stages, "mode": args.mode}
    if args.N:
        spec["N"] = args.N
    measure = _generate(spec, args.seed)
    if not args.out:
        raise UsageError("gen-measure needs --out")
    io.save_measure(measure, args.out, args.format, meta={**spec, "seed": args.seed})
    return EXIT_OK


def cmd_fourier(args) -> int:
    measure = io.load_measure(args.measure)
    Xi = args.Xi if args.Xi is not None else measure.N // 2
    sample = fourier_transform(measure, Xi, args.step)
    if not args.out:
        raise UsageError("fourier needs --out")
    io.save_fourier_csv(sample, args.out)
    return EXIT_OK


def cmd_decay_fit(args) -> int:
    fit = decay_exponent_fit(io.load_fourier_csv(args.sample), tuple(args.window))
    _emit({"beta_hat": fit.beta_hat, "C_hat": fit.C_hat, "slope": fit.slope, "window": list(fit.window),
           "annuli": [list(a) for a in fit.annuli]}, args.out)
    return EXIT_OK


def cmd_mollify(args) -> int:
    split = mollify_split(io.load_measure(args.measure), args.N_moll)
    if not args.out:
        raise UsageError("mollify needs --out (a directory)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_grid_function(split.mu1, out / "mu1.grid")
    io.save_fourier_csv(split.mu2_hat, out / "mu2.csv")
    io.write_json(_mollify_summary(split, args.alpha), out / "mollify.json")
    return EXIT_OK


def cmd_lambda(args) -> int:
    system = io.load_system(args.system)
    funcs = _functions(_json_arg(args.functions), system)
    out = _lambda_pair(system, funcs, args.method, args.grid, args.trunc_R, args.quad_Q, args.samples, args.seed)
    out["seed"] = args.seed
    _emit(out, args.out)
    diverged = "divergent" in out.get("fourier", {}).get("flags", [])
    return EXIT_NEGATIVE if diverged or out.get("agreement") is False else EXIT_OK


def cmd_search(args) -> int:
    data = io.read_json(args.system)
    system = io.system_from_dict(data)
    exclusions = io.load_exclusions(data)
    E = io.load_pointset(args.points, args.tol)
    hits = search_configurations(system, E, exclusions, args.y_grid, args.threshold, threads=args.threads)
    if args.out:
        io.save_hits_csv(hits, args.out, system.n, system.m - system.n, len(exclusions))
    else:
        sys.stdout.write(f"{len(hits)} hits\n")
    return EXIT_OK if hits else EXIT_NEGATIVE


def cmd_cepsilon(args) -> int:
    system = io.load_system(args.system)
    res = c_epsilon_measure(system, _json_arg(args.v), args.eps, args.samples, args.seed)
    out = res.to_dict()
    out["passed"] = bool(res.estimate >= res.analytic_lower_bound - 3 * res.std_error)
    _emit(out, args.out)
    return EXIT_OK if out["passed"] else EXIT_NEGATIVE


def cmd_surface_limit(args) -> int:
    if args.system:
        P = io.load_system(args.system).stacked_transpose()
    elif args.matrix:
        P = np.array(_json_arg(args.matrix), dtype=float)
    else:
        raise UsageError("appendix-a needs --matrix or --system")
    chart = surface_chart(P, args.tol)
    F = gaussian if args.test_function == "gaussian" else default_test_function
    checks = mollified_limit_check(chart, F, args.eps, Q=args.quad_Q)
    out = {"C_P": constant_CP(chart), "surface_integral": surface_integral(chart, F, Q=args.quad_Q),
           "checks": [{"eps": c.eps, "value": c.value, "target": c.target, "rel_err": c.rel_err} for c in checks]}
    out["converging"] = bool(checks[-1].rel_err <= checks[0].rel_err)
    _emit(out, args.out)
    return EXIT_OK if out["converging"] else EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# pipeline


PIPELINE_STEPS = ("gen-measure", "fourier", "decay-fit", "mollify", "lambda", "search")


def run_pipeline(config: dict, out_dir, seed: int | None = None, threads: int = 1) -> dict:
    """Run the six steps, writing artefacts and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(config.get("seed", 0)) if seed is None else int(seed)
    steps = []

    def record(name, params, files, results):
        steps.append({"step": name, "params": params,
                      "outputs": {f: io.sha256_file(out / f) for f in files}, "results": results})

    def run(name, fn):
        try:
            return fn()
        except Exception as exc:  # abort naming the step
            raise StepError(name, exc) from exc

    system = run("system", lambda: io.system_from_dict(config["system"]))

    def gen():
        if "measure_file" in config:
            path = Path(config["measure_file"])
            measure = io.load_measure(path)
            params = {"measure_file": path.name}
        else:
            params = dict(config["generator"])
            measure = _generate(params, seed)
        io.save_measure(measure, out / "measure.bin", "f64-le")
        record("gen-measure", {**params, "seed": seed}, ["measure.bin"],
               {"N": measure.N, "n": measure.n, "support_cells": int(measure.support_mask.sum())})
        return measure

    measure = run("gen-measure", gen)

    def fourier():
        spec = config.get("fourier", {})
        Xi = int(spec.get("Xi", measure.N // 2))
        sample = fourier_transform(measure, Xi, float(spec.get("step", 1.0)))
        io.save_fourier_csv(sample, out / "fourier.csv")
        record("fourier", {"Xi": Xi, "step": sample.step}, ["fourier.csv"], {})
        return sample

    sample = run("fourier", fourier)

    def decay():
        window = tuple(config.get("decay_fit", {}).get("window", (8, 256)))
        fit = decay_exponent_fit(sample, window)
        res = {"beta_hat": fit.beta_hat, "C_hat": fit.C_hat, "slope": fit.slope}
        io.write_json(res, out / "decay.json")
        record("decay-fit", {"window": list(window)}, ["decay.json"], res)

    run("decay-fit", decay)

    def mollify():
        spec = config.get("mollify", {})
        split = mollify_split(measure, int(spec.get("N_moll", 8)))
        summary = _mollify_summary(split, spec.get("alpha"))
        io.save_grid_function(split.mu1, out / "mu1.grid")
        io.save_fourier_csv(split.mu2_hat, out / "mu2.csv")
        io.write_json(summary, out / "mollify.json")
        record("mollify", {"N_moll": split.N_moll, "alpha": spec.get("alpha")},
               ["mu1.grid", "mu2.csv", "mollify.json"], summary)
        return split

    split = run("mollify", mollify)

    def lam():
        spec = config.get("lambda", {})
        funcs = _functions(spec.get("functions", "mu1"), system, split.mu1)
        res = _lambda_pair(system, funcs, "both", int(spec.get("grid", 512)), float(spec.get("R", 64)),
                           int(spec.get("Q", 4096)), int(spec.get("samples", 10**6)), seed)
        io.write_json(res, out / "lambda.json")
        params = {k: spec[k] for k in sorted(spec)}
        record("lambda", params, ["lambda.json"],
               {"direct": res["direct"]["value"], "fourier": res["fourier"]["value"],
                "agreement": res["agreement"], "direct_flags": res["direct"]["flags"]})

    run("lambda", lam)

    def search():
        spec = config.get("search", {})
        sdata = spec.get("system", config["system"])
        ssys = io.system_from_dict(sdata)
        exclusions = io.load_exclusions(sdata)
        E = PointSet.from_occupancy(measure.support_mask, spec.get("tol"))
        y_grid = int(spec.get("y_grid", measure.N))
        hits = search_configurations(ssys, E, exclusions, y_grid, spec.get("threshold"), threads=threads)
        io.save_hits_csv(hits, out / "hits.csv", ssys.n, ssys.m - ssys.n, len(exclusions))
        record("search", {"y_grid": y_grid, "tol": E.tol, "threshold": spec.get("threshold")}, ["hits.csv"],
               {"hits": len(hits), "best_max_dist": hits[0].max_dist if hits else None})

    run("search", search)

    manifest = {"config": config, "seed": seed, "steps": steps}
    io.write_json(manifest, out / "manifest.json")
    return manifest


def cmd_pipeline(args) -> int:
    path = Path(args.config)
    if not path.exists():
        path = bundled_config(args.config)
    if not path.exists():
        raise UsageError(f"config {args.config} not found")
    config = json.loads(path.read_text())
    if "measure_file" in config and not Path(config["measure_file"]).is_absolute():
        config["measure_file"] = str(path.parent / config["measure_file"])
    run_pipeline(config, args.out or "pipeline-out", args.seed, args.threads)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--trunc-R", type=float, default=64.0)
    common.add_argument("--quad-Q", type=int, default=4096)
    common.add_argument("--samples", type=int, default=10**6)
    common.add_argument("--out", default=None)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    parser = argparse.ArgumentParser(prog="configcount", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nondegen", parents=[common], help="check the rank condition of a system file")
    p.add_argument("system")
    p.set_defaults(func=cmd_nondegen)

    p = sub.add_parser("gen-measure", parents=[common], help="random Cantor measure on a grid")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--stages", type=int, required=True)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--mode", default="independent-uniform", choices=["independent-uniform", "radial-product"])
    p.add_argument("--format", default=None, choices=["json", "f64-le"])
    p.set_defaults(func=cmd_gen_measure)

    p = sub.add_parser("fourier", parents=[common], help="transform of a measure on a frequency lattice")
    p.add_argument("measure")
    p.add_argument("--Xi", type=int, default=None)
    p.add_argument("--step", type=float, default=1.0)
    p.set_defaults(func=cmd_fourier)

    p = sub.add_parser("decay-fit", parents=[common], help="fit the decay exponent of a Fourier sample CSV")
    p.add_argument("sample")
    p.add_argument("--window", type=float, nargs=2, default=(8.0, 256.0))
    p.set_defaults(func=cmd_decay_fit)

    p = sub.add_parser("mollify", parents=[common], help="split a measure into density and remainder")
    p.add_argument("measure")
    p.add_argument("--N-moll", type=int, default=8)
    p.add_argument("--alpha", type=float, default=None)
    p.set_defaults(func=cmd_mollify)

    p = sub.add_parser("lambda", parents=[common], help="evaluate the form directly and on the Fourier side")
    p.add_argument("system")
    p.add_argument("--functions", required=True, help="JSON literal or file: one spec or a list of k")
    p.add_argument("--method", default="both", choices=["direct", "fourier", "both"])
    p.add_argument("--grid", type=int, default=512)
    p.set_defaults(func=cmd_lambda)

    p = sub.add_parser("search", parents=[common], help="find non-trivial configurations in a point set")
    p.add_argument("system")
    p.add_argument("points")
    p.add_argument("--y-grid", type=int, default=16)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("cepsilon", parents=[common], help="Monte Carlo measure of near-integral translations")
    p.add_argument("system")
    p.add_argument("--v", required=True, help="JSON list of integer vectors")
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_cepsilon)

    p = sub.add_parser("appendix-a", parents=[common], help="surface-measure constant and limit check")
    p.add_argument("--matrix", default=None)
    p.add_argument("--system", default=None)
    p.add_argument("--eps", type=float, nargs="+", default=[2.0 ** -2, 2.0 ** -4, 2.0 ** -6])
    p.add_argument("--test-function", default="bump", choices=["bump", "gaussian"])
    p.set_defaults(func=cmd_surface_limit, quad_Q=200)

    p = sub.add_parser("pipeline", parents=[common], help="run a configured end-to-end experiment")
    p.add_argument("config", help="config file, or the name of a bundled config")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.tol is None:
        args.tol = 1e-9 if args.command in ("nondegen", "appendix-a") else None
    if args.seed is None and args.command != "pipeline":
        args.seed = 0  # the pipeline falls back to the seed in its config
    try:
        return args.func(args)
    except StepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ValueError, KeyError, TypeError, OSError, EnumerationCapError, SearchCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
