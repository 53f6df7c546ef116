"""Command line interface.

Every stochastic command derives its random streams from ``--seed`` so that
identical invocations write byte-identical artifacts.
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
import json
import logging
import os
import platform
import sys

import numpy as np

from . import __version__
from . import io as sio
from .autotune import adjust_weights, opt_design
from .harness import (
    DEFAULT_TRUTH,
    build_table,
    exact_loglik,
    gauss_coverage,
    gauss_metamodel_ess,
    gauss_pmcmc_ess,
    grid_design,
    infer,
    simulate_data,
    sim_per_obs,
    working_truth,
    _covers,
)
from .k1 import block_sums, default_blocks
from .metamodel import NoInteriorMaximumError, SimLogLikTable, fit_quadratic, mesle_point
from .models import PompModel, get_model
from .rng import derive_rng

logger = logging.getLogger("sbim")

MODEL_CHOICES = ["gp", "lgss", "stovol", "gauss"]


class CliError(Exception):
    pass


def _point(text):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid parameter point {text!r}") from None


def _threads(args):
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("SBIM_THREADS")
    return max(1, int(env)) if env else 1


def _pmap(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _model(args):
    kwargs = {}
    if args.model == "gp":
        kwargs["gamma_shape"] = args.gamma_shape
    elif args.model == "lgss":
        kwargs["dim"] = args.dim
    elif args.model == "gauss":
        kwargs["tau"] = args.tau
    return get_model(args.model, **kwargs)


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _load_k1(spec):
    if spec == "auto":
        return "auto"
    try:
        return float(spec)
    except ValueError:
        pass
    with open(spec) as fh:
        return np.asarray(json.load(fh), dtype=float)


def _grid_points(specs, d):
    """Product grid from ``--grid LO HI NUM`` given once per axis."""
    if not specs:
        return None
    if len(specs) != d:
        raise CliError(f"--grid must be given once per parameter ({d} times)")
    axes = [np.linspace(float(lo), float(hi), int(num)) for lo, hi, num in specs]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


# subcommands

def cmd_simulate(args):
    model = _model(args)
    truth = args.theta if args.theta is not None else np.asarray(DEFAULT_TRUTH[args.model])
    rng = derive_rng(args.seed, "data")
    y = simulate_data(model, truth, args.n, rng)
    _emit(sio.observations_to_csv(y), args.out)
    if args.oracle:
        oracle = {"model": args.model, "theta": truth, "n": args.n, "exact_loglik": exact_loglik(model, y, truth)}
        if args.out in (None, "-"):
            sys.stderr.write(sio.dumps_json(oracle))
        else:
            sio.write_json(oracle, args.out + ".oracle.json")
    return 0


def cmd_pf(args):
    model = _model(args)
    y = sio.read_observations(args.data)
    points = list(args.theta or [])
    extra = _grid_points(args.grid, len(points[0]) if points else len(args.grid or []))
    if extra is not None:
        points += list(extra)
    if not points:
        raise CliError("give at least one --theta or --grid")
    thetas = np.vstack(points)
    n = len(y)
    part = default_blocks(n, args.blocks) if args.blocks else None
    offset = 0
    existing = None
    if args.out not in (None, "-") and os.path.exists(args.out) and not args.overwrite:
        existing = sio.read_raw_table(args.out)
        offset = existing["thetas"].shape[0]
        if existing["thetas"].shape[1] != thetas.shape[1]:
            raise CliError("parameter dimension differs from the existing table")
    J = args.particles
    w = float(J) if isinstance(model, PompModel) else 1.0

    def run(task):
        m, r = task
        rng = derive_rng(args.seed, "filter", offset + m, r)
        return sim_per_obs(model, y, thetas[m:m + 1], rng, J)[0]

    tasks = [(m, r) for m in range(thetas.shape[0]) for r in range(args.replicates)]
    per_obs = np.vstack(_pmap(run, tasks, _threads(args)))
    rows_theta = np.vstack([thetas[m] for m, _ in tasks])
    totals = per_obs.sum(axis=1)
    finite = np.isfinite(totals)
    keep = np.ones_like(finite) if args.keep_degenerate else finite
    blocks = block_sums(per_obs, part) if part is not None else None
    dropped = int((~finite).sum()) if not args.keep_degenerate else 0
    T, V = rows_theta[keep], totals[keep]
    B = blocks[keep] if blocks is not None else None
    W = np.full(T.shape[0], w)
    sizes = part.sizes if part is not None else None
    if existing is not None:
        if (existing["blocks"] is None) != (B is None) or (B is not None and existing["blocks"].shape[1] != B.shape[1]):
            raise CliError("block columns differ from the existing table")
        T = np.vstack([existing["thetas"], T])
        V = np.concatenate([existing["values"], V])
        W = np.concatenate([existing["weights"], W])
        B = np.vstack([existing["blocks"], B]) if B is not None else None
    _emit(sio.rows_to_csv(T, V, W, B, n, sizes), args.out)
    summary = {"rows_written": int(keep.sum()), "degenerate_dropped": dropped, "particles": J}
    sys.stderr.write(sio.dumps_json(summary))
    return 0


def _read_table(args):
    table, dropped = sio.read_table(args.table)
    if getattr(args, "n", None):
        table = SimLogLikTable(table.thetas, table.values, table.weights, args.n,
                               table.per_block_values, table.block_sizes)
    return table, dropped


def cmd_fit(args):
    table, dropped = _read_table(args)
    out = {"degenerate_dropped": dropped}
    if args.auto_adjust:
        adj = adjust_weights(table)
        table = table.with_weights(adj.adjusted_weights)
        out["adjust"] = adj.to_dict()
    fit = fit_quadratic(table)
    out["fit"] = fit.to_dict()
    try:
        out["mesle"] = mesle_point(fit)
    except NoInteriorMaximumError:
        out["mesle"] = None
    _emit(sio.dumps_json(out), args.out)
    return 0


def cmd_ht(args):
    table, dropped = _read_table(args)
    res = infer(table, args.test, args.alpha, null=args.null, k1=_load_k1(args.k1), auto_adjust=args.auto_adjust)
    res.pop("ci", None)
    res["degenerate_dropped"] = dropped
    res["null"] = args.null
    _emit(sio.dumps_json(res), args.out)
    return 0


def cmd_ci(args):
    table, dropped = _read_table(args)
    grid = _grid_points(args.grid, table.d)
    if table.d > 1 and grid is None:
        raise CliError("confidence regions for d >= 2 need --grid LO HI NUM per parameter")
    res = infer(table, args.test, args.alpha, k1=_load_k1(args.k1), auto_adjust=args.auto_adjust, grid=grid)
    res["degenerate_dropped"] = dropped
    _emit(sio.dumps_json(res), args.out)
    return 0


def cmd_design(args):
    table, _ = _read_table(args)
    domain = None
    if args.bounds:
        if len(args.bounds) != table.d:
            raise CliError(f"--bounds must be given once per parameter ({table.d} times)")
        domain = np.array([[float(lo), float(hi)] for lo, hi in args.bounds])
    proposals = []
    for _ in range(args.propose):
        info = opt_design(table, return_info=True, bounds=domain)
        proposals.append(info.to_dict())
        # append the proposal at its fitted value so later proposals account for it
        fit = info.adjust.fit
        val = float(fit.predict(info.point[None, :])[0])
        table = SimLogLikTable(np.vstack([table.thetas, info.point]), np.append(table.values, val),
                               np.append(table.weights, float(np.mean(table.weights))), table.n_obs)
    _emit(sio.dumps_json({"proposals": proposals}), args.out)
    return 0


def cmd_benchmark(args):
    from .models import GaussianLocation

    model = GaussianLocation(args.tau)
    y = model.simulate_data(args.theta0, args.n, derive_rng(args.seed, "data"))
    report = {"config": {"n": args.n, "tau": args.tau, "theta0": args.theta0, "halfwidth": args.halfwidth,
                         "replicates": args.replicates, "sims": args.sims, "method": args.method, "seed": args.seed},
              "posterior_var": model.posterior_var(args.n), "ybar": float(np.mean(y)), "ess_by_M": {}}
    if args.method in ("pmcmc", "both"):
        report["ess_by_M"]["pmcmc"] = gauss_pmcmc_ess(y, args.sims, args.replicates,
                                                      derive_rng(args.seed, "mcmc"), tau=args.tau)
    if args.method in ("metamodel", "both"):
        report["ess_by_M"]["metamodel"] = gauss_metamodel_ess(y, args.sims, args.replicates,
                                                              derive_rng(args.seed, "benchmark"), tau=args.tau,
                                                              center=args.theta0, halfwidth=args.halfwidth)
    if args.coverage_n:
        cov, widths = gauss_coverage(args.coverage_n, args.coverage_replicates,
                                     derive_rng(args.seed, "benchmark", 1), tau=args.tau, theta0=args.theta0,
                                     sims=args.coverage_sims, halfwidth=args.halfwidth)
        report["coverage_by_n"] = cov
        report["interval_widths"] = widths
    _emit(sio.dumps_json(report), args.out)
    return 0


PIPELINE_KEYS = ("model", "truth", "n", "center", "halfwidth", "points", "particles", "blocks", "test",
                 "alpha", "null", "k1", "auto_adjust", "replicates", "seed", "gamma_shape", "dim", "tau",
                 "region_points")


def _pipeline_config(args):
    if args.manifest:
        with open(args.manifest) as fh:
            cfg = json.load(fh)["config"]
        return cfg
    model = _model(args)
    truth = list(args.theta) if args.theta is not None else list(DEFAULT_TRUTH[args.model])
    center = list(args.center) if args.center is not None else [float(v) for v in working_truth(model, truth)]
    if args.halfwidth is None:
        raise CliError("pipeline needs --halfwidth")
    return {
        "model": args.model, "truth": [float(v) for v in truth], "n": args.n, "center": center,
        "halfwidth": [float(v) for v in args.halfwidth], "points": args.points, "particles": args.particles,
        "blocks": args.blocks or "auto", "test": args.test, "alpha": args.alpha,
        "null": None if args.null is None else [float(v) for v in args.null],
        "k1": args.k1, "auto_adjust": args.auto_adjust, "replicates": args.replicates, "seed": args.seed,
        "gamma_shape": args.gamma_shape, "dim": args.dim, "tau": args.tau, "region_points": args.region_points,
    }


def _plan(cfg):
    return {
        "stages": [
            f"simulate data: model={cfg['model']} truth={cfg['truth']} n={cfg['n']}",
            f"simulate log-likelihoods at {cfg['points']} points around {cfg['center']} +/- {cfg['halfwidth']}",
            "fit quadratic metamodel" + (" with weight adjustment" if cfg["auto_adjust"] else ""),
            f"K1: {cfg['k1']}" if cfg["test"] == "proxy" else "no K1 needed",
            f"{cfg['test']} test/confidence set at alpha={cfg['alpha']}",
        ],
        "replicates": cfg["replicates"],
    }


def cmd_pipeline(args):
    cfg = _pipeline_config(args)
    missing = [k for k in PIPELINE_KEYS if k not in cfg]
    if missing:
        raise CliError(f"configuration is missing {missing}")
    if args.dry_run:
        _emit(sio.dumps_json({"config": cfg, "plan": _plan(cfg)}), None)
        return 0
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    ns = argparse.Namespace(model=cfg["model"], gamma_shape=cfg["gamma_shape"], dim=cfg["dim"], tau=cfg["tau"])
    model = _model(ns)
    thetas = grid_design(cfg["center"], cfg["halfwidth"], cfg["points"])
    d = thetas.shape[1]
    region_grid = None
    if d > 1:
        region_grid = grid_design(cfg["center"], cfg["halfwidth"], cfg["region_points"] ** d)
    k1 = cfg["k1"] if cfg["k1"] == "auto" else _load_k1(cfg["k1"])
    truth_w = working_truth(model, cfg["truth"])
    seed = cfg["seed"]

    def replicate(r):
        y = simulate_data(model, cfg["truth"], cfg["n"], derive_rng(seed, "data", 0, r))
        table, dropped = build_table(model, y, thetas, derive_rng(seed, "simulate", 0, r), cfg["particles"],
                                     cfg["blocks"])
        res = infer(table, cfg["test"], cfg["alpha"], cfg["null"], k1, cfg["auto_adjust"], region_grid)
        res["degenerate_dropped"] = dropped
        if "ci" in res:
            ci = res["ci"]
            lo, hi = (ci["bounds"] + [None, None])[:2]
            res["covers_truth"] = _covers(ci["kind"], lo, hi, truth_w[0])
        return table, res

    results = _pmap(replicate, range(cfg["replicates"]), _threads(args))
    artifacts = []
    if cfg["replicates"] == 1 or args.save_tables:
        for r, (table, _) in enumerate(results):
            name = "table.csv" if cfg["replicates"] == 1 else f"table_{r:04d}.csv"
            sio.write_table(table, os.path.join(outdir, name))
            artifacts.append(name)
    reps = [res for _, res in results]
    summary = {"config": cfg, "replicates": reps}
    cover = [r["covers_truth"] for r in reps if "covers_truth" in r]
    if cover:
        summary["coverage"] = float(np.mean(cover))
    sio.write_json(summary, os.path.join(outdir, "result.json"))
    artifacts.append("result.json")
    manifest = {"config": cfg, "seed": seed, "artifacts": artifacts, "versions": _versions()}
    sio.write_json(manifest, os.path.join(outdir, "manifest.json"))
    return 0


def _versions():
    import scipy
    import sklearn

    return {"sbim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


# parser

def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker threads (default: $SBIM_THREADS or 1)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output path ('-' for stdout)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _model_opts(p, required=True):
    p.add_argument("--model", choices=MODEL_CHOICES, required=required, default="gp" if not required else None)
    p.add_argument("--gamma-shape", type=float, default=1.0, help="gamma-Poisson shape (gp)")
    p.add_argument("--dim", type=int, default=10, help="state dimension (lgss)")
    p.add_argument("--tau", type=float, default=30.0, help="latent scale (gauss)")


def _inference_opts(p):
    p.add_argument("--table", required=True)
    p.add_argument("--test", choices=["mesle", "proxy"], default="proxy")
    p.add_argument("--k1", default="auto", help="'auto', a number, or a JSON file holding a matrix")
    p.add_argument("--n", type=int, default=None, help="number of observations (overrides the table)")
    p.add_argument("--auto-adjust", action="store_true", help="discount far points before testing")
    p.add_argument("--alpha", type=float, default=0.05)


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="sbim", parents=[common],
                                     description="Metamodel-based inference from simulated log-likelihoods.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate an observation data set")
    _model_opts(p)
    p.add_argument("--theta", type=_point, default=None, help="natural parameter values, comma separated")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--oracle", action="store_true", help="also write the exact log-likelihood")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pf", parents=[common], help="simulated log-likelihoods at parameter points")
    _model_opts(p)
    p.add_argument("--data", required=True)
    p.add_argument("--theta", type=_point, action="append", help="working-coordinate point (repeatable)")
    p.add_argument("--grid", nargs=3, action="append", metavar=("LO", "HI", "NUM"))
    p.add_argument("--particles", type=int, default=100)
    p.add_argument("--blocks", type=int, default=None, help="number of contiguous blocks for K1 columns")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--keep-degenerate", action="store_true")
    p.add_argument("--overwrite", action="store_true", help="replace rather than append to --out")
    p.set_defaults(func=cmd_pf)

    p = sub.add_parser("fit", parents=[common], help="fit the quadratic metamodel")
    p.add_argument("--table", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--auto-adjust", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ht", parents=[common], help="test a null parameter value")
    _inference_opts(p)
    p.add_argument("--null", type=_point, required=True)
    p.set_defaults(func=cmd_ht)

    p = sub.add_parser("ci", parents=[common], help="confidence interval or region")
    _inference_opts(p)
    p.add_argument("--grid", nargs=3, action="append", metavar=("LO", "HI", "NUM"))
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("design", parents=[common], help="propose the next simulation points")
    p.add_argument("--table", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--propose", type=int, default=1)
    p.add_argument("--bounds", nargs=2, action="append", metavar=("LO", "HI"),
                   help="parameter domain per axis (repeat per parameter; 'inf' allowed)")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("benchmark", parents=[common], help="PM-MCMC versus metamodel on the Gaussian location model")
    p.add_argument("--method", choices=["pmcmc", "metamodel", "both"], default="both")
    p.add_argument("--sims", type=int, nargs="+", default=[100, 1000, 3000, 10000])
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--tau", type=float, default=30.0)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--halfwidth", type=float, default=20.0)
    p.add_argument("--coverage-n", type=int, nargs="*", default=[])
    p.add_argument("--coverage-replicates", type=int, default=100)
    p.add_argument("--coverage-sims", type=int, default=1000)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("pipeline", parents=[common], help="simulate, fit, and test end to end")
    _model_opts(p, required=False)
    p.add_argument("--theta", type=_point, default=None, help="natural parameter generating the data")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--center", type=_point, default=None, help="design center in working coordinates")
    p.add_argument("--halfwidth", type=_point, default=None)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--particles", type=int, default=100)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--test", choices=["mesle", "proxy"], default="proxy")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--null", type=_point, default=None)
    p.add_argument("--k1", default="auto")
    p.add_argument("--auto-adjust", action="store_true")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--region-points", type=int, default=21)
    p.add_argument("--save-tables", action="store_true")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--manifest", default=None, help="rerun the configuration stored in a manifest")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("seed", 0), ("threads", None), ("out", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # report every stage failure as JSON
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
