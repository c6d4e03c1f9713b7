"""Command-line entry point.

Exit codes: 0 success, 1 input error, 2 solver failure, 3 failed validation.
CSV numbers are written with 17 significant digits so they round-trip.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
from contextlib import contextmanager

import numpy as np

from . import blocks, distributions, market, scenario, univariate, validation, wishart
from .exceptions import ConvergenceError, InfeasibleError, MargportError
from .schema import (block1_from_json, block2_from_json, minimax_from_json, two_state_from_json,
                     univariate_from_json, wishart_from_json)
from .solver import ConstraintSet

logger = logging.getLogger("margport")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VALIDATION = 0, 1, 2, 3


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else format(float(x), ".17g")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "value") and not isinstance(obj, (int, str)):
        return obj.value
    return obj


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def write_csv(path, header, rows):
    with _output(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_json(path, doc):
    with _output(path) as fh:
        json.dump(_jsonable(doc), fh, indent=2)
        fh.write("\n")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"input file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def parse_grid(text, name="grid"):
    """``1,2,5`` or ``lin:lo:hi:n`` or ``log:lo:hi:n``; must be non-empty and finite."""
    try:
        if text.startswith(("lin:", "log:")):
            kind, lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1:
                raise ValueError
            vals = np.linspace(lo, hi, n) if kind == "lin" else np.geomspace(lo, hi, n)
        else:
            vals = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise InputError(f"{name}: cannot parse grid '{text}'") from exc
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise InputError(f"{name}: grid must be non-empty and finite")
    return vals


# ---------------------------------------------------------------------------
# allocate
# ---------------------------------------------------------------------------

def _constraints(args):
    if not (args.long_only or args.budget is not None or args.lower is not None
            or args.upper is not None):
        return None
    return ConstraintSet(lower=args.lower, upper=args.upper, budget=args.budget,
                         nonneg=args.long_only)


def _result_doc(res):
    report = res.report.as_dict() if res.report is not None else None
    if report is not None:
        report.pop("history", None)
    return {"weights": res.weights, "objective": res.objective,
            "diagnostics": res.diagnostics, "report": report}


def _univariate_sweep(args, base):
    grids = {"mu0": [base.mu0], "alpha": [base.alpha], "sigma0_sq": [base.sigma0_sq]}
    for spec in args.sweep or []:
        key, _, text = spec.partition("=")
        if key not in grids:
            raise InputError(f"--sweep: unknown parameter '{key}' (mu0, alpha, sigma0_sq)")
        grids[key] = parse_grid(text, key)
    regime = univariate.Regime(args.regime)
    rows = []
    for mu0, alpha, s0 in itertools.product(grids["mu0"], grids["alpha"], grids["sigma0_sq"]):
        p = univariate.UnivariateProblem(mu0, base.sigma_sq, alpha, base.risk_aversion,
                                         base.sigma_min_sq, s0)
        rows.append([mu0, alpha, s0, univariate.solve_cubic(p).weights[0],
                     univariate.asymptotic_weight(p, regime), regime.value])
    write_csv(args.out, ["mu0", "alpha", "sigma0_sq", "w_exact", "w_asymptotic", "regime"], rows)


def cmd_allocate(args):
    doc = _load_json(args.input)
    cs = _constraints(args)
    kw = {"tol": args.tol, "max_iter": args.max_iter}
    m = args.model
    if m == "univariate":
        p = univariate_from_json(doc)
        if args.sweep:
            return _univariate_sweep(args, p)
        res = univariate.solve_cubic(p)
    elif m == "wishart":
        p = wishart_from_json(doc)
        res = (wishart.solve_weights_constrained(p, cs, **kw) if cs is not None
               else wishart.allocate(p))
    elif m == "block1":
        spec, bel, a = block1_from_json(doc)
        res = blocks.solve_model1(spec, bel, a, cs, **kw)
    elif m == "block2":
        spec, bel, a = block2_from_json(doc)
        res = blocks.solve_model2(spec, bel, a, cs, mode=args.mode, **kw)
    elif m == "two-state":
        sc = two_state_from_json(doc, p_override=args.p)
        res = scenario.solve_two_state(sc, cs, **kw)
    else:
        sigma, b = minimax_from_json(doc)
        b = args.b if args.b is not None else b
        if b is None:
            raise InputError("minimax needs --b or a 'b' field")
        res = scenario.minimax_portfolio(sigma, b, **kw)
    write_json(args.out, _result_doc(res))


# ---------------------------------------------------------------------------
# scaling, sample, wishart-sim, posterior
# ---------------------------------------------------------------------------

def cmd_scaling(args):
    qs = parse_grid(args.q, "--q")
    if np.any(qs < 0):
        raise InputError("--q values must be >= 0")
    rows = []
    if args.model == "laplace":
        rows = [[q, "", wishart.scaling_g_laplace(q)] for q in qs]
    else:
        alphas = parse_grid(args.alpha, "--alpha")
        if np.any(alphas <= 0):
            raise InputError("--alpha values must be > 0")
        rows = [[q, al, wishart.scaling_g_wishart(q, al)] for al in alphas for q in qs]
    write_csv(args.out, ["q", "alpha", "g"], rows)


def cmd_sample(args):
    model = distributions.ShiftedGammaNoise(args.alpha, args.sigma ** 2, args.sigma_min ** 2)
    s2 = distributions.sample_shifted_gamma(model, distributions.RngStream(args.seed), args.n,
                                            n_jobs=args.jobs)
    vals = s2 if args.variance else np.sqrt(s2)
    write_csv(args.out, ["sample_index", "value"], enumerate(vals))


def cmd_wishart_sim(args):
    sa, sb, r = args.sigma_a, args.sigma_b, args.rho
    sigma = np.array([[sa * sa, r * sa * sb], [r * sa * sb, sb * sb]])
    S = distributions.sample_wishart(distributions.WishartNoise(args.alpha, sigma),
                                     distributions.RngStream(args.seed), args.n, n_jobs=args.jobs)
    vc = distributions.wishart_vol_corr(S)
    write_csv(args.out, ["sample_index", "vol_a", "vol_b", "corr"],
              ([i, *row] for i, row in enumerate(vc)))


def variance_posterior_grid(n, s, points):
    """Grid over the population variance covering all but ~1e-12 of the mass."""
    from scipy.stats import chi2

    nu = n - 1
    s2 = s * s
    hi = s2 * nu / chi2.ppf(1e-12, nu)
    lo = s2 * nu / chi2.ppf(1 - 1e-12, nu)
    return np.linspace(lo, hi, points)


def cmd_posterior(args):
    rows = []
    if args.kind in ("variance", "all"):
        for n, s in itertools.product(parse_grid(args.n_var, "--n-var").astype(int),
                                      parse_grid(args.s, "--s")):
            x = variance_posterior_grid(n, s, args.points)
            pdf = distributions.scaled_inv_chi2_pdf(x, n, s * s)
            rows += [["variance", n, s, xi, pi] for xi, pi in zip(x, pdf)]
    if args.kind in ("correlation", "all"):
        x = np.linspace(-1, 1, args.points + 2)[1:-1]
        for r, n in itertools.product(parse_grid(args.r, "--r"),
                                      parse_grid(args.n_corr, "--n-corr").astype(int)):
            pdf = distributions.conditional_correlation_pdf(x, r, n)
            rows += [["correlation", n, r, xi, pi] for xi, pi in zip(x, pdf)]
    write_csv(args.out, ["kind", "n", "param", "x", "pdf"], rows)


# ---------------------------------------------------------------------------
# vol-corr, validate
# ---------------------------------------------------------------------------

def cmd_vol_corr(args):
    table = market.ReturnsTable.read_csv(args.input)
    monthly = market.monthly_vol_corr(table, min_rows=args.min_rows)
    write_csv(args.out, ["month", "avg_volatility", "avg_correlation"],
              monthly.itertuples(index=False))
    meta = {"annualization": market.ANNUALIZATION,
            "volatility": "per-asset daily standard deviation times sqrt(252), "
                          "averaged over assets",
            "correlation": "Pearson correlation averaged over unordered asset pairs",
            "month_boundaries": "calendar month of the date column",
            "dropped_rows": table.dropped, "months": len(monthly)}
    if len(monthly) >= 3:
        slope, intercept = market.huber_fit(monthly["avg_volatility"], monthly["avg_correlation"])
        meta["huber"] = {"slope": slope, "intercept": intercept, "t": market.HUBER_T,
                         "maxiter": 100}
    if args.meta:
        write_json(args.meta, meta)
    else:
        json.dump(_jsonable(meta), sys.stderr, indent=2)
        sys.stderr.write("\n")


def cmd_validate(args):
    results = validation.run_validation(args.seed, args.n_samples, g_bias=args.g_bias,
                                        n_jobs=args.jobs)
    write_csv(args.out, ["check", "analytic", "mc_estimate", "mc_se", "z_score", "pass"],
              (r.row() for r in results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="margport",
                                 description="Portfolio allocation under uncertain moments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--out", default=None, help="output path (default stdout)")
        if seed:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--jobs", type=int, default=1, help="worker threads")

    p = sub.add_parser("allocate", help="optimal weights for a model")
    common(p)
    p.add_argument("--model", required=True,
                   choices=["univariate", "wishart", "block1", "block2", "two-state", "minimax"])
    p.add_argument("--input", required=True, help="problem JSON")
    p.add_argument("--p", type=float, default=None, help="override the normal-state probability")
    p.add_argument("--b", type=float, default=None, help="risk weight for minimax")
    p.add_argument("--mode", default="auto", choices=["auto", "reduced", "full"])
    p.add_argument("--long-only", action="store_true")
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--lower", type=float, default=None)
    p.add_argument("--upper", type=float, default=None)
    p.add_argument("--sweep", action="append",
                   help="univariate sweep, e.g. mu0=log:1e-3:1e-1:9 (repeatable)")
    p.add_argument("--regime", default="mu_small", choices=[r.value for r in univariate.Regime])
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("scaling", help="scaling function over a (q, alpha) grid")
    common(p)
    p.add_argument("--model", default="wishart", choices=["wishart", "laplace"])
    p.add_argument("--q", default="log:1e-4:100:61")
    p.add_argument("--alpha", default="1,10,100,1000,10000")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("sample", help="shifted-gamma volatility samples")
    common(p, seed=True)
    p.add_argument("--sigma-min", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.15)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--variance", action="store_true", help="emit variances, not volatilities")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("wishart-sim", help="2-D Wishart volatility/correlation samples")
    common(p, seed=True)
    p.add_argument("--sigma-a", type=float, default=0.2)
    p.add_argument("--sigma-b", type=float, default=0.4)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=int, default=100_000)
    p.set_defaults(func=cmd_wishart_sim)

    p = sub.add_parser("posterior", help="sample-uncertainty densities")
    common(p)
    p.add_argument("--kind", default="all", choices=["variance", "correlation", "all"])
    p.add_argument("--n-var", default="20,60,252")
    p.add_argument("--s", default="0.15,0.25,0.30")
    p.add_argument("--r", default="0.2,0.5,0.8")
    p.add_argument("--n-corr", default="20,60,120")
    p.add_argument("--points", type=int, default=401)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("vol-corr", help="monthly average volatility and correlation")
    common(p)
    p.add_argument("--input", required=True, help="returns CSV: date,<ticker>,...")
    p.add_argument("--min-rows", type=int, default=market.MIN_MONTH_ROWS)
    p.add_argument("--meta", default=None, help="metadata JSON path (default stderr)")
    p.set_defaults(func=cmd_vol_corr)

    p = sub.add_parser("validate", help="closed forms against Monte Carlo")
    common(p, seed=True)
    p.add_argument("--n-samples", type=int, default=100_000)
    p.add_argument("--g-bias", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except (ConvergenceError, InfeasibleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, MargportError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if code is None else code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
