"""Command-line front end.

Results go to stdout as JSON; failures print one line to stderr of the form
``postlasso-error {"code": ..., "type": ..., "message": ...}`` and exit with

    0 success            4 empty active set
    2 bad input/config   5 too few draws
    3 numerical failure  6 rejection budget exhausted
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources

import numpy as np
from scipy import stats

from . import __version__
from .errors import BudgetExhausted, EmptyModel, InputError, PostLassoError
from .harness.experiment import run_experiment
from .harness.oracle import mh_marginals, rejection_oracle
from .harness.serialize import dumps, write_csv
from .inference import coordinate_selector, run_algorithm1
from .lasso import cv_lambda_1se, fit_lasso
from .linalg import build_active_geometry, build_design_context
from .reconstruction import draws_from_chain, verify_chain_selection
from .sampler import ChainConfig, default_init, default_threads, run_chain

LOW_ACCEPTANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(2, "UsageError", message)


def _fail(code, kind, message):
    line = json.dumps({"code": code, "type": kind, "message": str(message)})
    print(f"postlasso-error {line}", file=sys.stderr)
    sys.exit(code)


def read_matrix(path, header=False):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None
    if header:
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise InputError(f"{path}: row {i + 1 + header} has {len(r)} fields, expected {width}")
    try:
        M = np.array([[float(c) for c in r] for r in rows])
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None
    if not np.all(np.isfinite(M)):
        raise InputError(f"{path}: non-finite values")
    return M


def read_vector(path, header=False, length=None):
    v = read_matrix(path, header)
    if v.ndim == 2 and 1 in v.shape:
        v = v.reshape(-1)
    else:
        raise InputError(f"{path}: expected a single row or column")
    if length is not None and v.size != length:
        raise InputError(f"{path}: expected {length} values, got {v.size}")
    return v


def _load(args):
    X = read_matrix(args.X, args.header)
    y = read_vector(args.y, args.header, X.shape[0])
    w = None if args.weights is None else read_vector(args.weights, args.header, X.shape[1])
    # p <= n is accepted for fitting; the null-space machinery then is empty
    return X, y, build_design_context(X, w, low_dimensional=X.shape[1] <= X.shape[0])


def load_schema(name):
    """Shipped JSON schema for a subcommand's output (or ``report``)."""
    text = resources.files("postlasso").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def _lambda(args, ctx, y):
    if args.cv:
        return cv_lambda_1se(ctx, y, folds=args.folds, seed=args.seed), "cv_1se"
    return args.lam, "fixed"


def _echo(args):
    return {k: ("inf" if isinstance(v, float) and v == np.inf else v)
            for k, v in vars(args).items() if k != "func"}


def _emit(obj):
    sys.stdout.write(dumps(obj) + "\n")


def _solution_json(sol):
    return {
        "lambda": sol.lam,
        "active_set": sol.A.tolist(),
        "signs": np.sign(sol.beta_hat[sol.A]).astype(int).tolist(),
        "beta": [{"index": int(j), "value": float(sol.beta_hat[j])} for j in sol.A],
        "subgradient": sol.S.tolist(),
        "kkt_residual": sol.kkt_residual,
        "n_iter": sol.n_iter,
    }


def cmd_fit(args):
    X, y, ctx = _load(args)
    lam, source = _lambda(args, ctx, y)
    sol = fit_lasso(ctx, y, lam)
    _emit({"command": "fit", "config": _echo(args), "n": ctx.n, "p": ctx.p,
           "lambda_source": source, **_solution_json(sol)})


def _fit_nonempty(args, ctx, y):
    lam, source = _lambda(args, ctx, y)
    sol = fit_lasso(ctx, y, lam)
    if sol.A.size == 0:
        raise EmptyModel("lasso selected no variables")
    return lam, source, sol


def _mu(args, X, sol):
    if args.mu is None:
        return X @ sol.beta_hat, "X beta_hat"
    return read_vector(args.mu, args.header, X.shape[0]), args.mu


def cmd_sample(args):
    X, y, ctx = _load(args)
    lam, source, sol = _fit_nonempty(args, ctx, y)
    geom = build_active_geometry(ctx, sol.A)
    mu, mu_source = _mu(args, X, sol)
    cfg = ChainConfig.for_draws(args.n_draws, burn_in=args.burn_in, thin=args.thin,
                                tau_multiplier=args.tau_multiplier)
    chain = run_chain(ctx, geom, mu, args.sigma2, lam, default_init(sol, geom), cfg,
                      rng=np.random.default_rng(args.seed))
    draws = draws_from_chain(ctx, geom, chain, lam)
    checked, matched = verify_chain_selection(ctx, geom, chain, lam,
                                              args.verify, seed=args.seed)
    if args.out:
        A = sol.A.tolist()
        header = [f"b_{j}" for j in A] + [f"nu_{j}" for j in A]
        write_csv(args.out, header, np.hstack([chain.b_A, draws.nu_star]).tolist())
    _emit({"command": "sample", "config": _echo(args), "lambda": lam,
           "lambda_source": source, "mu_source": mu_source,
           "active_set": sol.A.tolist(), "n_draws": len(chain),
           "nu_star_mean": draws.nu_star.mean(axis=0).tolist(),
           "nu_star_sd": draws.nu_star.std(axis=0, ddof=1).tolist(),
           "diagnostics": _chain_diag(chain),
           "selection_check": {"checked": checked, "matched": matched}})


def _chain_diag(chain):
    return {"tau": chain.tau.tolist(),
            "acceptance_b": chain.acceptance_b.tolist(),
            "skipped_b": chain.skipped_b.tolist(),
            "acceptance_sF_mean": (float(chain.acceptance_sF.mean())
                                   if chain.acceptance_sF.size else None),
            "acf": {str(j): {str(k): v for k, v in a.items()}
                    for j, a in chain.diagnostics["acf"].items()}}


def _set_json(kind, B, s):
    return {"kind": kind, "B": list(B), "delta": "inf" if s.norm_delta == np.inf else 2,
            "center": s.center.tolist(), "radius": s.radius,
            "diameter": s.diameter, "volume": s.volume, "log_volume": s.log_volume,
            "volume_star": s.normalized_volume(s.m), "excludes_zero": s.excludes_zero()}


def cmd_infer(args):
    X, y, ctx = _load(args)
    lam, source, sol = _fit_nonempty(args, ctx, y)
    variants = tuple(dict.fromkeys(args.variant or ["randomized"]))
    mu_true = None
    if "oracle" in variants:
        if args.mu_true is None:
            raise InputError("--variant oracle needs --mu-true")
        mu_true = read_vector(args.mu_true, args.header, ctx.n)
    res = run_algorithm1(ctx, y, lam, args.sigma2, args.alpha, args.K, args.N,
                         variants=variants, mu_true=mu_true, seed=args.seed,
                         burn_in=args.burn_in, thin=args.thin,
                         tau_multiplier=args.tau_multiplier,
                         verify_fraction=args.verify, threads=args.threads,
                         solution=sol)
    q = res.geometry.q
    sets = []
    if args.H is not None:
        H = read_matrix(args.H, args.header)
        if H.shape[1] != q:
            raise InputError(f"H must have {q} columns (one per selected variable)")
        sets.append(_set_json("custom", [], res.build_set(H, args.delta)))
    if args.pairs:
        for a in range(q):
            for b in range(a + 1, q):
                s = res.build_set(coordinate_selector(q, (a, b)), args.delta)
                sets.append(_set_json("pairwise", (a, b), s))
    if args.joint:
        sets.append(_set_json("joint", range(q),
                              res.build_set(np.eye(q), args.delta)))
    ell = res.ellipsoid
    _emit({"command": "infer", "config": _echo(args), "lambda": lam,
           "lambda_source": source, "active_set": res.A.tolist(),
           "nu_hat": ell.nu_hat.tolist(), "radius2": ell.radius2,
           "n_draws": len(res.draws),
           "intervals": {v: [{"variable": iv.variable, "lower": iv.lower,
                              "upper": iv.upper, "length": iv.length}
                             for iv in ivs] for v, ivs in res.intervals.items()},
           "sets": sets, "diagnostics": res.diagnostics})


def cmd_oracle(args):
    X, y, ctx = _load(args)
    lam, source, sol = _fit_nonempty(args, ctx, y)
    mu, mu_source = _mu(args, X, sol)
    report = {"command": "oracle", "config": _echo(args), "lambda": lam,
              "lambda_source": source, "mu_source": mu_source,
              "active_set": sol.A.tolist()}
    rng = np.random.default_rng(args.seed)
    try:
        orc = rejection_oracle(ctx, mu, args.sigma2, lam, sol.A, args.n_accept,
                               args.max_draws, rng=rng)
    except BudgetExhausted as e:
        part = e.partial
        report.update({"status": "budget_exhausted", "n_drawn": part.n_drawn,
                       "n_accepted": part.n_accept,
                       "acceptance_rate": part.acceptance_rate})
        _emit(report)
        raise
    if orc.acceptance_rate < LOW_ACCEPTANCE:
        print(f"warning: acceptance rate {orc.acceptance_rate:.2e} is below "
              f"{LOW_ACCEPTANCE:g}", file=sys.stderr)
    report.update({"status": "ok", "n_drawn": orc.n_drawn,
                   "n_accepted": orc.n_accept,
                   "acceptance_rate": orc.acceptance_rate})
    if args.compare_mcmc:
        geom = build_active_geometry(ctx, sol.A)
        cfg = ChainConfig.for_draws(args.mcmc_draws, burn_in=args.burn_in,
                                    thin=args.thin)
        chain = run_chain(ctx, geom, mu, args.sigma2, lam, default_init(sol, geom),
                          cfg, rng=rng)
        b, S = mh_marginals(geom, chain)
        ks = {}
        for i, j in enumerate(sol.A):
            ks[f"beta_{j}"] = float(stats.ks_2samp(orc.beta_A[:, i], b[:, i]).statistic)
        for i, j in enumerate(geom.I):
            ks[f"S_{j}"] = float(stats.ks_2samp(orc.S_I[:, i], S[:, i]).statistic)
        report.update({"mcmc_draws": len(chain), "ks": ks,
                       "ks_max": max(ks.values()),
                       "mcmc_diagnostics": _chain_diag(chain)})
    _emit(report)


def cmd_simulate(args):
    result = run_experiment(args.config, out_dir=args.out, threads=args.threads,
                            resume=not args.no_resume)
    _emit({"command": "simulate", "config": _echo(args), **result.report})


def _delta(s):
    if s in ("2", "l2"):
        return 2
    if s in ("inf", "linf"):
        return np.inf
    raise argparse.ArgumentTypeError("delta must be 2 or inf")


def _positive(kind):
    def conv(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v
    return conv


def build_parser():
    p = _Parser(prog="postlasso", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp, inference):
        sp.add_argument("X", help="design CSV, n rows by p columns")
        sp.add_argument("y", help="response CSV with n values")
        sp.add_argument("--header", action="store_true", help="skip one header row in every CSV")
        sp.add_argument("--weights", help="CSV of p positive penalty weights")
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--lambda", dest="lam", type=_positive(float))
        g.add_argument("--cv", action="store_true", help="10-fold CV, one-SE rule")
        sp.add_argument("--folds", type=int, default=10)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=default_threads())
        if inference:
            sp.add_argument("--sigma2", type=_positive(float), required=True,
                            help="known noise variance")

    def chain_args(sp, burn_in=1000, thin=1):
        sp.add_argument("--burn-in", type=int, default=burn_in)
        sp.add_argument("--thin", type=_positive(int), default=thin)
        sp.add_argument("--tau-multiplier", type=_positive(float), default=2.0)

    sp = sub.add_parser("fit", help="lasso fit")
    data_args(sp, False)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("sample", help="conditional draws at one plug-in mean")
    data_args(sp, True)
    chain_args(sp)
    sp.add_argument("--mu", help="plug-in mean CSV (default X beta_hat)")
    sp.add_argument("--n-draws", type=_positive(int), default=10000)
    sp.add_argument("--verify", type=float, default=0.01,
                    help="fraction of draws refit to check the active set")
    sp.add_argument("--out", help="write draws to this CSV")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("infer", help="confidence intervals and sets")
    data_args(sp, True)
    chain_args(sp)
    sp.add_argument("--alpha", type=_positive(float), default=0.05)
    sp.add_argument("--K", type=_positive(int), default=20)
    sp.add_argument("--N", type=_positive(int), default=500)
    sp.add_argument("--variant", action="append",
                    choices=["randomized", "conservative", "plugin", "oracle"])
    sp.add_argument("--mu-true", help="true mean CSV, for the oracle variant")
    sp.add_argument("--H", help="CSV matrix (m x |A|) for a set on H nu")
    sp.add_argument("--pairs", action="store_true", help="all pairwise sets")
    sp.add_argument("--joint", action="store_true", help="joint set for all of nu")
    sp.add_argument("--delta", type=_delta, default=np.inf)
    sp.add_argument("--verify", type=float, default=0.01)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("oracle", help="rejection sampling check")
    data_args(sp, True)
    chain_args(sp, thin=10)
    sp.add_argument("--mu", help="plug-in mean CSV (default X beta_hat)")
    sp.add_argument("--n-accept", type=_positive(int), default=10000)
    sp.add_argument("--max-draws", type=_positive(int), default=10 ** 6)
    sp.add_argument("--compare-mcmc", action="store_true")
    sp.add_argument("--mcmc-draws", type=_positive(int), default=20000)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("simulate", help="run a YAML-configured experiment")
    sp.add_argument("config")
    sp.add_argument("--out", help="output directory (enables resume)")
    sp.add_argument("--threads", type=int, default=default_threads())
    sp.add_argument("--no-resume", action="store_true")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "alpha", 0.5) >= 1:
        _fail(2, "UsageError", "alpha must be in (0, 1)")
    try:
        args.func(args)
    except PostLassoError as e:
        _fail(e.exit_code, type(e).__name__, e)
    except ValueError as e:
        _fail(2, "ValueError", e)
    return 0


if __name__ == "__main__":
    sys.exit(main())
