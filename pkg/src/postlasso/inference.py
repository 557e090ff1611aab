"""Confidence intervals and sets after lasso selection.

The unconditional ellipsoid for the projected mean is built from the Gaussian
law of ``X_A^+ y``; plug-in means drawn on its boundary feed the conditional
sampler, and quantiles of the pooled ``nu* - nu_hat`` deviations give the
intervals (per coordinate) or l2/l-infinity balls (for ``H nu``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import EmptyModel, InsufficientDraws
from .lasso import fit_lasso
from .linalg import build_active_geometry
from .reconstruction import ConditionedDraws, draws_from_chain, verify_chain_selection
from .sampler import ChainConfig, default_init, run_chains

MIN_DRAWS = 100
QUANTILE_METHOD = "inverted_cdf"
VARIANTS = ("oracle", "plugin", "randomized", "conservative")


def empirical_quantile(x, levels, method=QUANTILE_METHOD):
    return np.quantile(np.asarray(x, dtype=float), levels, method=method)


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    """``{beta : (beta - nu_hat)' shape (beta - nu_hat) <= radius2}`` mapped by X_A."""

    A: np.ndarray
    nu_hat: np.ndarray
    shape: np.ndarray
    radius2: float
    alpha_outer: float
    X_A: np.ndarray = field(repr=False)

    @property
    def mu_hat(self):
        return self.X_A @ self.nu_hat

    def quad_form(self, beta):
        d = np.atleast_2d(beta) - self.nu_hat
        return np.einsum("ij,jk,ik->i", d, self.shape, d)

    def contains_coef(self, beta):
        return bool(self.quad_form(beta)[0] <= self.radius2)


def build_C_A(ctx, y, A, alpha, sigma2):
    """Level ``1 - alpha/2`` ellipsoid from ``X_A^+ y ~ N(beta_A, sigma2 (X_A'X_A)^{-1})``."""
    A = np.asarray(A, dtype=int)
    if A.size < 1:
        raise EmptyModel("confidence set needs at least one selected variable")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    XA = ctx.X[:, A]
    shape = XA.T @ XA
    nu_hat = np.linalg.solve(shape, XA.T @ np.asarray(y, dtype=float))
    radius2 = sigma2 * float(stats.chi2.ppf(1 - alpha / 2, A.size))
    return ConfidenceEllipsoid(A=A, nu_hat=nu_hat, shape=shape, radius2=radius2,
                               alpha_outer=alpha / 2, X_A=XA)


def sample_boundary(ell, K, rng):
    """Plug-in means on the ellipsoid boundary.

    Directions are uniform on the unit sphere and pushed through the
    ellipsoid's Cholesky parametrization.  Returns ``(mus, nus)`` with
    ``mus = nus @ X_A'``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = np.random.default_rng(rng)
    q = ell.nu_hat.shape[0]
    z = rng.standard_normal((K, q))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    L = np.linalg.cholesky(ell.shape)
    offs = np.linalg.solve(L.T, z.T).T * np.sqrt(ell.radius2)
    nus = ell.nu_hat + offs
    return nus @ ell.X_A.T, nus


@dataclass(frozen=True)
class IntervalResult:
    j: int
    variable: int
    lower: float
    upper: float
    variant: str
    alpha: float

    @property
    def length(self):
        return self.upper - self.lower

    def contains(self, value):
        return self.lower <= value <= self.upper


def _check_count(x):
    if x.shape[0] < MIN_DRAWS:
        raise InsufficientDraws(f"{x.shape[0]} pooled draws < {MIN_DRAWS}")


def _interval(nu_hat_j, dev, lo_level, hi_level, j, var, variant, alpha, method):
    _check_count(dev)
    q_lo, q_hi = empirical_quantile(dev, [lo_level, hi_level], method)
    lower, upper = nu_hat_j - q_hi, nu_hat_j - q_lo
    return IntervalResult(j=j, variable=int(var), lower=float(lower),
                          upper=float(upper), variant=variant, alpha=alpha)


def build_interval_randomized(draws, ell, j, alpha, method=QUANTILE_METHOD):
    """Pooled quantiles at ``alpha/4, 1 - alpha/4`` around ``nu_hat``."""
    dev = draws.nu_star[:, j] - ell.nu_hat[j]
    return _interval(ell.nu_hat[j], dev, alpha / 4, 1 - alpha / 4, j,
                     ell.A[j], "randomized", alpha, method)


def build_interval_plugin(draws, nu_hat, j, alpha, center=None, variant="plugin",
                          A=None, method=QUANTILE_METHOD):
    """Single plug-in mean: quantiles at ``alpha/2, 1 - alpha/2``.

    ``center`` is ``X_A^+ mu`` for the plug-in ``mu`` (``nu_hat`` itself for
    the plug-in at ``mu_hat``; the true ``nu`` for the oracle).
    """
    nu_hat = np.asarray(nu_hat, dtype=float)
    center = nu_hat if center is None else np.asarray(center, dtype=float)
    var = j if A is None else A[j]
    dev = draws.nu_star[:, j] - center[j]
    return _interval(nu_hat[j], dev, alpha / 2, 1 - alpha / 2, j, var,
                     variant, alpha, method)


def build_interval_oracle(draws, nu_hat, nu_true, j, alpha, A=None,
                          method=QUANTILE_METHOD):
    return build_interval_plugin(draws, nu_hat, j, alpha, center=nu_true,
                                 variant="oracle", A=A, method=method)


def build_interval_conservative(draws, ell, j, alpha, method=QUANTILE_METHOD,
                                nu_tilde=None):
    """Worst case over plug-ins: max upper and min lower per-group quantiles.

    By default every group's deviations are taken from ``nu_hat``, which makes
    the randomized interval a subset of this one on the same draws.  Passing
    ``nu_tilde`` (one row per plug-in, ``X_A^+ mu_tilde``) centers group ``k``
    at its own plug-in instead.
    """
    _check_count(draws.nu_star)
    lows, highs = [], []
    for k, rows in draws.groups():
        if rows.shape[0] < 2:
            raise InsufficientDraws("each plug-in needs at least two draws")
        center = ell.nu_hat[j] if nu_tilde is None else nu_tilde[k][j]
        lo, hi = empirical_quantile(rows[:, j] - center,
                                    [alpha / 4, 1 - alpha / 4], method)
        lows.append(lo)
        highs.append(hi)
    return IntervalResult(j=j, variable=int(ell.A[j]),
                          lower=float(ell.nu_hat[j] - max(highs)),
                          upper=float(ell.nu_hat[j] - min(lows)),
                          variant="conservative", alpha=alpha)


def ball_volume(radius, m, delta):
    """``(log_volume, diameter)`` of an l_delta ball of radius ``radius`` in R^m."""
    if delta == 2:
        log_vol = 0.5 * m * np.log(np.pi) - gammaln(0.5 * m + 1) + m * np.log(radius)
        diam = 2.0 * radius
    elif delta == np.inf:
        log_vol = m * np.log(2.0 * radius)
        diam = 2.0 * radius * np.sqrt(m)
    else:
        raise ValueError("delta must be 2 or inf")
    return float(log_vol), float(diam)


@dataclass(frozen=True)
class SetResult:
    H: np.ndarray
    center: np.ndarray
    radius: float
    norm_delta: float
    diameter: float
    log_volume: float
    alpha: float

    @property
    def m(self):
        return self.H.shape[0]

    @property
    def volume(self):
        return float(np.exp(self.log_volume))

    def normalized_volume(self, q):
        """``Volume ** (1/q)`` computed in log space."""
        return float(np.exp(self.log_volume / q))

    def contains(self, eta):
        d = np.asarray(eta, dtype=float) - self.center
        return bool(np.linalg.norm(d, ord=self.norm_delta) <= self.radius)

    def excludes_zero(self):
        return not self.contains(np.zeros_like(self.center))


def parse_delta(delta):
    if delta in (2, 2.0, "2", "l2"):
        return 2
    if delta in (np.inf, "inf", "Inf", "infinity", "linf"):
        return np.inf
    raise ValueError(f"unsupported norm {delta!r}; use 2 or inf")


def build_set(draws, ell, H, delta, alpha, method=QUANTILE_METHOD):
    """Ball ``{eta : |eta - H nu_hat|_delta <= q_{1-alpha/2}}``."""
    delta = parse_delta(delta)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    q = ell.nu_hat.shape[0]
    if H.shape[1] != q or H.shape[0] > q:
        raise ValueError(f"H must be m x {q} with m <= {q}")
    _check_count(draws.nu_star)
    dev = (draws.nu_star - ell.nu_hat) @ H.T
    norms = np.linalg.norm(dev, ord=delta, axis=1)
    radius = float(empirical_quantile(norms, 1 - alpha / 2, method))
    log_vol, diam = ball_volume(radius, H.shape[0], delta)
    return SetResult(H=H, center=H @ ell.nu_hat, radius=radius,
                     norm_delta=delta, diameter=diam, log_volume=log_vol,
                     alpha=alpha)


def coordinate_selector(q, B):
    """Rows of the identity selecting positions ``B`` out of ``q``."""
    H = np.zeros((len(B), q))
    H[np.arange(len(B)), list(B)] = 1.0
    return H


@dataclass
class InferenceResult:
    solution: object
    geometry: object
    ellipsoid: ConfidenceEllipsoid
    draws: ConditionedDraws
    intervals: dict
    alpha: float
    diagnostics: dict
    plugin_draws: ConditionedDraws | None = None
    oracle_draws: ConditionedDraws | None = None
    mu_tilde: np.ndarray | None = None

    @property
    def A(self):
        return self.geometry.A

    def build_set(self, H, delta, method=QUANTILE_METHOD):
        return build_set(self.draws, self.ellipsoid, H, delta, self.alpha, method)


def _summarize(chains):
    acc_b = np.mean([c.acceptance_b for c in chains], axis=0)
    acc_f = (np.mean([c.acceptance_sF for c in chains], axis=0)
             if chains[0].acceptance_sF.size else np.zeros(0))
    skip = np.mean([c.skipped_b for c in chains], axis=0)
    acf1 = np.mean([[v.get(1, np.nan) for v in c.diagnostics["acf"].values()]
                    for c in chains], axis=0)
    return {"acceptance_b": acc_b.tolist(),
            "acceptance_sF_mean": float(acc_f.mean()) if acc_f.size else None,
            "skipped_b": skip.tolist(), "acf_lag1_b": acf1.tolist()}


def run_algorithm1(ctx, y, lam, sigma2, alpha=0.05, K=20, N=500, *,
                   variants=("randomized", "conservative"), mu_true=None,
                   seed=0, burn_in=1000, thin=1, tau_multiplier=2.0,
                   verify_fraction=0.01, threads=None, solution=None,
                   method=QUANTILE_METHOD, conservative_center="nu_hat"):
    """Fit, randomize the plug-in over the ellipsoid boundary, sample, and
    build intervals for every selected variable.

    ``variants`` may include ``plugin`` (one chain of ``K*N`` draws at
    ``mu_hat``) and ``oracle`` (same, at ``mu_true``; simulation only).
    ``conservative_center="plugin"`` centers each plug-in's deviations at its
    own ``X_A^+ mu_tilde`` (see :func:`build_interval_conservative`).
    Streams: ``SeedSequence(seed).spawn(4)`` gives boundary, chains
    (spawned ``K`` ways), plug-in and oracle streams in that order.
    """
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ValueError(f"unknown variants {sorted(unknown)}")
    if "oracle" in variants and mu_true is None:
        raise ValueError("oracle variant needs mu_true")
    sol = fit_lasso(ctx, y, lam) if solution is None else solution
    if sol.A.size == 0:
        raise EmptyModel("lasso selected no variables")
    geom = build_active_geometry(ctx, sol.A)
    init = default_init(sol, geom)
    ell = build_C_A(ctx, y, sol.A, alpha, sigma2)

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    ss_bound, ss_chains, ss_plug, ss_oracle = root.spawn(4)
    if conservative_center not in ("nu_hat", "plugin"):
        raise ValueError("conservative_center must be 'nu_hat' or 'plugin'")
    mus, nus = sample_boundary(ell, K, np.random.default_rng(ss_bound))
    nu_tilde = nus if conservative_center == "plugin" else None
    cfg = ChainConfig.for_draws(N, burn_in=burn_in, thin=thin,
                                tau_multiplier=tau_multiplier)
    chains = run_chains(ctx, geom, mus, sigma2, lam, init, cfg,
                        ss_chains.spawn(K), threads=threads)
    draws = ConditionedDraws.concat(
        draws_from_chain(ctx, geom, c, lam, k=k) for k, c in enumerate(chains))

    diagnostics = {"chains": _summarize(chains)}
    checked = matched = 0
    if verify_fraction > 0:
        for k, c in enumerate(chains):
            a, b = verify_chain_selection(ctx, geom, c, lam, verify_fraction, seed=k)
            checked += a
            matched += b
    diagnostics["selection_check"] = {"checked": checked, "matched": matched}

    single_cfg = ChainConfig.for_draws(K * N, burn_in=burn_in, thin=thin,
                                       tau_multiplier=tau_multiplier)
    plugin_draws = oracle_draws = None
    if "plugin" in variants:
        c = run_chains(ctx, geom, ell.mu_hat, sigma2, lam, init, single_cfg,
                       [ss_plug], threads=1)[0]
        plugin_draws = draws_from_chain(ctx, geom, c, lam)
        diagnostics["plugin_chain"] = _summarize([c])
    nu_true = None
    if "oracle" in variants:
        mu_true = np.asarray(mu_true, dtype=float)
        c = run_chains(ctx, geom, mu_true, sigma2, lam, init, single_cfg,
                       [ss_oracle], threads=1)[0]
        oracle_draws = draws_from_chain(ctx, geom, c, lam)
        nu_true = np.linalg.lstsq(ell.X_A, mu_true, rcond=None)[0]
        diagnostics["oracle_chain"] = _summarize([c])

    intervals = {}
    q = geom.q
    for v in variants:
        out = []
        for j in range(q):
            if v == "randomized":
                out.append(build_interval_randomized(draws, ell, j, alpha, method))
            elif v == "conservative":
                out.append(build_interval_conservative(draws, ell, j, alpha, method,
                                                       nu_tilde))
            elif v == "plugin":
                out.append(build_interval_plugin(plugin_draws, ell.nu_hat, j,
                                                 alpha, A=ell.A, method=method))
            else:
                out.append(build_interval_oracle(oracle_draws, ell.nu_hat,
                                                 nu_true, j, alpha, A=ell.A,
                                                 method=method))
        intervals[v] = out
    return InferenceResult(solution=sol, geometry=geom, ellipsoid=ell,
                           draws=draws, intervals=intervals, alpha=alpha,
                           diagnostics=diagnostics, plugin_draws=plugin_draws,
                           oracle_draws=oracle_draws, mu_tilde=mus)
