"""Coordinate-wise Metropolis-Hastings over the augmented state (b_A, s_F).

One sweep updates every active coefficient with a Gaussian random-walk
proposal and then every free subgradient coordinate with a uniform draw on
its currently feasible slice.  Both proposals are symmetric, so acceptance
uses the target density ratio alone.  A sign flip of ``b_i`` that would push
``s_D`` outside the unit box is skipped without counting as a rejection.

Random numbers are drawn with numpy in chunks and handed to a compiled sweep
kernel, so a chain is a deterministic function of its seed.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .density import (ZERO_SLOPE, AugmentedState, density_terms, is_feasible,
                      make_state)
from .errors import EmptyModel, EmptyRange, InconsistentSolution, InfeasibleInit

DEFAULT_BURN_IN = 1000
ACF_LAGS = (1, 5, 10, 50)
_CHUNK_CELLS = 1 << 20


@nb.njit(cache=True, nogil=True)
def _matvec(M, x):
    out = np.zeros(M.shape[0])
    for i in range(M.shape[0]):
        acc = 0.0
        for j in range(M.shape[1]):
            acc += M[i, j] * x[j]
        out[i] = acc
    return out


@nb.njit(cache=True, nogil=True)
def _sweeps(b, sF, P_b, P_sA, P_sF, r0, C_A, E, inv_lam, scale, tau,
            z_b, u_b, u_F, u_Fa, t0, burn_in, thin,
            out_b, out_sF, out_sD, n_out,
            acc_b, skip_b, acc_F, zero_slope):
    q = b.shape[0]
    nf = sF.shape[0]
    nd = C_A.shape[0]
    m = r0.shape[0]
    sA = np.sign(b)
    rn = np.empty(m)
    for t in range(z_b.shape[0]):
        sD = _matvec(C_A, sA) - _matvec(E, sF)
        r = _matvec(P_b, b) + _matvec(P_sA, sA) + _matvec(P_sF, sF) + r0
        lp = 0.0
        for l in range(m):
            lp += r[l] * r[l] * inv_lam[l]
        lp *= -scale

        for i in range(q):
            bnew = b[i] + tau[i] * z_b[t, i]
            snew = np.sign(bnew)
            if snew == 0.0:
                skip_b[i] += 1
                continue
            ds = snew - sA[i]
            if ds != 0.0:
                feasible = True
                for j in range(nd):
                    if abs(sD[j] + C_A[j, i] * ds) > 1.0:
                        feasible = False
                        break
                if not feasible:
                    skip_b[i] += 1
                    continue
            db = bnew - b[i]
            lpn = 0.0
            for l in range(m):
                v = r[l] + P_b[l, i] * db + P_sA[l, i] * ds
                rn[l] = v
                lpn += v * v * inv_lam[l]
            lpn *= -scale
            if np.log(u_b[t, i]) < lpn - lp:
                b[i] = bnew
                sA[i] = snew
                lp = lpn
                for l in range(m):
                    r[l] = rn[l]
                if ds != 0.0:
                    for j in range(nd):
                        sD[j] += C_A[j, i] * ds
                acc_b[i] += 1

        for k in range(nf):
            lo = -1.0
            hi = 1.0
            cur = sF[k]
            for j in range(nd):
                e = E[j, k]
                a = sD[j] + e * cur
                if e > zero_slope:
                    lo = max(lo, (a - 1.0) / e)
                    hi = min(hi, (a + 1.0) / e)
                elif e < -zero_slope:
                    lo = max(lo, (a + 1.0) / e)
                    hi = min(hi, (a - 1.0) / e)
            if not hi > lo:
                return t0 + t, k
            v = lo + (hi - lo) * u_F[t, k]
            dv = v - cur
            lpn = 0.0
            for l in range(m):
                x = r[l] + P_sF[l, k] * dv
                rn[l] = x
                lpn += x * x * inv_lam[l]
            lpn *= -scale
            if np.log(u_Fa[t, k]) < lpn - lp:
                sF[k] = v
                lp = lpn
                for l in range(m):
                    r[l] = rn[l]
                for j in range(nd):
                    sD[j] -= E[j, k] * dv
                acc_F[k] += 1

        tt = t0 + t
        if tt >= burn_in and (tt - burn_in) % thin == 0:
            out_b[n_out] = b
            out_sF[n_out] = sF
            out_sD[n_out] = _matvec(C_A, sA) - _matvec(E, sF)
            n_out += 1
    return -1, n_out


@dataclass(frozen=True)
class ChainConfig:
    """Chain length settings.  ``n_iter`` counts sweeps including burn-in."""

    n_iter: int
    burn_in: int = DEFAULT_BURN_IN
    thin: int = 1
    tau: np.ndarray | None = None
    seed: int = 0
    tau_multiplier: float = 2.0
    debug: bool = False

    def __post_init__(self):
        if not self.n_iter > self.burn_in >= 0:
            raise ValueError("need n_iter > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.tau is not None and np.any(np.asarray(self.tau) <= 0):
            raise ValueError("proposal scales must be positive")
        if not self.tau_multiplier > 0:
            raise ValueError("tau multiplier must be positive")

    @classmethod
    def for_draws(cls, n_keep, burn_in=DEFAULT_BURN_IN, thin=1, **kw):
        return cls(n_iter=burn_in + n_keep * thin, burn_in=burn_in,
                   thin=thin, **kw)

    @property
    def n_keep(self):
        return -(-(self.n_iter - self.burn_in) // self.thin)


@dataclass
class ChainOutput:
    A: np.ndarray
    b_A: np.ndarray
    s_F: np.ndarray
    s_D: np.ndarray
    acceptance_b: np.ndarray
    acceptance_sF: np.ndarray
    skipped_b: np.ndarray
    tau: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return self.b_A.shape[0]

    def state(self, i, geom=None):
        u = geom.u(np.sign(self.b_A[i])) if geom is not None else None
        return AugmentedState(b_A=self.b_A[i], s_F=self.s_F[i],
                              s_D=self.s_D[i], u=u)

    def states(self, geom):
        return [self.state(i, geom) for i in range(len(self))]


def autocorrelation(x, lags=ACF_LAGS):
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    var = float(x @ x)
    out = {}
    for lag in lags:
        if lag < x.shape[0]:
            out[lag] = float(x[:-lag] @ x[lag:]) / var if var > 0 else 1.0
    return out


def default_tau(ctx, geom, sigma2, multiplier=2.0):
    """Per-coefficient scale ``multiplier * sigma * se_LS``."""
    if not multiplier > 0:
        raise ValueError("tau multiplier must be positive")
    XA = ctx.X[:, geom.A]
    diag = np.diag(np.linalg.inv(XA.T @ XA))
    return multiplier * np.sqrt(sigma2 * diag)


def default_init(solution, geom, tol=1e-6):
    """Start the chain at the observed augmented estimator."""
    if solution.A.size == 0:
        raise EmptyModel("lasso selected no variables")
    if not np.array_equal(solution.A, geom.A):
        raise ValueError("solution active set differs from the geometry's")
    state = make_state(geom, solution.beta_hat[geom.A], solution.S[geom.F])
    dev = np.max(np.abs(state.s_D - solution.S[geom.D]), initial=0.0)
    if dev > tol:
        raise InconsistentSolution(
            f"recomputed s_D deviates from observed subgradient by {dev:.3e}")
    return state


def run_chain(ctx, geom, mu_tilde, sigma2, lam, init, cfg, rng=None):
    """Run one chain targeting the conditional law at mean ``mu_tilde``."""
    if not is_feasible(geom, init):
        raise InfeasibleInit("initial state violates the feasibility constraints")
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    terms = density_terms(ctx, geom, mu_tilde, sigma2, lam)
    tau = (default_tau(ctx, geom, sigma2, cfg.tau_multiplier)
           if cfg.tau is None else np.asarray(cfg.tau, dtype=float))
    if tau.shape != (geom.q,):
        raise ValueError("tau must have one entry per active variable")

    q, nf, nd = geom.q, geom.n_free, geom.n_dep
    n_keep = cfg.n_keep
    b = np.array(init.b_A, dtype=float)
    sF = np.array(init.s_F, dtype=float)
    out_b = np.empty((n_keep, q))
    out_sF = np.empty((n_keep, nf))
    out_sD = np.empty((n_keep, nd))
    acc_b = np.zeros(q, dtype=np.int64)
    skip_b = np.zeros(q, dtype=np.int64)
    acc_F = np.zeros(nf, dtype=np.int64)
    C_A = np.ascontiguousarray(geom.C_A)
    E = np.ascontiguousarray(geom.E)

    chunk = max(1, _CHUNK_CELLS // max(1, q + nf))
    n_out = 0
    t = 0
    while t < cfg.n_iter:
        T = min(chunk, cfg.n_iter - t)
        z_b = rng.standard_normal((T, q))
        u_b = rng.random((T, q))
        u_F = rng.random((T, nf))
        u_Fa = rng.random((T, nf))
        bad, res = _sweeps(b, sF, terms.P_b, terms.P_sA, terms.P_sF,
                             terms.r0, C_A, E, terms.inv_lambda, terms.scale,
                             tau, z_b, u_b, u_F, u_Fa, t, cfg.burn_in,
                             cfg.thin, out_b, out_sF, out_sD, n_out,
                             acc_b, skip_b, acc_F, ZERO_SLOPE)
        if bad >= 0:
            raise EmptyRange(f"empty slice for free coordinate {res} at sweep {bad}")
        n_out = res
        t += T

    out = ChainOutput(
        A=geom.A, b_A=out_b, s_F=out_sF, s_D=out_sD,
        acceptance_b=acc_b / cfg.n_iter, acceptance_sF=acc_F / cfg.n_iter,
        skipped_b=skip_b / cfg.n_iter, tau=tau,
        diagnostics={"acf": {int(j): autocorrelation(out_b[:, a])
                             for a, j in enumerate(geom.A)}})
    if cfg.debug:
        bad_rows = [i for i in range(n_keep) if not is_feasible(geom, out.state(i, geom))]
        if bad_rows:
            raise AssertionError(f"{len(bad_rows)} emitted states are infeasible")
    return out


def chain_seeds(master_seed, k):
    """Independent child streams: ``SeedSequence(master).spawn(k)``."""
    return np.random.SeedSequence(master_seed).spawn(k)


def default_threads():
    env = os.environ.get("POSTLASSO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_chains(ctx, geom, mus, sigma2, lam, init, cfg, seeds, threads=None):
    """Run one chain per row of ``mus``, each with its own seed sequence.

    Output order follows ``mus`` regardless of scheduling.
    """
    mus = np.atleast_2d(mus)
    if len(seeds) != mus.shape[0]:
        raise ValueError("need one seed per chain")
    threads = default_threads() if threads is None else max(1, int(threads))

    def one(k):
        rng = np.random.default_rng(seeds[k])
        return run_chain(ctx, geom, mus[k], sigma2, lam, init, cfg, rng=rng)

    if threads == 1 or mus.shape[0] == 1:
        return [one(k) for k in range(mus.shape[0])]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, range(mus.shape[0])))
