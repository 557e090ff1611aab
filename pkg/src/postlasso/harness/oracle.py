"""Exact conditional draws by brute-force rejection (small problems only)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BudgetExhausted
from ..lasso import batch_signed_support
from ..reconstruction import ConditionedDraws

BATCH = 4096


@dataclass
class OracleResult:
    A: np.ndarray
    y_star: np.ndarray
    beta_A: np.ndarray
    S_I: np.ndarray
    nu_star: np.ndarray
    n_drawn: int

    @property
    def n_accept(self):
        return self.y_star.shape[0]

    @property
    def acceptance_rate(self):
        return self.n_accept / self.n_drawn if self.n_drawn else 0.0

    @property
    def draws(self):
        return ConditionedDraws(A=self.A, nu_star=self.nu_star,
                                k_index=np.zeros(self.n_accept, dtype=int),
                                y_star=self.y_star)


def rejection_oracle(ctx, mu_tilde, sigma2, lam, A_target, n_accept, max_draws,
                     rng=None, batch=BATCH):
    """Keep ``y* ~ N(mu_tilde, sigma2 I)`` whose lasso active set is ``A_target``.

    Signs are free; only the support is matched.  Raises
    :class:`BudgetExhausted` carrying the partial :class:`OracleResult` when
    ``max_draws`` responses have been drawn first.
    """
    if n_accept < 1:
        raise ValueError("n_accept must be >= 1")
    rng = np.random.default_rng(rng)
    A = np.unique(np.asarray(A_target, dtype=int))
    I = np.setdiff1d(np.arange(ctx.p), A)
    want = np.zeros(ctx.p, dtype=bool)
    want[A] = True
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    sd = np.sqrt(sigma2)
    XA = ctx.X[:, A]
    ys, betas, drawn, kept = [], [], 0, 0
    while kept < n_accept and drawn < max_draws:
        m = min(batch, max_draws - drawn)
        Y = mu_tilde + sd * rng.standard_normal((m, ctx.n))
        signs, B, _ = batch_signed_support(ctx, Y, lam)
        hit = np.all((signs != 0) == want, axis=1)
        idx = np.flatnonzero(hit)
        if kept + idx.size > n_accept:
            # stop exactly at the n_accept-th acceptance
            idx = idx[:n_accept - kept]
            m = int(idx[-1]) + 1
        ys.append(Y[idx])
        betas.append(B[idx])
        drawn += m
        kept += idx.size
    Y = np.vstack(ys) if ys else np.zeros((0, ctx.n))
    B = np.vstack(betas) if betas else np.zeros((0, ctx.p))
    S = (Y @ ctx.X / ctx.n - B @ ctx.Psi) / (lam * ctx.w)
    nu = np.linalg.lstsq(XA, Y.T, rcond=None)[0].T if Y.size else np.zeros((0, A.size))
    res = OracleResult(A=A, y_star=Y, beta_A=B[:, A], S_I=S[:, I],
                       nu_star=nu, n_drawn=drawn)
    if kept < n_accept:
        raise BudgetExhausted(
            f"accepted {kept} of {n_accept} after {drawn} draws", partial=res)
    return res


def mh_marginals(geom, chain):
    """``(b_A, S_I)`` from chain output, with ``S_I`` ordered like ``I``."""
    N = len(chain)
    S_I = np.empty((N, geom.I.size))
    S_I[:, geom.F_pos] = chain.s_F
    S_I[:, geom.D_pos] = chain.s_D
    return chain.b_A, S_I
