"""Map augmented-estimator draws back to response space.

Inverting the KKT equation gives

    y*  = X_A b_A + n lam (X')^+ (W_A s_A + W_I s_I)
    nu* = X_A^+ y* = b_A + n lam (X_A'X_A)^{-1} W_AA s_A

The second form needs only ``b_A`` and is what inference uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import assemble
from .lasso import batch_signed_support


@dataclass
class ConditionedDraws:
    """Draws of ``nu* = X_A^+ y*`` tagged by the plug-in mean that made them."""

    A: np.ndarray
    nu_star: np.ndarray
    k_index: np.ndarray
    y_star: np.ndarray | None = None

    def __len__(self):
        return self.nu_star.shape[0]

    def groups(self):
        """``(k, rows)`` pairs in increasing ``k``."""
        for k in np.unique(self.k_index):
            yield int(k), self.nu_star[self.k_index == k]

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        ys = [p.y_star for p in parts]
        return cls(A=parts[0].A,
                   nu_star=np.vstack([p.nu_star for p in parts]),
                   k_index=np.concatenate([p.k_index for p in parts]),
                   y_star=None if any(y is None for y in ys) else np.vstack(ys))


def reconstruct_y(ctx, geom, state, lam):
    """Response whose lasso fit is ``state``.

    In low-dimensional mode ``col(X)`` is a proper subspace of R^n, so this
    returns the projection of the response onto it; the orthogonal part does
    not affect the fit or ``nu*``.
    """
    beta, S = assemble(ctx, geom, state)
    return ctx.X @ beta + ctx.n * lam * (ctx.Xt_pinv @ (ctx.w * S))


def _nu_offset(ctx, geom, lam):
    XA = ctx.X[:, geom.A]
    return ctx.n * lam * np.linalg.solve(XA.T @ XA, np.diag(ctx.w[geom.A]))


def project_nu(ctx, geom, state, lam):
    return state.b_A + _nu_offset(ctx, geom, lam) @ np.sign(state.b_A)


def project_nu_batch(ctx, geom, b_A, lam):
    """Row-wise ``project_nu`` for an (N, q) array of active coefficients."""
    b_A = np.atleast_2d(b_A)
    return b_A + np.sign(b_A) @ _nu_offset(ctx, geom, lam).T


def reconstruct_y_batch(ctx, geom, chain, lam):
    """Row-wise ``reconstruct_y`` for a :class:`ChainOutput`."""
    N = len(chain)
    WS = np.zeros((N, ctx.p))
    WS[:, geom.A] = np.sign(chain.b_A)
    WS[:, geom.F] = chain.s_F
    WS[:, geom.D] = chain.s_D
    WS *= ctx.w
    return chain.b_A @ ctx.X[:, geom.A].T + ctx.n * lam * (WS @ ctx.Xt_pinv.T)


def draws_from_chain(ctx, geom, chain, lam, k=0, keep_y=False):
    nu = project_nu_batch(ctx, geom, chain.b_A, lam)
    y = reconstruct_y_batch(ctx, geom, chain, lam) if keep_y else None
    return ConditionedDraws(A=geom.A, nu_star=nu,
                            k_index=np.full(nu.shape[0], k, dtype=int), y_star=y)


def verify_selection(ctx, geom, y_star, signs, lam, fraction=1.0, seed=0):
    """Refit a fraction of the ``y*`` rows; returns (n_checked, n_matching).

    A row matches when the refit active set equals ``A`` with the given signs.
    """
    y_star = np.atleast_2d(y_star)
    N = y_star.shape[0]
    if fraction >= 1.0:
        rows = np.arange(N)
    else:
        m = max(1, int(round(fraction * N)))
        rows = np.sort(np.random.default_rng(seed).choice(N, m, replace=False))
    got, _, _ = batch_signed_support(ctx, y_star[rows], lam)
    want = np.zeros(ctx.p, dtype=np.int8)
    want[geom.A] = np.asarray(signs, dtype=np.int8)
    match = np.all(got == want, axis=1)
    return rows.shape[0], int(match.sum())


def verify_chain_selection(ctx, geom, chain, lam, fraction=1.0, seed=0):
    """Check that reconstructed responses reproduce the active set.

    Signs vary across draws (sign changes are allowed moves), so each row is
    compared against its own ``sign(b_A)``.
    """
    y_star = reconstruct_y_batch(ctx, geom, chain, lam)
    N = y_star.shape[0]
    if fraction >= 1.0:
        rows = np.arange(N)
    else:
        m = max(1, int(round(fraction * N)))
        rows = np.sort(np.random.default_rng(seed).choice(N, m, replace=False))
    got, _, _ = batch_signed_support(ctx, y_star[rows], lam)
    want = np.zeros((rows.shape[0], ctx.p), dtype=np.int8)
    want[:, geom.A] = np.sign(chain.b_A[rows]).astype(np.int8)
    match = np.all(got == want, axis=1)
    return rows.shape[0], int(match.sum())
