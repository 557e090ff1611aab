"""Weighted lasso via cyclic coordinate descent, plus lambda tuning.

Objective::

    (1/2n) ||y - X b||^2 + lam * sum_j w_j |b_j|

Everything runs on the Gram form ``Psi = X'X/n``, ``c = X'y/n``.  After
coordinate descent settles, the solution is polished by solving the KKT
equations on the detected support, which brings the KKT residual down to
round-off level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import DegenerateResponse, NoConvergence

KKT_TOL = 1e-8
CLAMP_TOL = 1e-10
OBJ_TOL = 1e-12
MAX_ITER = 100_000


@nb.njit(cache=True, nogil=True)
def _objective(beta, c, g, lam_w, yy):
    # 0.5 b'Psi b - c'b = -0.5 b'(c + g) when g = c - Psi b
    val = 0.0
    pen = 0.0
    for j in range(beta.shape[0]):
        val -= 0.5 * beta[j] * (c[j] + g[j])
        pen += lam_w[j] * abs(beta[j])
    return val + 0.5 * yy + pen


@nb.njit(cache=True, nogil=True)
def _cd(Psi, c, lam_w, beta, yy, max_iter, tol):
    p = beta.shape[0]
    g = c - Psi @ beta
    obj = _objective(beta, c, g, lam_w, yy)
    scale = max(1.0, abs(obj))
    for it in range(max_iter):
        for j in range(p):
            d = Psi[j, j]
            old = beta[j]
            z = g[j] + d * old
            if z > lam_w[j]:
                new = (z - lam_w[j]) / d
            elif z < -lam_w[j]:
                new = (z + lam_w[j]) / d
            else:
                new = 0.0
            if new != old:
                delta = new - old
                for i in range(p):
                    g[i] -= Psi[i, j] * delta
                beta[j] = new
        new_obj = _objective(beta, c, g, lam_w, yy)
        if obj - new_obj <= tol * scale:
            return it + 1, True
        obj = new_obj
    return max_iter, False


@nb.njit(cache=True, nogil=True)
def _polish(Psi, c, lam_w, beta):
    """Solve the KKT system on supp(beta); returns (beta_new, ok)."""
    p = beta.shape[0]
    idx = np.flatnonzero(beta)
    q = idx.shape[0]
    out = np.zeros(p)
    if q == 0:
        return out, True
    M = np.empty((q, q))
    rhs = np.empty(q)
    for a in range(q):
        ja = idx[a]
        rhs[a] = c[ja] - lam_w[ja] * np.sign(beta[ja])
        for b in range(q):
            M[a, b] = Psi[ja, idx[b]]
    sol = np.linalg.solve(M, rhs)
    for a in range(q):
        if np.sign(sol[a]) != np.sign(beta[idx[a]]):
            return beta, False
        out[idx[a]] = sol[a]
    g = c - Psi @ out
    for j in range(p):
        if out[j] == 0.0 and abs(g[j]) > lam_w[j] * (1.0 + 1e-10):
            return beta, False
    return out, True


@nb.njit(cache=True, nogil=True)
def _solve(Psi, c, lam_w, yy, max_iter, tol):
    beta = np.zeros(c.shape[0])
    total = 0
    converged = False
    while total < max_iter:
        it, converged = _cd(Psi, c, lam_w, beta, yy, max_iter - total, tol)
        total += it
        pol, ok = _polish(Psi, c, lam_w, beta)
        if ok:
            return pol, total, True
        if not converged:
            break
        # support not yet settled; tighten and keep sweeping
        tol *= 1e-2
        if tol < 1e-30:
            break
    return beta, total, converged


@nb.njit(cache=True, nogil=True)
def _batch_support(Psi, C, lam_w, max_iter, tol):
    """Signed supports for many responses (rows of ``C = Y X / n``)."""
    N, p = C.shape
    signs = np.zeros((N, p), dtype=np.int8)
    betas = np.zeros((N, p))
    ok = np.ones(N, dtype=np.bool_)
    for r in range(N):
        beta, _, conv = _solve(Psi, C[r], lam_w, 0.0, max_iter, tol)
        ok[r] = conv
        betas[r] = beta
        for j in range(p):
            if beta[j] > 0:
                signs[r, j] = 1
            elif beta[j] < 0:
                signs[r, j] = -1
    return signs, betas, ok


@dataclass(frozen=True)
class LassoSolution:
    beta_hat: np.ndarray
    S: np.ndarray
    A: np.ndarray
    lam: float
    kkt_residual: float
    n_iter: int = 0

    @property
    def signs(self):
        return np.sign(self.beta_hat[self.A]).astype(int)


def subgradient(Psi, c, beta, lam, w, clamp_tol=CLAMP_TOL):
    """Subgradient from the KKT equation; returns (S, kkt_residual)."""
    S = (c - Psi @ beta) / (lam * w)
    active = beta != 0
    resid = np.abs(S[active] - np.sign(beta[active])) * lam * w[active]
    inactive = ~active
    over = np.abs(S[inactive]) - 1.0
    viol = over > clamp_tol
    S[inactive] = np.clip(S[inactive], -1.0, 1.0)
    S[active] = np.sign(beta[active])
    kkt = float(np.max(resid, initial=0.0))
    if np.any(viol):
        kkt = max(kkt, float(np.max(over[viol] * lam * w[inactive][viol])))
    return S, kkt


def solve_lasso(Psi, c, lam, w, *, yy=0.0, kkt_tol=KKT_TOL, max_iter=MAX_ITER,
                tol=OBJ_TOL):
    """Gram-form solver used by :func:`fit_lasso` and cross-validation."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    Psi = np.ascontiguousarray(Psi, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    w = np.asarray(w, dtype=float)
    beta, it, converged = _solve(Psi, c, lam * w, float(yy), max_iter, tol)
    S, kkt = subgradient(Psi, c, beta, lam, w)
    if kkt > kkt_tol:
        raise NoConvergence(
            f"KKT residual {kkt:.3e} > {kkt_tol:.1e} after {it} sweeps "
            f"(objective converged: {bool(converged)})")
    A = np.flatnonzero(beta)
    return LassoSolution(beta_hat=beta, S=S, A=A, lam=float(lam),
                         kkt_residual=kkt, n_iter=int(it))


def fit_lasso(ctx, y, lam, **kwargs):
    """Fit the weighted lasso for response ``y`` on ``ctx``'s design."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (ctx.n,):
        raise ValueError(f"response must have length {ctx.n}")
    c = ctx.X.T @ y / ctx.n
    return solve_lasso(ctx.Psi, c, lam, ctx.w, yy=float(y @ y) / ctx.n,
                       **kwargs)


def batch_signed_support(ctx, Y, lam, *, max_iter=MAX_ITER, tol=OBJ_TOL):
    """Refit many responses at once; returns (signs N x p, betas, converged)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    C = np.ascontiguousarray(Y @ ctx.X / ctx.n)
    return _batch_support(np.ascontiguousarray(ctx.Psi), C, lam * ctx.w,
                          max_iter, tol)


def lambda_max(X, y, w=None):
    X = np.asarray(X, dtype=float)
    w = np.ones(X.shape[1]) if w is None else np.asarray(w, dtype=float)
    return float(np.max(np.abs(X.T @ y) / w) / X.shape[0])


def lambda_grid(ctx, y, count=20):
    """Decreasing, equally spaced grid from ``lambda_max`` towards zero.

    The zero endpoint is dropped, so with ``count`` points the grid is
    ``lambda_max * (count - i) / count`` for ``i = 0..count-1``.
    """
    if count < 2:
        raise ValueError("count must be at least 2")
    lmax = lambda_max(ctx.X, y, ctx.w)
    if not lmax > 0:
        raise DegenerateResponse("lambda_max is zero (X'y = 0)")
    return [lmax * (count - i) / count for i in range(count)]


def _fold_ids(n, folds, seed):
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def cv_curve(ctx, y, grid, folds=10, seed=0):
    """Held-out mean squared prediction error, shape (len(grid), folds)."""
    y = np.asarray(y, dtype=float)
    n = ctx.n
    if folds < 2 or n < folds:
        raise ValueError("need 2 <= folds <= n")
    ids = _fold_ids(n, folds, seed)
    err = np.empty((len(grid), folds))
    for f in range(folds):
        tr, te = ids != f, ids == f
        Xtr, ytr = ctx.X[tr], y[tr]
        ntr = Xtr.shape[0]
        Psi = Xtr.T @ Xtr / ntr
        c = Xtr.T @ ytr / ntr
        for i, lam in enumerate(grid):
            sol = solve_lasso(Psi, c, lam, ctx.w, yy=float(ytr @ ytr) / ntr)
            resid = y[te] - ctx.X[te] @ sol.beta_hat
            err[i, f] = np.mean(resid ** 2)
    return err


def cv_lambda_1se(ctx, y, folds=10, grid=None, seed=0, return_index=False):
    """Largest lambda whose CV error is within one SE of the minimum.

    Ties go to the larger lambda.
    """
    if grid is None:
        grid = lambda_grid(ctx, y, 20)
    grid = [float(g) for g in grid]
    if len(grid) == 1:
        return (grid[0], 0) if return_index else grid[0]
    err = cv_curve(ctx, y, grid, folds=folds, seed=seed)
    mean = err.mean(axis=1)
    i_min = int(np.argmin(mean))
    se = err[i_min].std(ddof=1) / np.sqrt(err.shape[1])
    ok = np.flatnonzero(mean <= mean[i_min] + se)
    best = max(ok, key=lambda i: (grid[i], -i))
    return (grid[best], int(best)) if return_index else grid[best]
