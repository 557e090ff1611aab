"""Conditional density of the augmented lasso estimator given its support.

A state is ``theta = (b_A, s_F)``; the dependent subgradient ``s_D`` follows
from the null-space constraint.  The unnormalized log target is

    log pi(theta) = -(n / 2 sigma^2) * sum_i r_i^2 / Lambda_i,
    r = V_R' (Psi beta + lam W S - X' mu / n),

and is ``-inf`` outside the feasible region ``|s_F|, |s_D| <= 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRange

FEAS_TOL = 1e-10
ZERO_SLOPE = 1e-12


@dataclass(frozen=True)
class AugmentedState:
    b_A: np.ndarray
    s_F: np.ndarray
    s_D: np.ndarray
    u: np.ndarray

    @property
    def s_A(self):
        return np.sign(self.b_A)


def resolve_dependent(geom, s_A, s_F):
    """``s_D = G_D^{-1} (u(s_A) - G_F s_F)``; no box check."""
    s_F = np.asarray(s_F, dtype=float)
    return geom.solve_G_D(geom.u(s_A) - geom.G_F @ s_F)


def make_state(geom, b_A, s_F):
    b_A = np.array(b_A, dtype=float).reshape(-1)
    s_F = np.array(s_F, dtype=float).reshape(-1)
    if b_A.shape != (geom.q,) or s_F.shape != (geom.n_free,):
        raise ValueError("state dimensions do not match the geometry")
    s_A = np.sign(b_A)
    return AugmentedState(b_A=b_A, s_F=s_F,
                          s_D=resolve_dependent(geom, s_A, s_F),
                          u=geom.u(s_A))


def is_feasible(geom, state, tol=FEAS_TOL):
    if np.any(state.b_A == 0):
        return False
    if np.max(np.abs(state.s_F), initial=0.0) > 1 + tol:
        return False
    if np.max(np.abs(state.s_D), initial=0.0) > 1 + tol:
        return False
    if geom.n_dep:
        scale = max(1.0, float(np.max(np.abs(geom.G))))
        resid = geom.G_F @ state.s_F + geom.G_D @ state.s_D - state.u
        if np.max(np.abs(resid)) > 1e-8 * scale:
            return False
    return True


def assemble(ctx, geom, state):
    """Full p-vectors ``(beta, S)`` for a state."""
    beta = np.zeros(ctx.p)
    beta[geom.A] = state.b_A
    S = np.zeros(ctx.p)
    S[geom.A] = np.sign(state.b_A)
    S[geom.F] = state.s_F
    S[geom.D] = state.s_D
    return beta, S


def h_map(ctx, geom, state, mu, lam):
    """Coordinates ``V_R' H(theta; mu, lam)`` of the KKT residual map."""
    beta, S = assemble(ctx, geom, state)
    H = ctx.Psi @ beta + lam * ctx.w * S - ctx.X.T @ np.asarray(mu) / ctx.n
    return ctx.V_R.T @ H


def log_density(ctx, geom, state, mu, sigma2, lam):
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if not is_feasible(geom, state):
        return -np.inf
    r = h_map(ctx, geom, state, mu, lam)
    return float(-0.5 * ctx.n / sigma2 * np.sum(r * r / ctx.Lambda))


@dataclass(frozen=True)
class DensityTerms:
    """``r = P_b b_A + P_sA s_A + P_sF s_F + r0`` with ``s_D`` eliminated."""

    P_b: np.ndarray
    P_sA: np.ndarray
    P_sF: np.ndarray
    r0: np.ndarray
    inv_lambda: np.ndarray
    scale: float

    def r(self, b_A, s_F):
        return self.P_b @ b_A + self.P_sA @ np.sign(b_A) + self.P_sF @ s_F + self.r0

    def log_density(self, r):
        return -self.scale * float(np.sum(r * r * self.inv_lambda))


def density_terms(ctx, geom, mu, sigma2, lam):
    VR, w = ctx.V_R, ctx.w
    A, F, D = geom.A, geom.F, geom.D
    P_b = VR.T @ ctx.Psi[:, A]
    VDw = VR[D].T * w[D] if D.size else np.zeros((ctx.rank, 0))
    P_sA = lam * (VR[A].T * w[A] + VDw @ geom.C_A)
    P_sF = lam * (VR[F].T * w[F] - VDw @ geom.E)
    r0 = -VR.T @ (ctx.X.T @ np.asarray(mu, dtype=float)) / ctx.n
    return DensityTerms(P_b=np.ascontiguousarray(P_b),
                        P_sA=np.ascontiguousarray(P_sA),
                        P_sF=np.ascontiguousarray(P_sF),
                        r0=r0, inv_lambda=1.0 / ctx.Lambda,
                        scale=0.5 * ctx.n / sigma2)


def slice_bounds(a, e, zero_slope=ZERO_SLOPE):
    """Interval of ``v`` in [-1, 1] keeping ``|a - e v|_inf <= 1``.

    Rows with ``|e_j| <= zero_slope`` do not constrain ``v``.
    """
    lo, hi = -1.0, 1.0
    for aj, ej in zip(a, e):
        if ej > zero_slope:
            lo = max(lo, (aj - 1.0) / ej)
            hi = min(hi, (aj + 1.0) / ej)
        elif ej < -zero_slope:
            lo = max(lo, (aj + 1.0) / ej)
            hi = min(hi, (aj - 1.0) / ej)
    return lo, hi


def proposal_bounds(geom, s_A, s_F, k):
    """Feasible range ``[LB_k, UB_k]`` for free coordinate ``k``.

    Holding ``s_A`` and the other free coordinates fixed, ``s_D`` is affine
    in ``v = (s_F)_k``: ``s_D(v) = a - E[:, k] v``.  Each of the ``p - n``
    rows gives two half-lines; negative slopes swap which of ``+-1`` gives
    the lower bound.
    """
    s_F = np.asarray(s_F, dtype=float)
    e = geom.E[:, k]
    a = geom.C_A @ np.asarray(s_A, dtype=float) - geom.E @ s_F + e * s_F[k]
    lo, hi = slice_bounds(a, e)
    if not hi > lo:
        raise EmptyRange(f"empty proposal range [{lo}, {hi}] for free coordinate {k}")
    return lo, hi
