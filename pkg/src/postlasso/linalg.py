"""Design factorizations and active-set constraint geometry.

The design ``X`` (n x p, p > n, full row rank) is factored once into a
:class:`DesignContext`.  For a fixed active set ``A`` the equality
constraint on the inactive subgradient, ``G s_I = u(s_A)``, is split into
free and dependent coordinates and stored in an :class:`ActiveSetGeometry`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateGeometry, NonPositiveWeight, RankDeficient

ORTHO_TOL = 1e-10
RESID_TOL = 1e-8
COND_CAP = 1e10


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _fix_signs(V, tol=1e-12):
    # first entry of each column exceeding tol is made positive
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return V


@dataclass(frozen=True)
class DesignContext:
    """Fixed design with its Gram eigendecomposition.

    ``V_R`` holds orthonormal eigenvectors of ``Psi = X'X/n`` for the
    positive eigenvalues ``Lambda``; ``V_N`` spans ``null(X)``.  ``Xt_pinv``
    is the pseudoinverse of ``X'`` (shape n x p), cached for reconstruction.
    """

    X: np.ndarray
    w: np.ndarray
    n: int
    p: int
    Psi: np.ndarray
    V_R: np.ndarray
    V_N: np.ndarray
    Lambda: np.ndarray
    Xt_pinv: np.ndarray
    low_dimensional: bool = False

    @property
    def rank(self):
        return self.Lambda.shape[0]

    def check(self, ortho_tol=ORTHO_TOL, resid_tol=RESID_TOL):
        """Assert the factorization invariants; returns the residuals."""
        V = np.hstack([self.V_R, self.V_N])
        ortho = np.max(np.abs(V.T @ V - np.eye(self.p)))
        scale = max(1.0, float(np.max(self.Lambda)))
        eig = np.max(np.abs(self.Psi @ self.V_R - self.V_R * self.Lambda)) / scale
        xscale = max(1.0, float(np.max(np.abs(self.X))))
        null = np.max(np.abs(self.X @ self.V_N), initial=0.0) / xscale
        if ortho > ortho_tol or eig > resid_tol or null > resid_tol:
            raise AssertionError(
                f"design factorization residuals too large: ortho={ortho:.2e}, "
                f"eig={eig:.2e}, null={null:.2e}")
        return ortho, eig, null


def build_design_context(X, w=None, *, low_dimensional=False, rank_tol=None):
    """Factor a design matrix.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Design.  Requires ``p > n >= 2`` and rank ``n`` unless
        ``low_dimensional`` is set, in which case ``p <= n`` with full column
        rank is accepted (row space is then all of R^p and there are no
        null-space constraints).
    w : array_like, shape (p,), optional
        Positive penalty weights, all ones by default.
    """
    X = np.array(X, dtype=float, ndmin=2)
    n, p = X.shape
    w = np.ones(p) if w is None else np.asarray(w, dtype=float).reshape(-1)
    if w.shape != (p,):
        raise ValueError(f"weights must have length {p}, got {w.shape}")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise NonPositiveWeight("all penalty weights must be positive")
    if not np.all(np.isfinite(X)):
        raise ValueError("design contains non-finite entries")
    if low_dimensional:
        if p > n:
            raise ValueError("low_dimensional mode requires p <= n")
    elif n < 2 or p <= n:
        raise ValueError(f"need p > n >= 2, got n={n}, p={p}")

    U, s, Vt = np.linalg.svd(X, full_matrices=True)
    m = min(n, p)
    if rank_tol is None:
        rank_tol = max(n, p) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > rank_tol))
    if rank < m:
        raise RankDeficient(f"numerical rank {rank} < {m}")

    V = _fix_signs(Vt.T)
    # keep U consistent with the sign flips applied to V
    flips = np.sign(np.sum(V[:, :m] * Vt.T[:, :m], axis=0))
    U_m = U[:, :m] * flips
    V_R = V[:, :m]
    V_N = V[:, m:]
    Lambda = s[:m] ** 2 / n
    Xt_pinv = (U_m / s[:m]) @ V_R.T
    Psi = X.T @ X / n
    return DesignContext(
        X=_frozen(X), w=_frozen(w), n=n, p=p, Psi=_frozen(Psi),
        V_R=_frozen(V_R), V_N=_frozen(V_N), Lambda=_frozen(Lambda),
        Xt_pinv=_frozen(Xt_pinv), low_dimensional=low_dimensional)


@dataclass(frozen=True)
class ActiveSetGeometry:
    """Constraint machinery for a fixed active set.

    Positions ``F_pos``/``D_pos`` index into ``I``; ``F``/``D`` are the
    corresponding variable indices.  With ``s_A = sign(b_A)`` the dependent
    subgradient is ``s_D = C_A @ s_A - E @ s_F`` where ``E = G_D^{-1} G_F``
    and ``C_A @ s_A = G_D^{-1} u(s_A)``.
    """

    A: np.ndarray
    I: np.ndarray
    F: np.ndarray
    D: np.ndarray
    F_pos: np.ndarray
    D_pos: np.ndarray
    G: np.ndarray
    G_F: np.ndarray
    G_D: np.ndarray
    G_D_lu: tuple = field(repr=False)
    E: np.ndarray = field(repr=False)
    C_A: np.ndarray = field(repr=False)
    U_A: np.ndarray = field(repr=False)
    B_I: np.ndarray = field(repr=False)
    cond_G_D: float = 1.0

    @property
    def q(self):
        return self.A.shape[0]

    @property
    def n_free(self):
        return self.F.shape[0]

    @property
    def n_dep(self):
        return self.D.shape[0]

    def u(self, s_A):
        """``u(s_A) = -V_AN' W_AA s_A``."""
        return self.U_A @ np.asarray(s_A, dtype=float)

    def solve_G_D(self, rhs):
        if self.n_dep == 0:
            return np.zeros((0,) + np.shape(rhs)[1:])
        return sla.lu_solve(self.G_D_lu, rhs)

    def t_matrix(self, ctx, lam):
        """The n x n Jacobian factor ``[V_R' Psi_A | lam V_IR' W_II B(I)]``."""
        left = ctx.V_R.T @ ctx.Psi[:, self.A]
        right = lam * ctx.V_R[self.I].T @ (ctx.w[self.I, None] * self.B_I)
        return np.hstack([left, right])

    def log_abs_det_t(self, ctx, lam):
        return float(np.linalg.slogdet(self.t_matrix(ctx, lam))[1])


def build_active_geometry(ctx, A, *, cond_cap=COND_CAP):
    """Partition the inactive subgradient for active set ``A``.

    The dependent set ``D`` is chosen by column-pivoted QR on ``G`` so that
    ``G_D`` is as well conditioned as the pivoting can make it.
    """
    A = np.unique(np.asarray(A, dtype=int).reshape(-1))
    m = ctx.rank
    q = A.shape[0]
    if q < 1 or q > m:
        raise ValueError(f"active set size must be in [1, {m}], got {q}")
    if A[0] < 0 or A[-1] >= ctx.p:
        raise ValueError("active index out of range")
    I = np.setdiff1d(np.arange(ctx.p), A)
    n_dep = ctx.p - m
    w = ctx.w

    G = ctx.V_N[I].T * w[I]          # (p-m) x |I|
    U_A = -(ctx.V_N[A].T * w[A])     # u(s_A) = U_A @ s_A
    if n_dep > 0:
        _, piv = sla.qr(G, mode="r", pivoting=True)
        D_pos = np.sort(piv[:n_dep])
        F_pos = np.sort(piv[n_dep:])
        G_D = G[:, D_pos]
        cond = float(np.linalg.cond(G_D))
        if not np.isfinite(cond) or cond > cond_cap:
            raise DegenerateGeometry(
                f"G_D condition number {cond:.3g} exceeds cap {cond_cap:.3g}")
        lu = sla.lu_factor(G_D)
        G_F = G[:, F_pos]
        E = sla.lu_solve(lu, G_F)
        C_A = sla.lu_solve(lu, U_A)
        B_I = sla.null_space(G)
        if B_I.shape[1] != m - q:
            raise DegenerateGeometry(
                f"null(G) has dimension {B_I.shape[1]}, expected {m - q}")
    else:
        D_pos = np.zeros(0, dtype=int)
        F_pos = np.arange(I.shape[0])
        G_D = np.zeros((0, 0))
        G_F = G
        lu = None
        cond = 1.0
        E = np.zeros((0, I.shape[0]))
        C_A = np.zeros((0, q))
        B_I = np.eye(I.shape[0])

    return ActiveSetGeometry(
        A=A, I=I, F=I[F_pos], D=I[D_pos], F_pos=F_pos, D_pos=D_pos,
        G=_frozen(G), G_F=_frozen(G_F), G_D=_frozen(G_D), G_D_lu=lu,
        E=_frozen(E), C_A=_frozen(C_A), U_A=_frozen(U_A), B_I=_frozen(B_I),
        cond_G_D=cond)
