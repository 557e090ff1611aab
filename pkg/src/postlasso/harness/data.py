"""Synthetic regression data under fixed covariance designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

DESIGNS = ("identity", "toeplitz", "exp_decay", "equicorrelation")
TOEPLITZ_RHO = 0.5
EXP_DECAY_RHO = 0.4
EQUICORR_RHO = 0.7


def a0_preset(name, p, size=5):
    """0-based true support: ``contiguous`` = first ``size`` indices,
    ``spread`` = ``size`` indices evenly spaced ``p/size`` apart."""
    if size > p:
        raise ValueError("support larger than p")
    if name == "contiguous":
        return np.arange(size)
    if name == "spread":
        return np.arange(size) * (p // size)
    raise ValueError(f"unknown A0 preset {name!r}")


def _powers(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def covariance(kind, p):
    """Row covariance of ``X`` (for ``exp_decay`` this inverts the precision;
    use :func:`precision` when only the factor is needed)."""
    if kind == "identity":
        return np.eye(p)
    if kind == "toeplitz":
        return _powers(p, TOEPLITZ_RHO)
    if kind == "exp_decay":
        return np.linalg.inv(_powers(p, EXP_DECAY_RHO))
    if kind == "equicorrelation":
        S = np.full((p, p), EQUICORR_RHO)
        np.fill_diagonal(S, 1.0)
        return S
    raise ValueError(f"unknown design {kind!r}")


def precision(p):
    return _powers(p, EXP_DECAY_RHO)


def sample_design(kind, n, p, rng):
    Z = rng.standard_normal((n, p))
    if kind == "identity":
        return Z
    if kind == "exp_decay":
        # rows L^{-T} z have covariance (L L')^{-1} with L L' the precision
        L = np.linalg.cholesky(precision(p))
        return sla.solve_triangular(L.T, Z.T, lower=False).T
    L = np.linalg.cholesky(covariance(kind, p))
    return Z @ L.T


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    n: int
    p: int
    A0: tuple
    sigma2: float = 1.0
    beta_low: float = -1.0
    beta_high: float = 1.0
    seed: object = 0

    def __post_init__(self):
        if self.kind not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}")
        if len(self.A0) > self.p or (len(self.A0) and max(self.A0) >= self.p):
            raise ValueError("A0 does not fit in p columns")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    beta0: np.ndarray
    mu0: np.ndarray


def generate_dataset(spec):
    """Draw ``X``, then ``beta0`` on ``A0`` (uniform), then the noise."""
    rng = np.random.default_rng(spec.seed)
    X = sample_design(spec.kind, spec.n, spec.p, rng)
    A0 = np.asarray(spec.A0, dtype=int)
    beta0 = np.zeros(spec.p)
    beta0[A0] = rng.uniform(spec.beta_low, spec.beta_high, A0.size)
    mu0 = X[:, A0] @ beta0[A0]
    y = mu0 + np.sqrt(spec.sigma2) * rng.standard_normal(spec.n)
    return Dataset(X=X, y=y, beta0=beta0, mu0=mu0)
