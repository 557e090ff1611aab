import numpy as np
import pytest
from scipy import stats

from postlasso.density import is_feasible
from postlasso.errors import EmptyModel, InconsistentSolution, InfeasibleInit
from postlasso.lasso import LassoSolution, fit_lasso
from postlasso.linalg import build_active_geometry, build_design_context
from postlasso.sampler import (ChainConfig, autocorrelation, chain_seeds, default_init,
                               run_chain, run_chains)


def _chain(problem, n_keep=2000, seed=0, **kw):
    ctx, y, lam, sol, _, geom = problem
    cfg = ChainConfig.for_draws(n_keep, burn_in=200, **kw)
    return run_chain(ctx, geom, y, 1.0, lam, default_init(sol, geom), cfg, rng=seed)


def test_deterministic_given_seed(problem):
    a, b, c = _chain(problem, seed=1), _chain(problem, seed=1), _chain(problem, seed=2)
    np.testing.assert_array_equal(a.b_A, b.b_A)
    np.testing.assert_array_equal(a.s_F, b.s_F)
    assert not np.array_equal(a.b_A, c.b_A)


def test_every_emitted_state_feasible(problem):
    out = _chain(problem, debug=True)
    geom = problem[5]
    assert all(is_feasible(geom, out.state(i, geom)) for i in range(0, len(out), 97))
    assert np.all(np.abs(out.s_F) <= 1) and np.all(np.abs(out.s_D) <= 1 + 1e-10)


def test_chain_moves_and_reports(problem):
    out = _chain(problem, thin=2)
    assert len(out) == 2000
    assert np.all((out.acceptance_b > 0) & (out.acceptance_b < 1))
    assert 0 < out.acceptance_sF.mean() < 1
    assert set(out.diagnostics["acf"]) == set(problem[5].A.tolist())


def test_run_chains_order_independent_of_threads(problem):
    ctx, y, lam, sol, _, geom = problem
    mus = y + 0.2 * np.random.default_rng(0).standard_normal((3, ctx.n))
    cfg = ChainConfig.for_draws(300, burn_in=50)
    init = default_init(sol, geom)
    one = run_chains(ctx, geom, mus, 1.0, lam, init, cfg, chain_seeds(5, 3), threads=1)
    many = run_chains(ctx, geom, mus, 1.0, lam, init, cfg, chain_seeds(5, 3), threads=3)
    for a, b in zip(one, many):
        np.testing.assert_array_equal(a.b_A, b.b_A)


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(n_iter=10, burn_in=10)
    with pytest.raises(ValueError):
        ChainConfig(n_iter=10, burn_in=0, thin=0)
    with pytest.raises(ValueError):
        ChainConfig(n_iter=10, burn_in=0, tau=[0.0])
    assert ChainConfig.for_draws(7, burn_in=3, thin=4).n_keep == 7


def test_init_errors(problem):
    ctx, y, lam, sol, _, geom = problem
    empty = LassoSolution(beta_hat=np.zeros(ctx.p), S=sol.S, A=np.zeros(0, int),
                          lam=lam, kkt_residual=0.0, n_iter=0)
    with pytest.raises(EmptyModel):
        default_init(empty, geom)
    S = sol.S.copy()
    S[geom.D[0]] += 0.01
    bad = LassoSolution(beta_hat=sol.beta_hat, S=S, A=sol.A, lam=lam,
                        kkt_residual=0.0, n_iter=0)
    with pytest.raises(InconsistentSolution):
        default_init(bad, geom)
    state = default_init(sol, geom)
    from postlasso.density import AugmentedState
    with pytest.raises(InfeasibleInit):
        run_chain(ctx, geom, y, 1.0, lam,
                  AugmentedState(state.b_A, state.s_F + 3, state.s_D, state.u),
                  ChainConfig.for_draws(10, burn_in=0))


def test_autocorrelation_white_noise():
    acf = autocorrelation(np.random.default_rng(0).standard_normal(20000))
    assert all(abs(v) < 0.03 for v in acf.values())


def test_p1_chain_matches_truncated_normal():
    # z = x'y/n ~ N(m, 1/n); given selection |z| > lam, beta = z - lam sign(z)
    n, lam = 40, 0.2
    x = np.ones((n, 1))
    y = np.full(n, 0.25)
    ctx = build_design_context(x, low_dimensional=True)
    sol = fit_lasso(ctx, y, lam)
    geom = build_active_geometry(ctx, sol.A)
    m, sd = 0.1, 1 / np.sqrt(n)
    out = run_chain(ctx, geom, np.full(n, m), 1.0, lam, default_init(sol, geom),
                    ChainConfig.for_draws(10000, burn_in=500, thin=5), rng=3)
    z = out.b_A[:, 0] + lam * np.sign(out.b_A[:, 0])
    lo, hi = stats.norm.cdf([-lam, lam], m, sd)
    mass = lo + 1 - hi

    def cdf(t):
        raw = stats.norm.cdf(t, m, sd)
        return np.where(t < -lam, raw, np.where(t < lam, lo, raw - (hi - lo))) / mass

    assert stats.kstest(z, cdf).statistic < 0.02
