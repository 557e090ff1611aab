import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from postlasso.errors import DegenerateGeometry, NonPositiveWeight, RankDeficient
from postlasso.linalg import build_active_geometry, build_design_context


def test_two_copies_of_identity_by_hand():
    # X'X/2 = [[I, I], [I, I]]/2 has eigenvalues 1, 1, 0, 0
    X = np.hstack([np.eye(2), np.eye(2)])
    ctx = build_design_context(X)
    np.testing.assert_allclose(ctx.Lambda, [1.0, 1.0], atol=1e-14)
    proj = ctx.V_R @ ctx.V_R.T
    np.testing.assert_allclose(proj, 0.5 * np.block([[np.eye(2), np.eye(2)]] * 2), atol=1e-14)
    np.testing.assert_allclose(ctx.X @ ctx.V_N, 0, atol=1e-14)
    ctx.check()


def test_sign_convention_first_nonzero_positive():
    X = np.random.default_rng(1).standard_normal((6, 11))
    ctx = build_design_context(X)
    for V in (ctx.V_R, ctx.V_N):
        for col in V.T:
            assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_pinv_of_transpose():
    X = np.random.default_rng(2).standard_normal((7, 13))
    ctx = build_design_context(X)
    np.testing.assert_allclose(ctx.Xt_pinv, np.linalg.pinv(X.T), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 12), extra=st.integers(1, 15), seed=st.integers(0, 10**6))
def test_factorization_invariants(n, extra, seed):
    X = np.random.default_rng(seed).standard_normal((n, n + extra))
    ortho, eig, null = build_design_context(X).check()
    assert ortho <= 1e-10 and eig <= 1e-8 and null <= 1e-8


def test_input_errors():
    X = np.random.default_rng(0).standard_normal((5, 10))
    with pytest.raises(NonPositiveWeight):
        build_design_context(X, w=np.r_[0.0, np.ones(9)])
    with pytest.raises(ValueError):
        build_design_context(X[:, :4])
    Xr = X.copy()
    Xr[4] = Xr[3]
    with pytest.raises(RankDeficient):
        build_design_context(Xr)


def test_low_dimensional_mode():
    X = np.random.default_rng(0).standard_normal((20, 3))
    ctx = build_design_context(X, low_dimensional=True)
    assert ctx.V_N.shape == (3, 0)
    geom = build_active_geometry(ctx, [1])
    assert geom.n_dep == 0 and geom.n_free == 2
    np.testing.assert_array_equal(geom.B_I, np.eye(2))


def test_geometry_constraint_split(problem):
    ctx, _, _, sol, _, geom = problem
    rng = np.random.default_rng(0)
    s_A = rng.choice([-1.0, 1.0], geom.q)
    s_F = rng.uniform(-1, 1, geom.n_free)
    s_D = geom.C_A @ s_A - geom.E @ s_F
    s_I = np.empty(geom.I.size)
    s_I[geom.F_pos], s_I[geom.D_pos] = s_F, s_D
    np.testing.assert_allclose(geom.G @ s_I, geom.u(s_A), atol=1e-10)
    np.testing.assert_allclose(geom.G_D @ geom.E, geom.G_F, atol=1e-10)
    assert geom.n_dep == ctx.p - ctx.n
    assert geom.B_I.shape == (geom.I.size, ctx.n - geom.q)
    np.testing.assert_allclose(geom.G @ geom.B_I, 0, atol=1e-10)
    assert geom.t_matrix(ctx, sol.lam).shape == (ctx.n, ctx.n)
    assert np.isfinite(geom.log_abs_det_t(ctx, sol.lam))


def test_condition_cap(problem):
    ctx, _, _, sol, _, _ = problem
    with pytest.raises(DegenerateGeometry):
        build_active_geometry(ctx, sol.A, cond_cap=1.0)


def test_active_set_size_bounds(problem):
    ctx = problem[0]
    with pytest.raises(ValueError):
        build_active_geometry(ctx, [])
    with pytest.raises(ValueError):
        build_active_geometry(ctx, np.arange(ctx.n + 1))
