import numpy as np
import pytest

from ripgd.losses import (
    LinearOperator,
    LinearLoss,
    OneBitLoss,
    ScaledLoss,
    make_gaussian_operator,
)
from ripgd.factored import (
    g_value,
    g_grad,
    g_value_and_grad,
    g_hess_form,
    g_hess_bilinear,
    g_hess_min_eig,
    hess_matrix,
    LiftedLoss,
    lift_asymmetric,
    balance_and_augment,
)


def scalar_loss(m_star=1.0):
    """1x1 identity sensing: f(M) = (M - m_star)^2 / 2."""
    op = LinearOperator(np.ones((1, 1, 1)))
    return LinearLoss(op, np.array([m_star]))


def identity_loss(n, m_star):
    """Full-basis sensing: f(M) = ||M - m_star||_F^2 / 2."""
    mats = np.eye(n * n).reshape(n * n, n, n)
    op = LinearOperator(mats)
    return LinearLoss(op, op.apply(m_star))


def fd_g_grad(loss, X, h=1e-6):
    out = np.zeros_like(X)
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            E = np.zeros_like(X)
            E[i, j] = h
            out[i, j] = (g_value(loss, X + E) - g_value(loss, X - E)) / (2 * h)
    return out


def fd_g_quad(loss, X, U, h=1e-4):
    return (g_value(loss, X + h * U) - 2.0 * g_value(loss, X)
            + g_value(loss, X - h * U)) / h ** 2


def random_losses(rng, n):
    op = make_gaussian_operator(n, n, 3 * n, seed=17)
    lin = LinearLoss(op, rng.standard_normal(3 * n))
    onebit = OneBitLoss(rng.uniform(0.05, 0.95, (n, n)), scale=6.0)
    return lin, onebit


def test_scalar_quartic_values():
    # g(x) = (x^2 - 1)^2 / 2: grad 2x(x^2-1), second derivative 6x^2 - 2.
    loss = scalar_loss(1.0)
    for x in (0.0, 0.5, 2.0, -1.3):
        X = np.array([[x]])
        assert g_value(loss, X) == pytest.approx(0.5 * (x * x - 1.0) ** 2)
        assert g_grad(loss, X)[0, 0] == pytest.approx(2.0 * x * (x * x - 1.0))
        H = hess_matrix(loss, X)
        assert H.shape == (1, 1)
        assert H[0, 0] == pytest.approx(6.0 * x * x - 2.0)
        assert g_hess_min_eig(loss, X) == pytest.approx(6.0 * x * x - 2.0)


def test_factor_gradient_fd():
    rng = np.random.default_rng(10)
    lin, onebit = random_losses(rng, 4)
    lifted = ScaledLoss(lift_asymmetric(LinearLoss(
        make_gaussian_operator(3, 2, 12, seed=3), rng.standard_normal(12)),
        3, 2, phi=0.35), 1.6)
    for loss, rows in ((lin, 4), (onebit, 4), (lifted, 5)):
        X = rng.standard_normal((rows, 2))
        g = g_grad(loss, X)
        g_fd = fd_g_grad(loss, X)
        assert np.linalg.norm(g - g_fd) <= 1e-4 * max(1.0, np.linalg.norm(g))
        v, gg = g_value_and_grad(loss, X)
        assert v == pytest.approx(g_value(loss, X))
        np.testing.assert_allclose(gg, g, rtol=1e-12)


def test_factor_hessian_fd():
    rng = np.random.default_rng(11)
    lin, onebit = random_losses(rng, 3)
    for loss in (lin, onebit):
        X = rng.standard_normal((3, 2))
        U = rng.standard_normal((3, 2))
        q = g_hess_form(loss, X, U)
        assert abs(q - fd_g_quad(loss, X, U)) <= 1e-3 * max(1.0, abs(q))


def test_hess_bilinear_polarization():
    rng = np.random.default_rng(12)
    lin, _ = random_losses(rng, 3)
    X = rng.standard_normal((3, 2))
    U = rng.standard_normal((3, 2))
    V = rng.standard_normal((3, 2))
    b = g_hess_bilinear(lin, X, U, V)
    assert b == pytest.approx(g_hess_bilinear(lin, X, V, U), rel=1e-10)
    assert g_hess_bilinear(lin, X, U, U) == pytest.approx(
        g_hess_form(lin, X, U), rel=1e-10)


def test_hess_matrix_matches_form():
    # The dense Hessian must reproduce the bilinear form under the
    # column-major vec convention, for every loss kind.
    rng = np.random.default_rng(13)
    lin, onebit = random_losses(rng, 3)
    scaled = ScaledLoss(onebit, 2.5)
    for loss in (lin, onebit, scaled):
        X = rng.standard_normal((3, 2))
        H = hess_matrix(loss, X)
        np.testing.assert_allclose(H, H.T, atol=1e-12)
        for _ in range(4):
            U = rng.standard_normal((3, 2))
            u = U.reshape(-1, order="F")
            assert float(u @ H @ u) == pytest.approx(
                g_hess_form(loss, X, U), rel=1e-9)


def test_hess_matrix_generic_path_matches_gram_path():
    # A loss without a fast Gram path goes through the generic double
    # loop; wrapping a linear loss in a plain subclass exercises it.
    class OpaqueLoss(LinearLoss):
        pass

    OpaqueLoss.kind = "opaque"
    rng = np.random.default_rng(14)
    op = make_gaussian_operator(3, 3, 9, seed=21)
    d = rng.standard_normal(9)
    fast = LinearLoss(op, d)
    slow = OpaqueLoss(op, d)
    X = rng.standard_normal((3, 2))
    np.testing.assert_allclose(hess_matrix(slow, X), hess_matrix(fast, X),
                               rtol=1e-10, atol=1e-12)


def test_min_eig_at_zero_factor():
    # At X = 0 the factored Hessian is U -> 2 <grad f(0), U U^T>; for the
    # identity-sensing loss this gives -2 * lambda_max(m_star).
    rng = np.random.default_rng(15)
    z = rng.standard_normal((4, 2))
    m_star = z @ z.T
    loss = identity_loss(4, m_star)
    lam_max = np.linalg.eigvalsh(m_star)[-1]
    got = g_hess_min_eig(loss, np.zeros((4, 2)))
    assert got == pytest.approx(-2.0 * lam_max, rel=1e-10)


def test_hess_matrix_size_limit():
    loss = identity_loss(3, np.eye(3))
    with pytest.raises(ValueError):
        hess_matrix(loss, np.zeros((3, 2)), dense_limit=4)


def test_factor_shape_validation():
    loss = scalar_loss()
    with pytest.raises(ValueError):
        g_value(loss, np.zeros((2, 1)))
    rect = LinearLoss(make_gaussian_operator(3, 2, 4, seed=0), np.zeros(4))
    with pytest.raises(ValueError):
        g_value(rect, np.zeros((3, 1)))


def test_lifted_loss_blocks():
    # The lifted objective evaluated at [U; V][U; V]^T equals the
    # asymmetric loss at U V^T plus the balancing penalty.
    rng = np.random.default_rng(16)
    op = make_gaussian_operator(3, 2, 10, seed=8)
    d = rng.standard_normal(10)
    inner = LinearLoss(op, d)
    phi = 0.45
    lifted = lift_asymmetric(inner, 3, 2, phi)
    assert lifted.n == lifted.m == 5
    U = rng.standard_normal((3, 2))
    V = rng.standard_normal((2, 2))
    X = np.vstack([U, V])
    N = X @ X.T
    uu, vv, uv = U @ U.T, V @ V.T, U @ V.T
    bal = (np.sum(uu * uu) + np.sum(vv * vv) - 2.0 * np.sum(uv * uv))
    want = inner.value(uv) + 0.25 * phi * bal
    assert g_value(lifted, X) == pytest.approx(want, rel=1e-12)
    v, g = lifted.value_and_grad(N)
    assert v == pytest.approx(lifted.value(N), rel=1e-12)
    np.testing.assert_allclose(g, lifted.grad(N), rtol=1e-12)


def test_lifted_loss_fd():
    rng = np.random.default_rng(17)
    op = make_gaussian_operator(3, 2, 10, seed=8)
    inner = LinearLoss(op, rng.standard_normal(10))
    lifted = lift_asymmetric(inner, 3, 2, 0.3)
    N = rng.standard_normal((5, 5))
    g = lifted.grad(N)
    eps = 1e-6
    fd = np.zeros_like(N)
    for i in range(5):
        for j in range(5):
            E = np.zeros_like(N)
            E[i, j] = eps
            fd[i, j] = (lifted.value(N + E) - lifted.value(N - E)) / (2 * eps)
    assert np.linalg.norm(g - fd) <= 1e-4 * max(1.0, np.linalg.norm(g))
    K = rng.standard_normal((5, 5))
    L = rng.standard_normal((5, 5))
    # Polarization of the quadratic form around N.
    h = 1e-4
    quad = lambda W: lifted.value(N + h * W)
    q_uu = (quad(K) - 2 * lifted.value(N) + lifted.value(N - h * K)) / h ** 2
    assert abs(lifted.hess_form(N, K, K) - q_uu) <= 1e-3 * max(1.0, abs(q_uu))
    sym = lifted.hess_form(N, K, L)
    assert sym == pytest.approx(lifted.hess_form(N, L, K), rel=1e-10)


def test_lifted_validation():
    op = make_gaussian_operator(3, 2, 4, seed=0)
    inner = LinearLoss(op, np.zeros(4))
    with pytest.raises(ValueError):
        lift_asymmetric(inner, 2, 3, 0.5)
    with pytest.raises(ValueError):
        LiftedLoss(inner, 0.0)


def test_balance_and_augment():
    rng = np.random.default_rng(18)
    u = rng.standard_normal((5, 2))
    v = rng.standard_normal((4, 2))
    m_star = u @ v.T
    u_star, v_star, m_tilde = balance_and_augment(m_star, 2)
    np.testing.assert_allclose(u_star @ v_star.T, m_star, atol=1e-10)
    np.testing.assert_allclose(u_star.T @ u_star, v_star.T @ v_star,
                               atol=1e-10)
    assert np.linalg.norm(m_tilde) == pytest.approx(
        2.0 * np.linalg.norm(m_star), rel=1e-12)
    sv = np.linalg.svd(m_star, compute_uv=False)
    sv_t = np.linalg.svd(m_tilde, compute_uv=False)
    assert sv_t[1] == pytest.approx(2.0 * sv[1], rel=1e-12)
    # Lifted objective vanishes at the balanced augmented truth.
    op = make_gaussian_operator(5, 4, 30, seed=4)
    inner = LinearLoss(op, op.apply(m_star))
    lifted = lift_asymmetric(inner, 5, 4, 0.5)
    x_tilde = np.vstack([u_star, v_star])
    assert g_value(lifted, x_tilde) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        balance_and_augment(m_star, 3)
    with pytest.raises(ValueError):
        balance_and_augment(np.zeros(3), 1)
