"""Factored objectives g(X) = f(X X^T) and the lift of asymmetric problems.

The search variable is a factor X with n rows and r columns; the loss is
always evaluated on the square matrix X X^T.  Asymmetric losses on n-by-m
matrices are handled by lifting to an (n+m)-square problem with a balancing
penalty, after which the symmetric machinery applies unchanged.
"""

import numpy as np
from scipy.special import expit

from .losses import MatrixLoss, LinearLoss, OneBitLoss, ScaledLoss, RANK_TOL

# Largest factored Hessian (nr by nr) assembled densely.
DENSE_EIG_LIMIT = 4000


def _check_factor(loss, X):
    X = np.asarray(X, dtype=float)
    if loss.n != loss.m:
        raise ValueError("factored objectives need a square loss")
    if X.ndim != 2 or X.shape[0] != loss.n:
        raise ValueError("factor must have %d rows" % loss.n)
    return X


def g_value(loss, X):
    X = _check_factor(loss, X)
    return loss.value(X @ X.T)


def g_grad(loss, X):
    """Gradient of X -> loss(X X^T), namely (W + W^T) X with W = grad loss."""
    X = _check_factor(loss, X)
    W = loss.grad(X @ X.T)
    return (W + W.T) @ X


def g_value_and_grad(loss, X):
    X = _check_factor(loss, X)
    v, W = loss.value_and_grad(X @ X.T)
    return v, (W + W.T) @ X


def g_hess_form(loss, X, U):
    """Quadratic form of the factored Hessian in direction U."""
    X = _check_factor(loss, X)
    U = np.asarray(U, dtype=float)
    if U.shape != X.shape:
        raise ValueError("direction must match the factor shape")
    M = X @ X.T
    K = X @ U.T + U @ X.T
    return loss.hess_form(M, K, K) + 2.0 * float(np.sum(loss.grad(M) * (U @ U.T)))


def g_hess_bilinear(loss, X, U, V):
    """Polarized factored Hessian evaluated on a pair of directions."""
    X = _check_factor(loss, X)
    M = X @ X.T
    KU = X @ U.T + U @ X.T
    KV = X @ V.T + V @ X.T
    cross = U @ V.T
    return loss.hess_form(M, KU, KV) + float(np.sum(loss.grad(M) * (cross + cross.T)))


def _basis_images(X):
    """Matrices X e_j^T + e_j X^T for the canonical factor basis.

    Basis index j enumerates factor entries column-major, so j = c*n + a
    points at row a, column c.
    """
    n, r = X.shape
    out = np.zeros((n * r, n, n))
    for c in range(r):
        col = X[:, c]
        for a in range(n):
            j = c * n + a
            out[j, a, :] += col
            out[j, :, a] += col
    return out


def _hess_gram(loss, M, images):
    """Loss-Hessian Gram matrix of the basis images, or None when generic."""
    if isinstance(loss, ScaledLoss):
        inner = _hess_gram(loss.inner, M, images)
        return None if inner is None else loss.factor * inner
    if isinstance(loss, LinearLoss):
        B = loss.operator.apply_batch(images)
        return B @ B.T
    if isinstance(loss, OneBitLoss):
        s = expit(M)
        w = loss.scale * s * (1.0 - s)
        flat = images.reshape(images.shape[0], -1)
        return (flat * w.reshape(-1)) @ flat.T
    return None


def hess_matrix(loss, X, dense_limit=DENSE_EIG_LIMIT):
    """Dense factored Hessian in the column-major factor basis."""
    X = _check_factor(loss, X)
    n, r = X.shape
    d = n * r
    if d > dense_limit:
        raise ValueError(
            "factor dimension %d exceeds the dense limit %d; use an "
            "iterative eigensolver on g_hess_form instead" % (d, dense_limit)
        )
    M = X @ X.T
    images = _basis_images(X)
    G = _hess_gram(loss, M, images)
    if G is None:
        G = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                v = loss.hess_form(M, images[i], images[j])
                G[i, j] = v
                G[j, i] = v
    W = loss.grad(M)
    G = G + np.kron(np.eye(r), W + W.T)
    return 0.5 * (G + G.T)


def g_hess_min_eig(loss, X, dense_limit=DENSE_EIG_LIMIT):
    """Smallest eigenvalue of the factored Hessian at X."""
    return float(np.linalg.eigvalsh(hess_matrix(loss, X, dense_limit))[0])


class LiftedLoss(MatrixLoss):
    """Square loss on (n+m)-blocks that embeds an asymmetric loss.

    For N = [[N11, N12], [N21, N22]] the value is
    (f(N12) + f(N21^T)) / 2 + phi/4 * (||N11||^2 + ||N22||^2
    - ||N12||^2 - ||N21||^2), so minimizing over N = X X^T with
    X = [U; V] recovers the asymmetric problem with balanced factors.
    """

    kind = "lifted"

    def __init__(self, inner, phi):
        if not phi > 0:
            raise ValueError("balancing weight phi must be positive")
        self.inner = inner
        self.phi = float(phi)
        self.split = inner.n
        self.n = inner.n + inner.m
        self.m = self.n

    def _blocks(self, M):
        k = self.split
        return M[:k, :k], M[:k, k:], M[k:, :k], M[k:, k:]

    def value(self, M):
        M = self._check(M)
        b11, b12, b21, b22 = self._blocks(M)
        bal = (
            np.sum(b11 * b11) + np.sum(b22 * b22)
            - np.sum(b12 * b12) - np.sum(b21 * b21)
        )
        return 0.5 * (self.inner.value(b12) + self.inner.value(b21.T)) + 0.25 * self.phi * bal

    def grad(self, M):
        M = self._check(M)
        b11, b12, b21, b22 = self._blocks(M)
        k = self.split
        G = np.zeros_like(M)
        G[:k, :k] = 0.5 * self.phi * b11
        G[k:, k:] = 0.5 * self.phi * b22
        G[:k, k:] = 0.5 * self.inner.grad(b12) - 0.5 * self.phi * b12
        G[k:, :k] = 0.5 * self.inner.grad(b21.T).T - 0.5 * self.phi * b21
        return G

    def value_and_grad(self, M):
        M = self._check(M)
        b11, b12, b21, b22 = self._blocks(M)
        k = self.split
        v12, g12 = self.inner.value_and_grad(b12)
        v21, g21 = self.inner.value_and_grad(b21.T)
        bal = (
            np.sum(b11 * b11) + np.sum(b22 * b22)
            - np.sum(b12 * b12) - np.sum(b21 * b21)
        )
        val = 0.5 * (v12 + v21) + 0.25 * self.phi * bal
        G = np.zeros_like(M)
        G[:k, :k] = 0.5 * self.phi * b11
        G[k:, k:] = 0.5 * self.phi * b22
        G[:k, k:] = 0.5 * g12 - 0.5 * self.phi * b12
        G[k:, :k] = 0.5 * g21.T - 0.5 * self.phi * b21
        return float(val), G

    def hess_form(self, M, K, L):
        M = self._check(M)
        K = np.asarray(K, dtype=float)
        L = np.asarray(L, dtype=float)
        m11, m12, m21, _ = self._blocks(M)
        k11, k12, k21, k22 = self._blocks(K)
        l11, l12, l21, l22 = self._blocks(L)
        quad = 0.5 * (
            self.inner.hess_form(m12, k12, l12)
            + self.inner.hess_form(m21.T, k21.T, l21.T)
        )
        bal = (
            np.sum(k11 * l11) + np.sum(k22 * l22)
            - np.sum(k12 * l12) - np.sum(k21 * l21)
        )
        return quad + 0.5 * self.phi * float(bal)


def lift_asymmetric(loss, n, m, phi):
    """Lift an n-by-m loss to a balanced square loss on (n+m) blocks."""
    if loss.n != n or loss.m != m:
        raise ValueError("loss shape does not match (n, m)")
    return LiftedLoss(loss, phi)


def balance_and_augment(m_star, r):
    """Balanced factors of a rank-r target and the lifted ground truth.

    Returns (u_star, v_star, m_tilde) where m_star = u_star @ v_star.T with
    u_star^T u_star = v_star^T v_star, and m_tilde is the square matrix
    [u_star; v_star] [u_star; v_star]^T.  Its Frobenius norm is twice that
    of m_star and its r-th singular value twice sigma_r(m_star).
    """
    m_star = np.asarray(m_star, dtype=float)
    if m_star.ndim != 2:
        raise ValueError("m_star must be a matrix")
    if r < 1 or r > min(m_star.shape):
        raise ValueError("rank out of range")
    P, sv, Qt = np.linalg.svd(m_star, full_matrices=False)
    if sv[r - 1] <= RANK_TOL:
        raise ValueError("m_star is numerically rank deficient for rank %d" % r)
    if r < len(sv) and sv[r] >= RANK_TOL:
        raise ValueError("m_star has numerical rank above %d" % r)
    root = np.sqrt(sv[:r])
    u_star = P[:, :r] * root
    v_star = Qt[:r].T * root
    stack = np.vstack([u_star, v_star])
    return u_star, v_star, stack @ stack.T
