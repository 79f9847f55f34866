"""Dense Weierstrass canonical form, spectral projectors and the G = G_sp + P split."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from .core import MatrixPolynomial, as_dense
from .errors import DenseLimitExceeded, SingularPencil
from .linalg import is_nonsingular

INFINITE_TOL = 1e-12
STAIRCASE_TOL = 1e-10
GREY_ZONE = 1e-3
DEFAULT_DENSE_LIMIT = 2000

__all__ = [
    "WeierstrassData",
    "StrictlyProperRealization",
    "dense_limit",
    "weierstrass",
    "infinite_deflating_bases",
    "infinite_staircase",
    "split_transfer",
    "pencil_index",
]


def dense_limit():
    """Largest order accepted by dense analyses (env ``DAEMOR_DENSE_LIMIT``)."""
    return int(os.environ.get("DAEMOR_DENSE_LIMIT", DEFAULT_DENSE_LIMIT))


@dataclass(frozen=True)
class WeierstrassData:
    """``E = S diag(I, N) T^{-1}``, ``A = S diag(J, I) T^{-1}`` with projectors.

    ``Sinv`` is kept alongside ``S`` because its row blocks (``S1^T``,
    ``S2^T``) are what the strictly proper/polynomial split needs.
    """

    S: np.ndarray
    T: np.ndarray
    Sinv: np.ndarray
    Tinv: np.ndarray
    J: np.ndarray
    N: np.ndarray
    n_f: int
    n_inf: int
    P_l: np.ndarray
    P_r: np.ndarray
    nu: int


@dataclass(frozen=True)
class StrictlyProperRealization:
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def order(self):
        return self.E.shape[0]


def _nilpotency_index(N):
    k = N.shape[0]
    if k == 0:
        return 0
    M = np.eye(k)
    scale = max(1.0, np.abs(N).max())
    for j in range(1, k + 1):
        M = M @ N
        if np.abs(M).max() <= 1e-12 * scale**j:
            return j
    return k


def _index(N, nu_staircase):
    """Nilpotency index of ``N``; the staircase count wins when rounding blurs ``N^j``."""
    nu = _nilpotency_index(N)
    if N.shape[0] and nu != nu_staircase and 1 <= nu_staircase <= N.shape[0]:
        return nu_staircase
    return nu


def _check_regular(E, A, rng):
    n = E.shape[0]
    scale = max(np.linalg.norm(A, 1) / max(np.linalg.norm(E, 1), 1e-300), 1.0)
    for _ in range(3):
        lam = scale * complex(rng.standard_normal(), rng.standard_normal())
        if is_nonsingular(lam * E - A):
            return scale
    raise SingularPencil(f"pencil of order {n} is singular at 3 random shifts")


def _real_shift(E, A, scale):
    for c in (0.5377, -0.8131, 1.2917, -1.7713, 2.3041):
        if is_nonsingular(c * scale * E - A):
            return c * scale
    raise SingularPencil("no regular real shift found for the staircase")


def infinite_staircase(E, A, s0, tol=STAIRCASE_TOL):
    """``(multiplicity, index)`` of the infinite eigenvalue from a null-space staircase.

    With ``K = (s0 E - A)^{-1} E`` the infinite eigenvalues of the pencil are
    the zero eigenvalues of ``K``. The nested kernels ``ker K^j`` are built
    one step at a time, ``ker K^{j+1} = ker((I - Z_j Z_j^*) K)``, so every
    rank decision is a singular value test on a matrix of unit scale. Unlike
    eigenvalue tests this count is not disturbed by the ``eps^(1/k)``
    splitting of Jordan chains of length ``k``. The number of steps until
    the kernels stop growing is the nilpotency index.
    """
    K = np.linalg.solve(s0 * E - A, E)
    Z, steps = _staircase(K, tol)
    return Z.shape[1], steps


def _staircase(K, tol=STAIRCASE_TOL):
    """Orthonormal basis of the generalized null space of ``K`` and the number of steps."""
    n = K.shape[0]
    normK = np.linalg.norm(K, 2)
    if normK == 0:
        return np.eye(n), 1
    K = K / normK
    Z = np.zeros((n, 0), dtype=K.dtype)
    steps = 0
    while Z.shape[1] < n:
        M = K - Z @ (Z.conj().T @ K)
        _, sv, Vh = np.linalg.svd(M)
        null = Vh[sv <= tol].conj().T
        if null.shape[1] <= Z.shape[1]:
            break
        Z = null
        steps += 1
    return Z, steps


def _staircase_basis(K, k):
    Z, _ = _staircase(K)
    if Z.shape[1] != k:
        raise SingularPencil("infinite deflating subspace changed size")
    return Z


def weierstrass(system):
    """Dense Weierstrass canonical form of ``lambda E - A``.

    QZ with the finite eigenvalues ordered first, followed by a decoupling of
    the finite and infinite blocks. The coupling equations reduce to a Stein
    equation with a nilpotent coefficient, which is solved by its finite
    series.
    """
    n = system.n
    if n > dense_limit():
        raise DenseLimitExceeded(n, dense_limit())
    E = as_dense(system.E).astype(float)
    A = as_dense(system.A).astype(float)
    scale = _check_regular(E, A, np.random.default_rng(12345))

    def finite(alpha, beta):
        return np.abs(beta) > INFINITE_TOL * (np.abs(alpha) + np.abs(beta))

    try:
        AA, BB, alpha, beta, Q, Z = spla.ordqz(A, E, sort=finite, output="real")
    except ValueError:
        # reordering refused (ill-conditioned swap); use the subspace route
        s0 = _real_shift(E, A, scale)
        k, nu = infinite_staircase(E, A, s0)
        return _weierstrass_subspaces(E, A, s0, k, nu)
    n_f = int(np.sum(finite(alpha, beta)))
    n_inf = n - n_f
    nu_staircase = None
    ratio = np.abs(beta) / (np.abs(alpha) + np.abs(beta))
    if np.any((ratio > INFINITE_TOL) & (ratio <= GREY_ZONE)):
        # Rounding may have split an infinite Jordan chain of length k into
        # finite eigenvalues with ratio about eps^(1/k); count with ranks.
        s0 = _real_shift(E, A, scale)
        k, nu_staircase = infinite_staircase(E, A, s0)
        if k != n_inf:
            return _weierstrass_subspaces(E, A, s0, k, nu_staircase)
    f, i = slice(0, n_f), slice(n_f, n)
    A11, A12, A22 = AA[f, f], AA[f, i], AA[i, i]
    B11, B12, B22 = BB[f, f], BB[f, i], BB[i, i].copy()
    # the infinite block of BB is strictly upper triangular up to rounding
    B22[np.tril_indices(n_inf)] = 0.0

    if n_f and n_inf:
        M = np.linalg.solve(B11.T, A11.T).T  # A11 B11^{-1}
        K = np.linalg.solve(A22.T, B22.T).T  # B22 A22^{-1}, nilpotent
        Q0 = np.linalg.solve(A22.T, (M @ B12 - A12).T).T
        L = Q0.copy()
        term = Q0
        for _ in range(n_inf):
            term = M @ term @ K
            if not np.any(term):
                break
            L = L + term
        R = -np.linalg.solve(B11, L @ B22 + B12)
    else:
        L = np.zeros((n_f, n_inf))
        R = np.zeros((n_f, n_inf))

    X = np.eye(n)
    X[f, i] = L
    Xinv = np.eye(n)
    Xinv[f, i] = -L
    Y = np.eye(n)
    Y[f, i] = R
    Yinv = np.eye(n)
    Yinv[f, i] = -R

    scale = np.eye(n)
    scale[f, f] = B11
    scale[i, i] = A22
    S = Q @ Xinv @ scale
    Sinv = np.linalg.solve(scale, X @ Q.T)
    T = Z @ Y
    Tinv = Yinv @ Z.T
    J = np.linalg.solve(B11, A11) if n_f else np.zeros((0, 0))
    N = np.linalg.solve(A22, B22) if n_inf else np.zeros((0, 0))
    if n_inf:
        N[np.tril_indices(n_inf)] = 0.0

    P_l = S[:, f] @ Sinv[f, :]
    P_r = T[:, f] @ Tinv[f, :]
    return WeierstrassData(
        S=S, T=T, Sinv=Sinv, Tinv=Tinv, J=J, N=N, n_f=n_f, n_inf=n_inf,
        P_l=P_l, P_r=P_r,
        nu=_nilpotency_index(N) if nu_staircase is None else _index(N, nu_staircase),
    )


def _weierstrass_subspaces(E, A, s0, k, nu):
    """Weierstrass form from deflating subspaces when the QZ eigenvalue test miscounts.

    With ``K = (s0 E - A)^{-1} E`` the right infinite deflating subspace is
    ``ker K^nu`` (from the staircase) and the right finite one is the
    invariant subspace of the ``n - k`` largest eigenvalues of ``K``. The
    left subspaces are their images ``E T1`` and ``A T2``, so with
    ``S = [E T1, A T2]`` and ``T = [T1, T2]`` both ``S^{-1} E T`` and
    ``S^{-1} A T`` are block diagonal with identity blocks in the right
    places.
    """
    n = E.shape[0]
    n_f = n - k
    K = np.linalg.solve(s0 * E - A, E)
    mags = np.sort(np.abs(np.linalg.eigvals(K)))
    cut = np.sqrt(max(mags[k - 1], 1e-300) * mags[k]) if 0 < k < n else 0.0
    _, U, sdim = spla.schur(K, output="real", sort=lambda x, y: np.hypot(x, y) > cut)
    if sdim != n_f:
        raise SingularPencil(f"could not separate {n_f} finite eigenvalues (got {sdim})")
    T1 = U[:, :n_f]
    T2 = _staircase_basis(K, k)
    T = np.hstack([T1, T2])
    S = np.hstack([E @ T1, A @ T2])
    Sinv = np.linalg.inv(S)
    Tinv = np.linalg.inv(T)
    f, i = slice(0, n_f), slice(n_f, n)
    J = (Sinv @ A @ T)[f, f]
    N = (Sinv @ E @ T)[i, i]
    return WeierstrassData(
        S=S, T=T, Sinv=Sinv, Tinv=Tinv, J=J, N=N, n_f=n_f, n_inf=k,
        P_l=S[:, f] @ Sinv[f, :], P_r=T[:, f] @ Tinv[f, :], nu=nu,
    )


def infinite_deflating_bases(w):
    """Orthonormal ``(W_inf, V_inf)`` spanning ``Im(I - P_l^T)`` and ``Im(I - P_r)``."""
    n, k = w.S.shape[0], w.n_inf
    if k == 0:
        return np.zeros((n, 0)), np.zeros((n, 0))
    S2 = w.Sinv[w.n_f:, :].T
    T2 = w.T[:, w.n_f:]
    W_inf, _ = np.linalg.qr(S2)
    V_inf, _ = np.linalg.qr(T2)
    return W_inf, V_inf


def split_transfer(system, w):
    """Split ``G = G_sp + P``.

    Returns the order-``n_f`` realization ``(I, J, S1^T B, C T1)`` of the
    strictly proper part and the polynomial
    ``P(s) = D - sum_k s^k C T2 N^k S2^T B`` with ``nu`` coefficients.
    """
    B = as_dense(system.B)
    C = as_dense(system.C)
    D = as_dense(system.D)
    nf = w.n_f
    sp_real = StrictlyProperRealization(
        E=np.eye(nf), A=w.J, B=w.Sinv[:nf, :] @ B, C=C @ w.T[:, :nf],
    )
    if w.n_inf == 0:
        return sp_real, MatrixPolynomial([D])
    CT2 = C @ w.T[:, nf:]
    S2B = w.Sinv[nf:, :] @ B
    coeffs = [D - CT2 @ S2B]
    Nk = np.eye(w.n_inf)
    for _ in range(1, max(w.nu, 1)):
        Nk = Nk @ w.N
        coeffs.append(-CT2 @ Nk @ S2B)
    return sp_real, MatrixPolynomial(coeffs).trimmed(1e-12)


def pencil_index(w):
    return w.nu
