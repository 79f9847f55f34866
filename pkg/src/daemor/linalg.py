"""Factorizations, shifted solves and small dense eigenproblems."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sp
import scipy.sparse.linalg as spsla

from .errors import DefectivePencil, EmptyBasis, SingularReducedE, SingularShift

EPS = np.finfo(float).eps
RESIDUAL_TOL = 1e-10

__all__ = [
    "Factorization",
    "factorize",
    "is_nonsingular",
    "set_sparse_backend",
    "shifted_operator",
    "solve_shifted",
    "solve_shifted_adjoint",
    "EigenTriple",
    "eig_pencil",
    "orthonormalize",
    "realify",
    "arnoldi_ritz",
    "index1_bordered",
]


def _norm1(M):
    if sp.issparse(M):
        return float(abs(M).sum(axis=0).max()) if M.shape[0] else 0.0
    return float(np.linalg.norm(M, 1)) if M.size else 0.0


class Factorization:
    """LU factorization of a square matrix with the pivot-size criterion.

    ``ok`` is False when the smallest pivot magnitude is not above
    ``n * eps * ||M||_1``. ``solve`` handles ``M X = R`` and, with
    ``trans=True``, ``M^T X = R`` (plain transpose).
    """

    def __init__(self, M, backend=None):
        self.n = M.shape[0]
        self.sparse = sp.issparse(M)
        self.norm1 = _norm1(M)
        self._M = M
        self.ok = True
        if self.n == 0:
            self.min_pivot = np.inf
            self._lu = None
            return
        if self.sparse:
            try:
                self._lu = (backend or _sparse_backend)(sp.csc_matrix(M))
            except RuntimeError:
                self.ok = False
                self.min_pivot = 0.0
                self._lu = None
                return
            self.min_pivot = float(np.abs(self._lu.U.diagonal()).min())
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spla.LinAlgWarning)
                self._lu = spla.lu_factor(np.asarray(M), check_finite=False)
            self.min_pivot = float(np.abs(np.diag(self._lu[0])).min())
        if not np.isfinite(self.min_pivot) or self.min_pivot <= self.n * EPS * self.norm1:
            self.ok = False

    def solve(self, R, trans=False):
        R = np.asarray(R)
        if self.n == 0:
            return np.zeros_like(R)
        if self.sparse:
            dtype = np.result_type(R.dtype, self._lu.U.dtype)
            rhs = R.astype(dtype, copy=False)
            if np.iscomplexobj(rhs) and not np.iscomplexobj(self._lu.U.data):
                return self.solve(rhs.real, trans) + 1j * self.solve(rhs.imag, trans)
            return self._lu.solve(rhs, trans="T" if trans else "N")
        return spla.lu_solve(self._lu, R, trans=1 if trans else 0, check_finite=False)

    def matvec(self, X, trans=False):
        M = self._M.T if trans else self._M
        return M @ X


def _splu(M):
    return spsla.splu(M)


_sparse_backend = _splu


def set_sparse_backend(fn):
    """Install ``fn(csc_matrix) -> object with .solve(rhs, trans) and .U``.

    Passing ``None`` restores the SuperLU default. Returns the previous backend.
    """
    global _sparse_backend
    prev = _sparse_backend
    _sparse_backend = fn or _splu
    return prev


def factorize(M, backend=None):
    return Factorization(M, backend=backend)


def is_nonsingular(M):
    """Pivot criterion: LU with partial pivoting has min pivot > n*eps*||M||_1."""
    if M.shape[0] != M.shape[1]:
        return False
    return factorize(M).ok


def shifted_operator(E, A, sigma):
    """``sigma*E - A`` in the storage format of the inputs."""
    sigma = complex(sigma)
    if sigma.imag == 0:
        sigma = sigma.real
    if sp.issparse(E) or sp.issparse(A):
        return (sp.csc_matrix(E) * sigma - sp.csc_matrix(A)).tocsc()
    return sigma * np.asarray(E) - np.asarray(A)


def _refined_solve(fac, R, trans):
    X = fac.solve(R, trans)
    rnorm = np.linalg.norm(R)
    for _ in range(2):
        res = R - fac.matvec(X, trans)
        if np.linalg.norm(res) <= RESIDUAL_TOL * rnorm:
            break
        X = X + fac.solve(res, trans)
    return X


class ShiftedSolver:
    """One factorization of ``sigma*E - A`` serving both plain and transposed solves."""

    def __init__(self, E, A, sigma, error=SingularShift):
        self.sigma = complex(sigma)
        self.fac = factorize(shifted_operator(E, A, sigma))
        if not self.fac.ok:
            raise error(sigma, f"min pivot {self.fac.min_pivot:.3e}")

    def solve(self, R):
        return _refined_solve(self.fac, np.asarray(R), False)

    def solve_adjoint(self, R):
        return _refined_solve(self.fac, np.asarray(R), True)


def solve_shifted(system, sigma, R):
    """Return ``(sigma E - A)^{-1} R``; raises :class:`SingularShift` at a pole."""
    return ShiftedSolver(system.E, system.A, sigma).solve(R)


def solve_shifted_adjoint(system, sigma, R):
    """Return ``(sigma E - A)^{-T} R`` (plain transpose)."""
    return ShiftedSolver(system.E, system.A, sigma).solve_adjoint(R)


@dataclass(frozen=True)
class EigenTriple:
    lam: complex
    y: np.ndarray
    z: np.ndarray


def eig_pencil(Et, At, defect_tol=1e-12):
    """Eigentriples of the small pencil ``lambda Et - At``.

    Left and right eigenvectors are scaled so that ``y_i^* Et z_j = delta_ij``.
    Triples are sorted by (real part, imaginary part); conjugate eigenvalues
    get conjugate eigenvectors so that residue directions of real models are
    conjugate as well.
    """
    Et = np.asarray(Et, dtype=float)
    At = np.asarray(At, dtype=float)
    r = Et.shape[0]
    if not is_nonsingular(Et):
        raise SingularReducedE("reduced strictly proper E is singular")
    lam, vl, vr = spla.eig(At, Et, left=True, right=True)
    order = np.lexsort((lam.imag, lam.real))
    lam = lam[order].astype(complex)
    vl = vl[:, order].astype(complex)
    vr = vr[:, order].astype(complex)
    scale = np.linalg.norm(Et, 2)
    imtol = 1e3 * EPS * max(1.0, np.abs(lam).max())
    # pair conjugates explicitly so directions stay closed under conjugation
    used = np.zeros(r, dtype=bool)
    for i in range(r):
        if used[i]:
            continue
        used[i] = True
        if abs(lam[i].imag) <= imtol:
            lam[i] = lam[i].real
            vr[:, i] = _real_vector(vr[:, i])
            vl[:, i] = _real_vector(vl[:, i])
            continue
        cand = [j for j in range(r) if not used[j]]
        if not cand:
            continue
        j = min(cand, key=lambda k: abs(lam[k] - np.conj(lam[i])))
        used[j] = True
        lam[j] = np.conj(lam[i])
        vr[:, j] = np.conj(vr[:, i])
        vl[:, j] = np.conj(vl[:, i])
    # pairing equalizes real parts of conjugates, so sort again for the final order
    order = np.lexsort((lam.imag, lam.real))
    lam, vl, vr = lam[order], vl[:, order], vr[:, order]
    out = []
    for i in range(r):
        z = vr[:, i] / np.linalg.norm(vr[:, i])
        y = vl[:, i] / np.linalg.norm(vl[:, i])
        d = y.conj() @ Et @ z
        if abs(d) < defect_tol * scale:
            raise DefectivePencil(
                f"bi-normalization pivot {abs(d):.3e} at eigenvalue {lam[i]:.6g}"
            )
        y = y / np.conj(d)
        out.append(EigenTriple(complex(lam[i]), y, z))
    return out


def _real_vector(v):
    k = np.argmax(np.abs(v))
    v = v * (abs(v[k]) / v[k]) if v[k] != 0 else v
    return v.real.astype(complex)


def realify(V):
    """Real n-by-2k stack ``[Re V, Im V]``."""
    V = np.asarray(V)
    if V.ndim == 1:
        V = V[:, None]
    return np.hstack([V.real, V.imag]) if np.iscomplexobj(V) else V.astype(float)


def orthonormalize(V, rtol=1e-12, max_cols=None):
    """Real orthonormal basis of the real span of ``[Re V, Im V]``.

    Columns are scaled to unit norm first, so the rank decision does not
    depend on how strongly each shift amplifies its right-hand side.
    Directions with relative singular value below ``rtol`` are dropped; with
    ``max_cols`` the basis is truncated to the dominant directions.
    """
    X = realify(V)
    if X.shape[1] == 0:
        raise EmptyBasis("no columns to orthonormalize")
    norms = np.linalg.norm(X, axis=0)
    X = X[:, norms > 0] / norms[norms > 0]
    if X.shape[1] == 0:
        raise EmptyBasis("all columns are zero")
    U, s, _ = spla.svd(X, full_matrices=False, lapack_driver="gesvd")
    if s.size == 0 or s[0] == 0:
        raise EmptyBasis("all columns are zero")
    keep = int(np.sum(s > rtol * s[0]))
    if max_cols is not None:
        keep = min(keep, max_cols)
    if keep == 0:
        raise EmptyBasis("all columns dropped")
    Q = U[:, :keep]
    # fix signs for reproducibility
    signs = np.sign(Q[np.argmax(np.abs(Q), axis=0), np.arange(keep)])
    return Q * signs


def arnoldi_ritz(apply_op, v0, k):
    """Ritz values of ``apply_op`` from ``k`` Arnoldi steps started at ``v0``."""
    v0 = np.asarray(v0, dtype=complex).ravel()
    n = v0.size
    k = max(1, min(k, n))
    Q = np.zeros((n, k + 1), dtype=complex)
    H = np.zeros((k + 1, k), dtype=complex)
    Q[:, 0] = v0 / np.linalg.norm(v0)
    steps = k
    for j in range(k):
        w = np.asarray(apply_op(Q[:, j])).ravel()
        for _ in range(2):
            h = Q[:, : j + 1].conj().T @ w
            w = w - Q[:, : j + 1] @ h
            H[: j + 1, j] += h
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] <= 1e-12 * np.abs(H[: j + 1, j]).max():
            steps = j + 1
            break
        Q[:, j + 1] = w / H[j + 1, j]
    return np.linalg.eigvals(H[:steps, :steps])


def index1_bordered(system):
    """Bordered matrix ``[[E11, E12], [A21, A22]]``.

    It is nonsingular iff ``E11 - E12 A22^{-1} A21`` is (given a nonsingular
    ``A22``), and its factorization applies that Schur complement's inverse.
    """
    blk = system.block
    if system.is_sparse:
        return sp.bmat(
            [[sp.csc_matrix(blk("E", 1, 1)), sp.csc_matrix(blk("E", 1, 2))],
             [sp.csc_matrix(blk("A", 2, 1)), sp.csc_matrix(blk("A", 2, 2))]],
            format="csc",
        )
    return np.block([[blk("E", 1, 1), blk("E", 1, 2)], [blk("A", 2, 1), blk("A", 2, 2)]])
