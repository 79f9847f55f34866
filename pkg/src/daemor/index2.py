"""Projector-free reduction of Stokes-type index-2 systems.

The system has ``E = diag(E11, 0)`` and ``A = [[A11, A12], [A21, 0]]``. Its
transfer function is that of a hidden ODE living on ``ker A21`` plus a
polynomial part of degree at most one. Every projected quantity the
reduction needs is obtained from saddle-point solves with
``[[sigma E11 - A11, A12], [A21, 0]]``, so the projectors onto the hidden
subspace are never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sp

from .core import MatrixPolynomial, ReducedModel, as_dense
from .errors import (
    EmptyBasis,
    MethodStructureMismatch,
    SingularE11,
    SingularProjectedGram,
    SingularSaddle,
)
from .interpolation import check_reduced_pencil, paired_bases, parallel_map
from .linalg import factorize

__all__ = [
    "Index2Hidden",
    "hidden_feedthrough",
    "projectors_index2",
    "saddle_matrix",
    "saddle_scale",
    "SaddleSolver",
    "saddle_solve_right",
    "saddle_solve_left",
    "saddle_columns",
    "reduce_index2",
    "restricted_inverse_oracle",
    "hidden_transfer",
]


@dataclass(frozen=True)
class Index2Hidden:
    """Output/input matrices and feedthrough of the hidden ODE.

    ``G(s) = Cmat (s E - A)^I Bmat + Dscript + s * linear_poly_coeff`` where
    ``(s E - A)^I`` is the restricted inverse on the hidden subspace.
    """

    Cmat: np.ndarray
    Dscript: np.ndarray
    Bmat: np.ndarray
    linear_poly_coeff: np.ndarray

    @property
    def polynomial(self):
        return MatrixPolynomial([self.Dscript, self.linear_poly_coeff])


def _require_index2(system):
    if system.structure.kind != "index2":
        raise MethodStructureMismatch("method/structure mismatch: index-2 blocks required")


def _blocks(system):
    b = system.block
    return {
        "E11": b("E", 1, 1), "A11": b("A", 1, 1), "A12": b("A", 1, 2), "A21": b("A", 2, 1),
        "B1": as_dense(b("B", 1)).astype(float), "B2": as_dense(b("B", 2)).astype(float),
        "C1": as_dense(b("C", 1)).astype(float), "C2": as_dense(b("C", 2)).astype(float),
    }


def _gram(system):
    blk = _blocks(system)
    fE = factorize(blk["E11"])
    if not fE.ok:
        raise SingularE11(f"min pivot {fE.min_pivot:.3e}")
    X = fE.solve(as_dense(blk["A12"]).astype(float))  # E11^{-1} A12
    G = as_dense(blk["A21"] @ X)
    fG = factorize(G)
    if not fG.ok:
        raise SingularProjectedGram(f"min pivot {fG.min_pivot:.3e}")
    return blk, fE, X, fG


def hidden_feedthrough(system):
    """Assemble ``Cmat``, ``Dscript``, ``Bmat`` and the ``s``-linear coefficient.

    With ``G = A21 E11^{-1} A12``::

        Cmat    = C1 - C2 G^{-1} A21 E11^{-1} A11
        Bmat    = B1 - A11 E11^{-1} A12 G^{-1} B2
        linear  = -C2 G^{-1} B2
        Dscript = D - C2 G^{-1} A21 E11^{-1} B1 - Cmat E11^{-1} A12 G^{-1} B2

    The last term of ``Dscript`` only appears when ``B2 != 0``: the part of
    ``x1`` forced by the constraint ``A21 x1 = -B2 u`` reaches the output
    through ``Cmat`` without dynamics.
    """
    _require_index2(system)
    blk, fE, X, fG = _gram(system)
    # Z = E11^{-T} A21^T G^{-T} C2^T, so Z^T = C2 G^{-1} A21 E11^{-1}
    Y = fG.solve(blk["C2"].T, trans=True)
    Z = fE.solve(as_dense(blk["A21"].T @ Y), trans=True)
    A11 = blk["A11"]
    Cmat = blk["C1"] - as_dense(A11.T @ Z).T
    D = as_dense(system.D).astype(float)
    Dscript = D - Z.T @ blk["B1"]
    B2 = blk["B2"]
    if np.any(B2):
        GB2 = fG.solve(B2)
        XGB2 = X @ GB2
        Bmat = blk["B1"] - as_dense(A11 @ XGB2)
        lin = -blk["C2"] @ GB2
        Dscript = Dscript - Cmat @ XGB2
    else:
        Bmat = blk["B1"].copy()
        lin = np.zeros_like(D)
    return Index2Hidden(Cmat, Dscript, Bmat, lin)


def projectors_index2(system):
    """Dense projectors ``(Pi_l, Pi_r)`` onto the hidden subspaces (test oracle).

    ``Pi_r = I - E11^{-1} A12 G^{-1} A21`` has range ``ker A21`` and
    ``Pi_l = I - A12 G^{-1} A21 E11^{-1}`` annihilates ``A12``; these roles
    make ``(sE - A)^I (sE - A) = Pi_r`` and ``(sE - A)(sE - A)^I = Pi_l``.
    """
    _require_index2(system)
    blk, fE, X, fG = _gram(system)
    A21 = as_dense(blk["A21"]).astype(float)
    A12 = as_dense(blk["A12"]).astype(float)
    n1 = A12.shape[0]
    Pi_r = np.eye(n1) - X @ fG.solve(A21)
    Pi_l = np.eye(n1) - A12 @ fG.solve(fE.solve(A21.T, trans=True).T)
    return Pi_l, Pi_r


def _norm1(M):
    if sp.issparse(M):
        return float(abs(M).sum(axis=0).max()) if M.nnz else 0.0
    return float(np.abs(M).sum(axis=0).max(initial=0.0))


def saddle_scale(system, sigma):
    """Balancing factor ``alpha`` for the constraint blocks at shift ``sigma``.

    The Schur complement ``A21 (sigma E11 - A11)^{-1} A12`` decays like
    ``1/|sigma|``, so for large shifts an unscaled saddle matrix looks
    singular to a pivot test. Scaling ``A12`` and ``A21`` by
    ``alpha = ||sigma E11 - A11|| / ||A12||`` keeps both blocks comparable.
    """
    blk = _blocks(system)
    k11 = abs(complex(sigma)) * _norm1(blk["E11"]) + _norm1(blk["A11"])
    a12 = _norm1(blk["A12"])
    return k11 / a12 if a12 > 0 and k11 > 0 else 1.0


def saddle_matrix(system, sigma, scale=1.0):
    """``[[sigma E11 - A11, a A12], [a A21, 0]]`` in the storage format of the system."""
    blk = _blocks(system)
    sigma = complex(sigma)
    if sigma.imag == 0:
        sigma = sigma.real
    if system.is_sparse:
        K11 = sp.csc_matrix(blk["E11"]) * sigma - sp.csc_matrix(blk["A11"])
        return sp.bmat([[K11, scale * sp.csc_matrix(blk["A12"])],
                        [scale * sp.csc_matrix(blk["A21"]), None]], format="csc")
    K11 = sigma * as_dense(blk["E11"]) - as_dense(blk["A11"])
    n2 = system.structure.n2
    return np.block([[K11, scale * as_dense(blk["A12"])],
                     [scale * as_dense(blk["A21"]), np.zeros((n2, n2))]])


class SaddleSolver:
    """One sparse (or dense) LU of the (balanced) saddle matrix, used for both sides."""

    def __init__(self, system, sigma):
        self.sigma = complex(sigma)
        self.n1 = system.structure.n1
        self.n2 = system.structure.n2
        self.scale = saddle_scale(system, sigma)
        self.fac = factorize(saddle_matrix(system, sigma, self.scale))
        if not self.fac.ok:
            raise SingularSaddle(sigma, f"saddle matrix min pivot {self.fac.min_pivot:.3e}")

    def _solve(self, f, trans):
        f = np.asarray(f)
        rhs = np.concatenate([f, np.zeros((self.n2,) + f.shape[1:], dtype=f.dtype)])
        x = self.fac.solve(rhs, trans=trans)
        res = rhs - self.fac.matvec(x, trans)
        if np.linalg.norm(res) > 1e-10 * max(np.linalg.norm(rhs), 1e-300):
            x = x + self.fac.solve(res, trans=trans)
        return x[: self.n1], self.scale * x[self.n1:]

    def right(self, f):
        """``(v, z)`` with ``(sigma E11 - A11) v + A12 z = f`` and ``A21 v = 0``."""
        return self._solve(f, False)

    def left(self, g):
        """``(w, q)`` with ``(sigma E11 - A11)^T w + A21^T q = g`` and ``A12^T w = 0``."""
        return self._solve(g, True)


def saddle_solve_right(system, sigma, b, B_effective, return_multiplier=False):
    """``v = (sigma E - A)^I B_eff b`` through one saddle solve."""
    f = np.asarray(B_effective) @ np.asarray(b, dtype=complex).reshape(-1)
    v, z = SaddleSolver(system, sigma).right(f)
    return (v, z) if return_multiplier else v


def saddle_solve_left(system, mu, c, C_effective, return_multiplier=False):
    """``w = (mu E^T - A^T)^I C_eff^T c`` through one transposed saddle solve."""
    g = np.asarray(C_effective).T @ np.asarray(c, dtype=complex).reshape(-1)
    w, q = SaddleSolver(system, mu).left(g)
    return (w, q) if return_multiplier else w


def saddle_columns(system, data, hidden):
    """Complex right and left columns for all interpolation data (one LU per shift)."""

    def per_shift(entry):
        s, b, c = entry
        solver = SaddleSolver(system, s)
        v, _ = solver.right(hidden.Bmat @ b)
        w, _ = solver.left(hidden.Cmat.T @ c)
        return v, w

    parts = parallel_map(per_shift, data.entries())
    return (np.column_stack([p[0] for p in parts]), np.column_stack([p[1] for p in parts]))


def reduce_index2(system, data, hidden=None):
    """Interpolatory reduction of a Stokes-type index-2 system.

    ``E~ = W^T E11 V``, ``A~ = W^T A11 V``, ``B~ = W^T Bmat``, ``C~ = Cmat V``
    with feedthrough ``Dscript + s * linear``. The reduced strictly proper
    part interpolates the hidden transfer function and the polynomial part
    is carried over exactly.
    """
    _require_index2(system)
    if len(data) == 0:
        raise EmptyBasis("no interpolation data")
    hidden = hidden or hidden_feedthrough(system)
    Vc, Wc = saddle_columns(system, data, hidden)
    V, W = paired_bases(Vc, Wc)
    blk = _blocks(system)
    Et = W.T @ as_dense(blk["E11"] @ V)
    At = W.T @ as_dense(blk["A11"] @ V)
    Bt = W.T @ hidden.Bmat
    Ct = hidden.Cmat @ V
    check_reduced_pencil(Et, At, data.points)
    lin = hidden.linear_poly_coeff
    extra = MatrixPolynomial([np.zeros_like(lin), lin]) if np.any(lin) else None
    return ReducedModel(
        Et, At, Bt, Ct, hidden.Dscript,
        polynomial_part=hidden.polynomial.trimmed(0.0),
        n_finite=V.shape[1],
        feedthrough_poly=extra,
        provenance={"method": "index2", "shifts": data.to_dict(), "order": V.shape[1]},
    )


def hidden_transfer(system, s, hidden=None, solver=None):
    """Strictly proper part ``Cmat (s E - A)^I Bmat`` of ``G`` from one saddle solve.

    Differences of two models with equal polynomial parts are best taken
    between their strictly proper parts: at high frequency ``G`` itself is
    dominated by ``s * linear`` and subtracting two such values loses all
    relative accuracy of the decaying remainder.
    """
    hidden = hidden or hidden_feedthrough(system)
    solver = solver or SaddleSolver(system, s)
    v, _ = solver.right(hidden.Bmat.astype(complex))
    return hidden.Cmat @ v


def _null_basis(M):
    return spla.null_space(np.asarray(M, dtype=float))


def restricted_inverse_oracle(system, sigma):
    """Dense ``(sigma E - A)^I`` from explicit null-space bases (test oracle only).

    Returns ``(R, Pi_l, Pi_r, hidden_E, hidden_A)`` where ``R`` is
    ``Theta_r1 (sigma Theta_l2^T E11 Theta_r1 - Theta_l2^T A11 Theta_r1)^{-1} Theta_l2^T``
    and ``hidden_*`` are ``sigma E - A`` restricted as ``Pi_l (.) Pi_r``.
    """
    Pi_l, Pi_r = projectors_index2(system)
    blk = _blocks(system)
    E11 = as_dense(blk["E11"]).astype(float)
    A11 = as_dense(blk["A11"]).astype(float)
    Tr1 = _null_basis(as_dense(blk["A21"]))
    Tl2 = _null_basis(as_dense(blk["A12"]).T)
    M = sigma * (Tl2.T @ E11 @ Tr1) - Tl2.T @ A11 @ Tr1
    R = Tr1 @ np.linalg.solve(M, Tl2.T)
    return R, Pi_l, Pi_r, Pi_l @ E11 @ Pi_r, Pi_l @ A11 @ Pi_r
