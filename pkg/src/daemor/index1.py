"""Projector-free reduction of semi-explicit index-1 systems.

For ``E = [[E11, E12], [0, 0]]`` with nonsingular ``A22`` the polynomial part
of ``G`` is the constant matrix ``D~ = C1 M1 B2 + C2 M2 B2 + D``. Shifting
the projected matrices by ``D~`` along the tangential directions keeps the
bi-tangential Hermite conditions and matches ``G`` at infinity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MatrixPolynomial, ReducedModel, as_dense, conjugate_close
from .errors import (
    EmptyBasis,
    MethodStructureMismatch,
    SingularA22,
    SingularReducedE,
    SingularSchurComplement,
)
from .interpolation import check_reduced_pencil, parallel_map, project
from .linalg import ShiftedSolver, factorize, index1_bordered, is_nonsingular, orthonormalize

__all__ = [
    "Index1Feedthrough",
    "polynomial_part_index1",
    "tangential_columns",
    "d_shifted",
    "shifted_projection",
    "reduce_index1",
    "shift_feedthrough",
]


@dataclass(frozen=True)
class Index1Feedthrough:
    """``M1 B2``, ``M2 B2`` and ``D~``; ``M1`` and ``M2`` only when requested."""

    M1B2: np.ndarray
    M2B2: np.ndarray
    Dtilde: np.ndarray
    M1: np.ndarray | None = None
    M2: np.ndarray | None = None


def _require_index1(system):
    if system.structure.kind != "index1":
        raise MethodStructureMismatch("method/structure mismatch: index-1 blocks required")


def _factors(system):
    fA22 = factorize(system.block("A", 2, 2))
    if not fA22.ok:
        raise SingularA22(f"min pivot {fA22.min_pivot:.3e}")
    fK = factorize(index1_bordered(system))
    if not fK.ok:
        raise SingularSchurComplement(f"min pivot {fK.min_pivot:.3e}")
    return fA22, fK


def _schur_apply(system, fK, F):
    """Return ``(X, Z)`` with ``X = S^{-1} F`` and ``Z = -A22^{-1} A21 X``.

    ``S = E11 - E12 A22^{-1} A21``; both come from one bordered solve.
    """
    n1 = system.structure.n1
    rhs = np.vstack([F, np.zeros((system.structure.n2, F.shape[1]))])
    sol = fK.solve(rhs)
    return sol[:n1], sol[n1:]


def polynomial_part_index1(system, form_matrices=False):
    """Constant polynomial part of a semi-explicit index-1 system.

    ``M1 = S^{-1} E12 A22^{-1}`` and ``M2 = -A22^{-1} A21 M1 - A22^{-1}`` are
    applied through factorizations of ``A22`` and the bordered matrix
    ``[[E11, E12], [A21, A22]]`` (which carries ``S^{-1}``). Only ``m``
    solves are needed for ``D~``; with ``form_matrices`` the ``n2``-column
    matrices ``M1`` and ``M2`` are assembled as well.
    """
    _require_index1(system)
    fA22, fK = _factors(system)
    blk = system.block
    B2 = as_dense(blk("B", 2)).astype(float)
    E12 = blk("E", 1, 2)

    def apply(F2):
        Y = fA22.solve(F2)
        X, Z = _schur_apply(system, fK, as_dense(E12 @ Y))
        return X, Z - Y

    M1B2, M2B2 = apply(B2)
    Dt = as_dense(blk("C", 1) @ M1B2) + as_dense(blk("C", 2) @ M2B2) + as_dense(system.D)
    M1 = M2 = None
    if form_matrices:
        M1, M2 = apply(np.eye(system.structure.n2))
    return Index1Feedthrough(M1B2, M2B2, np.asarray(Dt, dtype=float), M1, M2)


def tangential_columns(system, data):
    """Raw complex columns ``(sigma E - A)^{-1} B b`` and ``(sigma E - A)^{-T} C^T c``."""
    B = as_dense(system.B)
    Ct = as_dense(system.C).T

    def per_shift(entry):
        s, b, c = entry
        solver = ShiftedSolver(system.E, system.A, s)
        return solver.solve(B @ b), solver.solve_adjoint(Ct @ c)

    parts = parallel_map(per_shift, data.entries())
    V = np.column_stack([p[0] for p in parts])
    W = np.column_stack([p[1] for p in parts])
    return V, W


def _real_coordinates(X, Q, what):
    """``K`` with ``X = Q K`` for real orthonormal ``Q`` spanning the columns of ``X``."""
    K = Q.T @ X
    if np.linalg.norm(X - Q @ K) > 1e-8 * max(np.linalg.norm(X), 1e-300):
        raise EmptyBasis(f"{what} columns not captured by the real basis")
    return K


def _realify_directions(M, what):
    if np.abs(M.imag).max(initial=0.0) > 1e-8 * max(np.abs(M).max(initial=0.0), 1e-300):
        raise ValueError(f"{what} is not real; interpolation data must be closed under conjugation")
    return M.real


def d_shifted(Et, At, Bt, Ct, Dt, Bdir, Cdir):
    """Shift a reduced quadruple by ``D~`` along the direction matrices.

    ``A~ + Cdir^T D~ Bdir``, ``B~ - Cdir^T D~``, ``C~ - D~ Bdir``; ``Bdir`` is
    ``m x r`` and ``Cdir`` is ``p x r``.
    """
    return (
        Et,
        At + Cdir.T @ Dt @ Bdir,
        Bt - Cdir.T @ Dt,
        Ct - Dt @ Bdir,
    )


def shifted_projection(system, data, Dt, method="index1"):
    """Tangential projection whose feedthrough is ``Dt`` instead of ``D``.

    The projected matrices are shifted by ``Dt - D`` along the direction
    matrices, which keeps the bi-tangential Hermite conditions for any
    ``Dt``. The data are closed under conjugation and the complex columns
    ``V = Q_V K_V`` are expressed in real orthonormal bases, so the direction
    matrices become the real ``B K_V^{-1}`` and ``C K_W^{-1}``. With
    ``Dt = D`` this is the plain projection.
    """
    data = conjugate_close(data)
    if len(data) == 0:
        raise EmptyBasis("no interpolation data")
    Vc, Wc = tangential_columns(system, data)
    r = len(data)
    V = orthonormalize(Vc)
    W = orthonormalize(Wc)
    if V.shape[1] != r or W.shape[1] != r:
        raise EmptyBasis(
            f"tangential bases have rank {V.shape[1]}/{W.shape[1]} < {r}; "
            "shifts or directions are degenerate"
        )
    KV = _real_coordinates(Vc, V, "right")
    KW = _real_coordinates(Wc, W, "left")
    Bdir = _realify_directions(np.linalg.solve(KV.T, data.right_dirs).T, "right direction matrix")
    Cdir = _realify_directions(np.linalg.solve(KW.T, data.left_dirs).T, "left direction matrix")
    red = project(system, V, W)
    Dt = np.asarray(Dt, dtype=float)
    Et, At, Bt, Ct = d_shifted(red.E, red.A, red.B, red.C, Dt - red.D, Bdir, Cdir)
    if not is_nonsingular(Et):
        raise SingularReducedE()
    check_reduced_pencil(Et, At, data.points)
    return ReducedModel(
        Et, At, Bt, Ct, Dt,
        polynomial_part=MatrixPolynomial([Dt]),
        n_finite=r,
        provenance={"method": method, "shifts": data.to_dict(), "order": r,
                    "direction_matrices": {"right": Bdir.tolist(), "left": Cdir.tolist()}},
    )


def reduce_index1(system, data, feedthrough=None):
    """Bi-tangential Hermite interpolation of a semi-explicit index-1 system.

    Bases come from the full ``(E, A, B, C)`` with no projectors; the reduced
    feedthrough is the polynomial part ``D~`` of ``G``, so the error is
    strictly proper.
    """
    _require_index1(system)
    fd = feedthrough or polynomial_part_index1(system)
    return shifted_projection(system, data, fd.Dtilde, method="index1")


def shift_feedthrough(model, Dt):
    """Replace the feedthrough of a projected model by ``Dt``, shifting along its directions.

    Applied once to a finished plain IRKA model this is the two-stage
    construction whose poles move away from the mirrored shifts.
    """
    Bdir = np.asarray(model.provenance["direction_matrices"]["right"])
    Cdir = np.asarray(model.provenance["direction_matrices"]["left"])
    Dt = np.asarray(Dt, dtype=float)
    Et, At, Bt, Ct = d_shifted(model.E, model.A, model.B, model.C, Dt - model.D, Bdir, Cdir)
    return ReducedModel(
        Et, At, Bt, Ct, Dt, polynomial_part=MatrixPolynomial([Dt]), n_finite=model.order,
        provenance={**model.provenance, "method": "irka-then-shift"},
    )
