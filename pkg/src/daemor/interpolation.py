"""Tangential rational Krylov bases, Petrov-Galerkin projection and interpolation checks."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import eval_transfer, eval_transfer_derivative
from .core import MatrixPolynomial, ReducedModel, as_dense
from .errors import DimensionMismatch, EmptyBasis, SingularReducedPencil
from .linalg import ShiftedSolver, is_nonsingular, orthonormalize
from .spectral import infinite_deflating_bases, split_transfer, weierstrass

__all__ = [
    "ProjectionPair",
    "krylov_columns",
    "adjoint_krylov_columns",
    "paired_bases",
    "tangential_bases",
    "project",
    "reduce_naive",
    "reduce_dae",
    "assemble_dae",
    "check_reduced_pencil",
    "InterpolationReport",
    "verify_interpolation",
    "set_workers",
]

_WORKERS = 1


def set_workers(n):
    """Number of threads used for independent per-shift solves (1 = sequential)."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def parallel_map(fn, items):
    items = list(items)
    if _WORKERS == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=_WORKERS) as pool:
        return list(pool.map(fn, items))


def krylov_columns(system, sigma, b, N=1, projector=None, solver=None):
    """Columns ``((sigma E - A)^{-1} E)^{j-1} (sigma E - A)^{-1} Bh b``, ``j = 1..N``.

    ``Bh = projector @ B`` when a (left spectral) projector is given.
    """
    B = as_dense(system.B)
    if projector is not None:
        B = projector @ B
    rhs = B @ np.asarray(b, dtype=complex).reshape(-1)
    solver = solver or ShiftedSolver(system.E, system.A, sigma)
    cols = [solver.solve(rhs)]
    for _ in range(N - 1):
        cols.append(solver.solve(system.E @ cols[-1]))
    return np.column_stack(cols)


def adjoint_krylov_columns(system, mu, c, M=1, projector=None, solver=None):
    """Columns ``((mu E - A)^{-T} E^T)^{j-1} (mu E - A)^{-T} Ph^T C^T c``, ``j = 1..M``."""
    Ct = as_dense(system.C).T
    if projector is not None:
        Ct = projector.T @ Ct
    rhs = Ct @ np.asarray(c, dtype=complex).reshape(-1)
    solver = solver or ShiftedSolver(system.E, system.A, mu)
    cols = [solver.solve_adjoint(rhs)]
    Et = system.E.T
    for _ in range(M - 1):
        cols.append(solver.solve_adjoint(Et @ cols[-1]))
    return np.column_stack(cols)


@dataclass(frozen=True)
class ProjectionPair:
    V: np.ndarray
    W: np.ndarray
    tags: list = field(default_factory=list)

    @property
    def r(self):
        return self.V.shape[1]


def paired_bases(Vc, Wc, rtol=1e-12):
    """Orthonormalize both sides and truncate the larger one to the common rank."""
    V = orthonormalize(Vc, rtol)
    W = orthonormalize(Wc, rtol)
    k = min(V.shape[1], W.shape[1])
    return V[:, :k], W[:, :k]


def tangential_bases(system, data, N=1, M=1, P_l=None, P_r=None):
    """Real orthonormal ``(V, W)`` from the right/left tangential Krylov columns.

    One factorization per shift serves both sides.
    """

    def per_shift(entry):
        sigma, b, c = entry
        solver = ShiftedSolver(system.E, system.A, sigma)
        v = krylov_columns(system, sigma, b, N, P_l, solver)
        w = adjoint_krylov_columns(system, sigma, c, M, P_r, solver)
        return v, w

    parts = parallel_map(per_shift, data.entries())
    Vc = np.hstack([p[0] for p in parts])
    Wc = np.hstack([p[1] for p in parts])
    V, W = paired_bases(Vc, Wc)
    tags = [
        {"shift": [float(s.real), float(s.imag)], "moments_right": N, "moments_left": M}
        for s in data.points
    ]
    return ProjectionPair(V, W, tags)


def project(system, V, W):
    """Petrov-Galerkin projection ``(W^T E V, W^T A V, W^T B, C V, D)``."""
    V = np.asarray(V)
    W = np.asarray(W)
    if V.shape != W.shape or V.shape[0] != system.n:
        raise DimensionMismatch(f"bases of shape {V.shape} and {W.shape} for n={system.n}")
    E = as_dense(W.T @ (system.E @ V))
    A = as_dense(W.T @ (system.A @ V))
    B = as_dense(W.T @ as_dense(system.B))
    C = as_dense(system.C @ V)
    return ReducedModel(E, A, B, C, as_dense(system.D), provenance={"method": "project"})


def check_reduced_pencil(E, A, points):
    """Raise :class:`SingularReducedPencil` if ``sigma E - A`` is singular at a shift."""
    for s in points:
        if not is_nonsingular(s * np.asarray(E) - np.asarray(A)):
            raise SingularReducedPencil(s, "reduced pencil singular at an interpolation point")


def _require_data(data):
    if len(data) == 0:
        raise EmptyBasis("no interpolation data")
    if data.has_zero_direction():
        raise ValueError("tangential directions must be nonzero")


def reduce_naive(system, data, N=1, M=1):
    """Bi-tangential Hermite interpolation that ignores the polynomial part."""
    _require_data(data)
    pair = tangential_bases(system, data, N, M)
    red = project(system, pair.V, pair.W)
    check_reduced_pencil(red.E, red.A, data.points)
    return ReducedModel(
        red.E, red.A, red.B, red.C, red.D,
        provenance={"method": "naive", "shifts": data.to_dict(), "order": pair.r},
    )


def infinite_block_polynomial(Einf, Ainf, Binf, Cinf, D):
    """Polynomial ``D + Cinf (s Einf - Ainf)^{-1} Binf`` of a block with nilpotent ``Ainf^{-1} Einf``."""
    D = np.asarray(D, dtype=float)
    k = Einf.shape[0]
    if k == 0:
        return MatrixPolynomial([D])
    Nmat = np.linalg.solve(Ainf, Einf)
    X = np.linalg.solve(Ainf, Binf)
    coeffs = [D - Cinf @ X]
    for _ in range(1, k):
        X = Nmat @ X
        coeffs.append(-Cinf @ X)
    return MatrixPolynomial(coeffs).trimmed(1e-10)


def reduce_dae(system, data, w=None, N=1, M=1):
    """Interpolation with spectral projectors plus the full infinite deflating subspaces.

    Projecting with ``V = [V_f, V_inf]`` and ``W = [W_f, W_inf]`` gives a
    block-diagonal reduced pencil: the finite block interpolates the strictly
    proper part and the infinite block reproduces the polynomial part
    exactly. The returned model keeps the ``r``-state finite block as its
    realization and carries the polynomial part explicitly (``D = P_0``,
    higher coefficients in ``feedthrough_poly``). The projected infinite
    block is stored in the provenance; evaluating it as a state-space block
    is inaccurate at high frequency, since rounding turns its nilpotent part
    into spurious poles of size ``eps^(-1/nu)``.
    """
    _require_data(data)
    if w is None:
        w = weierstrass(system)
    pair = tangential_bases(system, data, N, M, P_l=w.P_l, P_r=w.P_r)
    # The shifted solves amplify rounding components along the infinite
    # deflating subspaces; projecting the bases once more removes them.
    Vf, Wf = paired_bases(w.P_r @ pair.V, w.P_l.T @ pair.W)
    return assemble_dae(system, w, Vf, Wf, data)


def assemble_dae(system, w, Vf, Wf, data, method="dae"):
    """Project with ``[Vf, V_inf]``/``[Wf, W_inf]`` and split off the polynomial part."""
    W_inf, V_inf = infinite_deflating_bases(w)
    V = np.hstack([Vf, V_inf])
    W = np.hstack([Wf, W_inf])
    red = project(system, V, W)
    r = Vf.shape[1]
    f, i = slice(0, r), slice(r, None)
    poly = infinite_block_polynomial(red.E[i, i], red.A[i, i], red.B[i], red.C[:, i], red.D)
    check_reduced_pencil(red.E[f, f], red.A[f, f], data.points)
    coupling = max(
        (float(np.abs(X).max()) for X in (red.E[f, i], red.E[i, f], red.A[f, i], red.A[i, f])
         if X.size),
        default=0.0,
    )
    prov = {
        "method": method, "shifts": data.to_dict(), "order": r, "n_inf": w.n_inf,
        "effective_order": r + w.n_inf, "block_coupling": coupling,
        "infinite_block": {
            "E": red.E[i, i].tolist(), "A": red.A[i, i].tolist(),
            "B": red.B[i].tolist(), "C": red.C[:, i].tolist(),
        },
    }
    extra = None
    if poly.degree >= 1:
        extra = MatrixPolynomial([np.zeros(poly.shape)] + list(poly.coeffs[1:]))
    return ReducedModel(red.E[f, f], red.A[f, f], red.B[f], red.C[:, f], poly.coeffs[0],
                        polynomial_part=poly, n_finite=r, feedthrough_poly=extra,
                        provenance=prov)


def full_polynomial_part(system, w=None):
    """Polynomial part of ``G`` (dense path)."""
    w = w or weierstrass(system)
    return split_transfer(system, w)[1]


# ---------------------------------------------------------------- verification

COMPLEX_STEP = 1e-20
REPORT_TOL = 1e-6


def numeric_derivative(model, s):
    """``G'(s)``: complex step for real ``s``, central difference otherwise."""
    s = complex(s)
    if s.imag == 0:
        return eval_transfer(model, s.real + 1j * COMPLEX_STEP).imag / COMPLEX_STEP
    h = 1e-6 * max(1.0, abs(s))
    return (eval_transfer(model, s + h) - eval_transfer(model, s - h)) / (2 * h)


@dataclass
class InterpolationReport:
    """Relative residuals of the tangential interpolation conditions."""

    rows: list
    tol: float = REPORT_TOL

    @property
    def max_residual(self):
        return max((r["residual"] for r in self.rows), default=0.0)

    @property
    def passed(self):
        return all(r["residual"] <= self.tol for r in self.rows)

    def to_dict(self):
        return {"tol": self.tol, "passed": self.passed, "max_residual": self.max_residual,
                "conditions": self.rows}


def _rel(a, b):
    a = np.asarray(a)
    den = np.linalg.norm(a)
    err = np.linalg.norm(a - np.asarray(b))
    return float(err / den) if den > 0 else float(err)


def verify_interpolation(full, reduced, data, derivative_orders=(0, 1), tol=REPORT_TOL):
    """Check ``G(s)b = G~(s)b``, ``c^T G(s) = c^T G~(s)`` and ``c^T G^(l)(s) b`` matches.

    Order 1 uses numerical differentiation (complex step on real shifts,
    central differences on complex ones); orders above 1 use the closed form.
    """
    rows = []
    for i, (s, b, c) in enumerate(data.entries()):
        G = eval_transfer(full, s)
        Gr = eval_transfer(reduced, s)
        for ell in derivative_orders:
            if ell == 0:
                rows.append({"index": i, "kind": "right", "order": 0,
                             "residual": _rel(G @ b, Gr @ b)})
                rows.append({"index": i, "kind": "left", "order": 0,
                             "residual": _rel(c @ G, c @ Gr)})
                continue
            if ell == 1:
                d, dr = numeric_derivative(full, s), numeric_derivative(reduced, s)
            else:
                d = eval_transfer_derivative(full, s, ell)
                dr = eval_transfer_derivative(reduced, s, ell)
            rows.append({"index": i, "kind": "hermite", "order": int(ell),
                         "residual": _rel(c @ d @ b, c @ dr @ b)})
    for r in rows:
        r["sigma"] = [float(np.real(data.points[r["index"]])), float(np.imag(data.points[r["index"]]))]
    return InterpolationReport(rows, tol)
