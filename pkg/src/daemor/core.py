"""Data model for descriptor systems, interpolation data and reduced models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch

__all__ = [
    "Structure",
    "GENERAL",
    "index1_blocks",
    "index2_blocks",
    "DescriptorSystem",
    "MatrixPolynomial",
    "InterpolationData",
    "ReducedModel",
    "Diagnostic",
    "validate",
    "conjugate_close",
    "as_dense",
]


def as_dense(M):
    """Return ``M`` as a dense ndarray (no copy for dense input)."""
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M)


def _freeze(M):
    if sp.issparse(M):
        return sp.csr_array(M)
    arr = np.array(M, dtype=float, copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Structure:
    """Declared block structure of a descriptor system.

    ``kind`` is one of ``"general"``, ``"index1"`` or ``"index2"``; the block
    sizes ``n1`` and ``n2`` are required for the two structured kinds.
    """

    kind: str = "general"
    n1: int | None = None
    n2: int | None = None

    def __post_init__(self):
        if self.kind not in ("general", "index1", "index2"):
            raise ValueError(f"unknown structure kind {self.kind!r}")
        if self.kind != "general" and (self.n1 is None or self.n2 is None):
            raise ValueError(f"{self.kind} structure needs block sizes n1, n2")

    @property
    def is_general(self):
        return self.kind == "general"


GENERAL = Structure()


def index1_blocks(n1, n2):
    return Structure("index1", int(n1), int(n2))


def index2_blocks(n1, n2):
    return Structure("index2", int(n1), int(n2))


@dataclass(frozen=True)
class DescriptorSystem:
    """Linear descriptor system ``E x' = A x + B u``, ``y = C x + D u``.

    Matrices may be dense arrays or scipy sparse matrices. ``D`` defaults to
    zero. The instance is immutable; dense inputs are copied and frozen.
    """

    E: Any
    A: Any
    B: Any
    C: Any
    D: Any = None
    structure: Structure = GENERAL

    def __post_init__(self):
        for name in ("E", "A", "B", "C"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        B, C = self.B, self.C
        if self.D is None:
            D = np.zeros((C.shape[0], B.shape[1]))
        else:
            D = as_dense(self.D)
        object.__setattr__(self, "D", _freeze(np.atleast_2d(D)))
        shapes = {k: getattr(self, k).shape for k in "EABCD"}
        n = shapes["E"][0]
        if (
            shapes["E"] != (n, n)
            or shapes["A"] != (n, n)
            or shapes["B"][0] != n
            or shapes["C"][1] != n
            or shapes["D"] != (shapes["C"][0], shapes["B"][1])
        ):
            raise DimensionMismatch(f"inconsistent system shapes {shapes}")
        st = self.structure
        if not st.is_general and st.n1 + st.n2 != n:
            raise DimensionMismatch(f"block sizes n1={st.n1} + n2={st.n2} != n={n}")

    @property
    def n(self):
        return self.E.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def is_sparse(self):
        return sp.issparse(self.E) or sp.issparse(self.A)

    def block(self, name, i, j=None):
        """Return block ``(i, j)`` (1-based) of matrix ``name`` per the declared structure.

        For ``B`` only ``i`` is used (row block), for ``C`` only ``i`` is used
        (column block).
        """
        st = self.structure
        if st.is_general:
            raise ValueError("general systems carry no block structure")
        cut = [slice(0, st.n1), slice(st.n1, st.n1 + st.n2)]
        M = getattr(self, name)
        if name == "B":
            out = M[cut[i - 1], :]
        elif name == "C":
            out = M[:, cut[i - 1]]
        else:
            out = M[cut[i - 1], :][:, cut[j - 1]]
        return out

    def dense(self):
        """Copy of the system with dense matrices."""
        return DescriptorSystem(
            as_dense(self.E), as_dense(self.A), as_dense(self.B), as_dense(self.C),
            self.D, self.structure,
        )

    def with_structure(self, structure):
        return DescriptorSystem(self.E, self.A, self.B, self.C, self.D, structure)


class MatrixPolynomial:
    """Matrix polynomial ``P(s) = sum_j coeffs[j] s**j`` with p-by-m coefficients.

    Trailing exactly-zero coefficients are dropped; the zero polynomial keeps a
    single zero coefficient so its shape is known.
    """

    def __init__(self, coeffs, shape=None):
        cs = [np.atleast_2d(np.asarray(c, dtype=float)) for c in coeffs]
        if not cs:
            if shape is None:
                raise ValueError("empty polynomial needs an explicit shape")
            cs = [np.zeros(shape)]
        while len(cs) > 1 and not np.any(cs[-1]):
            cs.pop()
        if len({c.shape for c in cs}) != 1:
            raise DimensionMismatch("polynomial coefficients differ in shape")
        self.coeffs = tuple(cs)
        for c in self.coeffs:
            c.setflags(write=False)

    @classmethod
    def constant(cls, D):
        return cls([D])

    @property
    def shape(self):
        return self.coeffs[0].shape

    @property
    def degree(self):
        """Degree; ``-1`` for the zero polynomial."""
        if len(self.coeffs) == 1 and not np.any(self.coeffs[0]):
            return -1
        return len(self.coeffs) - 1

    def __call__(self, s):
        out = np.zeros(self.shape, dtype=complex)
        for c in reversed(self.coeffs):
            out = out * s + c
        return out

    def derivative(self, s, ell=1):
        """Value of the ``ell``-th derivative at ``s``."""
        out = np.zeros(self.shape, dtype=complex)
        for j in range(len(self.coeffs) - 1, ell - 1, -1):
            fac = np.prod(np.arange(j - ell + 1, j + 1), dtype=float)
            out = out + fac * self.coeffs[j] * s ** (j - ell)
        return out

    def trimmed(self, rtol=1e-10):
        """Drop trailing coefficients that are negligible relative to the largest."""
        scale = max(np.linalg.norm(c) for c in self.coeffs)
        cs = list(self.coeffs)
        while len(cs) > 1 and np.linalg.norm(cs[-1]) <= rtol * scale:
            cs.pop()
        return MatrixPolynomial(cs)

    def padded(self, k):
        cs = list(self.coeffs) + [np.zeros(self.shape)] * max(0, k - len(self.coeffs))
        return np.array(cs)

    def relative_difference(self, other):
        """Largest coefficient-wise difference relative to the largest coefficient."""
        k = max(len(self.coeffs), len(other.coeffs))
        a, b = self.padded(k), other.padded(k)
        scale = max(np.abs(a).max(), np.abs(b).max(), np.finfo(float).tiny)
        return float(np.abs(a - b).max() / scale)

    def __repr__(self):
        return f"MatrixPolynomial(degree={self.degree}, shape={self.shape})"

    def to_list(self):
        return [c.tolist() for c in self.coeffs]


@dataclass(frozen=True)
class InterpolationData:
    """Interpolation points with right (m-vector) and left (p-vector) directions."""

    points: np.ndarray
    right_dirs: np.ndarray
    left_dirs: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex)).ravel()
        b = np.asarray(self.right_dirs, dtype=complex)
        c = np.asarray(self.left_dirs, dtype=complex)
        if b.ndim == 1:
            b = b.reshape(len(pts), -1)
        if c.ndim == 1:
            c = c.reshape(len(pts), -1)
        if not (len(pts) == b.shape[0] == c.shape[0]):
            raise DimensionMismatch("points and directions must have equal counts")
        for arr in (pts, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "right_dirs", b)
        object.__setattr__(self, "left_dirs", c)

    def __len__(self):
        return len(self.points)

    @classmethod
    def siso(cls, points):
        pts = np.atleast_1d(np.asarray(points, dtype=complex))
        ones = np.ones((len(pts), 1))
        return cls(pts, ones, ones)

    def entries(self):
        return list(zip(self.points, self.right_dirs, self.left_dirs))

    def has_zero_direction(self):
        return bool(
            np.any(np.all(self.right_dirs == 0, axis=1))
            or np.any(np.all(self.left_dirs == 0, axis=1))
        )

    def is_conjugate_closed(self, tol=0.0):
        for s, b, c in self.entries():
            if not any(
                abs(s2 - np.conj(s)) <= tol * max(1.0, abs(s))
                and np.allclose(b2, np.conj(b), rtol=tol, atol=tol)
                and np.allclose(c2, np.conj(c), rtol=tol, atol=tol)
                for s2, b2, c2 in self.entries()
            ):
                return False
        return True

    def to_dict(self):
        pair = lambda z: [float(np.real(z)), float(np.imag(z))]  # noqa: E731
        return {
            "points": [pair(s) for s in self.points],
            "right_dirs": [[pair(x) for x in row] for row in self.right_dirs],
            "left_dirs": [[pair(x) for x in row] for row in self.left_dirs],
        }

    @classmethod
    def from_dict(cls, d):
        cplx = lambda v: complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)  # noqa: E731
        pts = [cplx(v) for v in d["points"]]
        b = [[cplx(x) for x in row] for row in d["right_dirs"]]
        c = [[cplx(x) for x in row] for row in d["left_dirs"]]
        return cls(np.array(pts), np.array(b).reshape(len(pts), -1),
                   np.array(c).reshape(len(pts), -1))


def _same_entry(e1, e2):
    return e1[0] == e2[0] and np.array_equal(e1[1], e2[1]) and np.array_equal(e1[2], e2[2])


def conjugate_close(data):
    """Close ``data`` under conjugation.

    Every entry is kept in order; a missing conjugate partner is inserted right
    after its source. Entries that already have their exact partner are left
    alone, so the operation is idempotent.
    """
    entries = data.entries()
    out = []
    for e in entries:
        if any(_same_entry(e, o) for o in out):
            continue
        out.append(e)
        partner = (np.conj(e[0]), np.conj(e[1]), np.conj(e[2]))
        if _same_entry(e, partner):
            continue
        if any(_same_entry(partner, o) for o in entries) or any(
            _same_entry(partner, o) for o in out
        ):
            continue
        out.append(partner)
    pts = np.array([e[0] for e in out])
    return InterpolationData(pts, np.array([e[1] for e in out]), np.array([e[2] for e in out]))


@dataclass(frozen=True)
class ReducedModel:
    """Reduced descriptor model plus its polynomial part and provenance.

    The transfer function is ``C (sE - A)^-1 B + D + extra(s)`` where ``extra``
    is ``feedthrough_poly`` (only used for improper feedthrough that a
    realization with nonsingular ``E`` cannot carry). The leading
    ``n_finite`` states form the strictly proper part once ``D`` and the
    infinite block are removed; ``polynomial_part`` is the full polynomial
    part of the transfer function.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    polynomial_part: MatrixPolynomial | None = None
    n_finite: int | None = None
    feedthrough_poly: MatrixPolynomial | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in "EABCD":
            object.__setattr__(self, name, _freeze(as_dense(getattr(self, name))))
        r = self.E.shape[0]
        if (
            self.E.shape != (r, r)
            or self.A.shape != (r, r)
            or self.B.shape[0] != r
            or self.C.shape[1] != r
            or self.D.shape != (self.C.shape[0], self.B.shape[1])
        ):
            raise DimensionMismatch("inconsistent reduced model shapes")
        if self.n_finite is None:
            object.__setattr__(self, "n_finite", r)

    @property
    def order(self):
        return self.E.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def strictly_proper(self):
        """Realization ``(E_sp, A_sp, B_sp, C_sp)`` of the strictly proper part."""
        k = self.n_finite
        return (self.E[:k, :k], self.A[:k, :k], self.B[:k], self.C[:, :k])

    def as_system(self):
        """The reduced realization as a general :class:`DescriptorSystem` (without extra terms)."""
        return DescriptorSystem(self.E, self.A, self.B, self.C, self.D)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


def _dims_diagnostics(system):
    out = []
    n = system.E.shape[0]
    if system.E.shape != (n, n):
        out.append(Diagnostic("dims", "E must be square"))
    if system.A.shape != (n, n):
        out.append(Diagnostic("dims", "A must be square of the same order as E"))
    if system.B.shape[0] != n:
        out.append(Diagnostic("dims", "B must have n rows"))
    if system.C.shape[1] != n:
        out.append(Diagnostic("dims", "C must have n columns"))
    if system.D.shape != (system.C.shape[0], system.B.shape[1]):
        out.append(Diagnostic("dims", "D must be p x m"))
    return out


def _is_zero(M):
    if sp.issparse(M):
        return M.count_nonzero() == 0
    return not np.any(M)


def validate(system):
    """Check the structural invariants of ``system``.

    Returns a list of :class:`Diagnostic`; the list is empty iff all
    invariants hold. Nonsingularity uses the LU pivot criterion of
    :func:`daemor.linalg.is_nonsingular`.
    """
    from . import linalg

    diags = _dims_diagnostics(system)
    if diags:
        return diags
    st = system.structure
    if st.is_general:
        return diags
    if st.n1 + st.n2 != system.n:
        return [Diagnostic("dims", "n1 + n2 must equal n")]
    blk = system.block
    if st.kind == "index1":
        if not (_is_zero(blk("E", 2, 1)) and _is_zero(blk("E", 2, 2))):
            diags.append(Diagnostic("index1-form", "index-1 form needs E21 = 0 and E22 = 0"))
        if not linalg.is_nonsingular(blk("A", 2, 2)):
            diags.append(Diagnostic("A22", "A22 singular"))
        elif not linalg.is_nonsingular(linalg.index1_bordered(system)):
            diags.append(Diagnostic("schur", "E11 - E12 A22^-1 A21 singular"))
    else:
        if not (_is_zero(blk("E", 1, 2)) and _is_zero(blk("E", 2, 1)) and _is_zero(blk("E", 2, 2))):
            diags.append(Diagnostic("index2-form", "index-2 form needs E = diag(E11, 0)"))
        if not _is_zero(blk("A", 2, 2)):
            diags.append(Diagnostic("index2-form", "index-2 form needs A22 = 0"))
        E11 = blk("E", 1, 1)
        if not linalg.is_nonsingular(E11):
            diags.append(Diagnostic("E11", "E11 singular"))
        else:
            fac = linalg.factorize(E11)
            A12 = as_dense(blk("A", 1, 2))
            gram = as_dense(blk("A", 2, 1) @ fac.solve(A12))
            if not linalg.is_nonsingular(gram):
                diags.append(Diagnostic("index2-regularity", "index-2 regularity violated"))
    return diags
