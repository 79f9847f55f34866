import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import index1_small
from daemor.analysis import eval_transfer
from daemor.core import DescriptorSystem, InterpolationData, conjugate_close, index1_blocks
from daemor.errors import (
    EmptyBasis,
    MethodStructureMismatch,
    SingularA22,
    SingularSchurComplement,
)
from daemor.index1 import d_shifted, polynomial_part_index1, reduce_index1, shifted_projection
from daemor.interpolation import reduce_dae, verify_interpolation
from daemor.model_io import generate_synthetic
from daemor.spectral import split_transfer, weierstrass


def _blocks(E11, E12, A11, A12, A21, A22, B1, B2, C1, C2, D=None):
    n1, n2 = E11.shape[0], A22.shape[0]
    E = np.block([[E11, E12], [np.zeros((n2, n1)), np.zeros((n2, n2))]])
    A = np.block([[A11, A12], [A21, A22]])
    return DescriptorSystem(E, A, np.vstack([B1, B2]), np.hstack([C1, C2]), D,
                            index1_blocks(n1, n2))


class TestPolynomialPart:
    def test_hand_example(self):
        fd = polynomial_part_index1(index1_small(), form_matrices=True)
        np.testing.assert_allclose(fd.M1, [[-0.5], [0.0]], atol=1e-15)
        np.testing.assert_allclose(fd.M2, [[0.5]], atol=1e-15)
        np.testing.assert_allclose(fd.Dtilde, [[-0.5]], atol=1e-15)
        np.testing.assert_allclose(fd.M1B2, fd.M1 @ [[1.0]])

    def test_limit_probe(self):
        s = index1_small()
        fd = polynomial_part_index1(s)
        G = eval_transfer(s, 1e8)
        np.testing.assert_allclose(G, fd.Dtilde, rtol=1e-6)

    def test_e12_zero_collapse(self, rng):
        n1, n2 = 3, 2
        A22 = -np.eye(n2) + 0.2 * rng.standard_normal((n2, n2))
        s = _blocks(np.eye(n1), np.zeros((n1, n2)), -np.eye(n1), rng.standard_normal((n1, n2)),
                    rng.standard_normal((n2, n1)), A22, rng.standard_normal((n1, 1)),
                    rng.standard_normal((n2, 1)), rng.standard_normal((1, n1)),
                    rng.standard_normal((1, n2)), np.array([[0.3]]))
        fd = polynomial_part_index1(s, form_matrices=True)
        np.testing.assert_allclose(fd.M1, 0, atol=1e-15)
        np.testing.assert_allclose(fd.M2, -np.linalg.inv(A22), rtol=1e-12)
        expected = -s.C[:, n1:] @ np.linalg.solve(A22, s.B[n1:]) + 0.3
        np.testing.assert_allclose(fd.Dtilde, expected, rtol=1e-12)

    def test_b2_zero(self):
        s = index1_small(D=0.7)
        B = s.B.copy()
        B[2] = 0
        s0 = DescriptorSystem(s.E, s.A, B, s.C, s.D, s.structure)
        np.testing.assert_array_equal(polynomial_part_index1(s0).Dtilde, [[0.7]])

    def test_singular_a22(self):
        s = index1_small()
        A = s.A.copy()
        A[2, 2] = 0
        with pytest.raises(SingularA22):
            polynomial_part_index1(DescriptorSystem(s.E, A, s.B, s.C, None, s.structure))

    def test_singular_schur(self):
        # E11 - E12 A22^{-1} A21 = I + e1 e1^T * (-1) with A21 = -e1^T... made singular
        s = index1_small()
        A = s.A.copy()
        A[2, 0] = -1.0  # S = I - e1 e1^T, singular
        with pytest.raises(SingularSchurComplement):
            polynomial_part_index1(DescriptorSystem(s.E, A, s.B, s.C, None, s.structure))

    def test_requires_index1(self):
        s = index1_small()
        with pytest.raises(MethodStructureMismatch, match="method/structure mismatch"):
            polynomial_part_index1(DescriptorSystem(s.E, s.A, s.B, s.C))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_split_transfer(self, seed):
        s = generate_synthetic("semiexplicit-index1", seed, n1=6, n2=3, m=2, p=2, D=True)
        _, P = split_transfer(s, weierstrass(s))
        assert P.degree == 0
        Dt = polynomial_part_index1(s).Dtilde
        np.testing.assert_allclose(Dt, P.coeffs[0], rtol=1e-8, atol=1e-10)

    def test_sparse_path(self):
        s = generate_synthetic("semiexplicit-index1", 2, n1=6, n2=3)
        ssp = DescriptorSystem(sp.csr_matrix(s.E), sp.csr_matrix(s.A), s.B, s.C, s.D, s.structure)
        np.testing.assert_allclose(polynomial_part_index1(ssp).Dtilde,
                                   polynomial_part_index1(s).Dtilde, rtol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_equivalence_invariance(self, seed):
        # D~ only depends on G, so an equivalence transform of the x1 block leaves it alone
        rng = np.random.default_rng(seed)
        s = generate_synthetic("semiexplicit-index1", seed, n1=4, n2=2)
        n1 = 4
        L = np.eye(n1) + 0.3 * rng.standard_normal((n1, n1))
        R = np.eye(n1) + 0.3 * rng.standard_normal((n1, n1))
        Lb = np.eye(6)
        Lb[:n1, :n1] = L
        Rb = np.eye(6)
        Rb[:n1, :n1] = R
        t = DescriptorSystem(Lb @ s.E @ Rb, Lb @ s.A @ Rb, Lb @ s.B, s.C @ Rb, s.D, s.structure)
        np.testing.assert_allclose(polynomial_part_index1(t).Dtilde,
                                   polynomial_part_index1(s).Dtilde, rtol=1e-8, atol=1e-12)


class TestReduceIndex1:
    def test_r1_sigma1(self):
        s = index1_small()
        data = InterpolationData.siso([1.0])
        m = reduce_index1(s, data)
        rep = verify_interpolation(s, m, data, tol=1e-8)
        assert rep.passed, rep.to_dict()
        assert abs(eval_transfer(m, 1e8)[0, 0] - (-0.5)) <= 1e-6

    def test_too_many_shifts(self):
        # the finite spectrum of the n = 3 example has dimension 2
        s = index1_small()
        with pytest.raises(EmptyBasis):
            reduce_index1(s, conjugate_close(InterpolationData.siso([0.5, 1 + 1j])))

    def test_d_shifted_identities(self, rng):
        r = 3
        Et, At = np.eye(r), -np.diag([1.0, 2.0, 3.0])
        Bt, Ct = rng.standard_normal((r, 2)), rng.standard_normal((2, r))
        Dt = rng.standard_normal((2, 2))
        Bdir = np.zeros((2, r))
        Bdir[0] = 1.0  # e1 directions
        Cdir = np.zeros((2, r))
        Cdir[0] = 1.0
        E2, A2, B2, C2 = d_shifted(Et, At, Bt, Ct, Dt, Bdir, Cdir)
        oracle_A = At.copy()
        for i in range(r):
            for j in range(r):
                oracle_A[i, j] += Dt[0, 0]
        np.testing.assert_allclose(A2, oracle_A)
        np.testing.assert_allclose(B2, Bt - np.outer(np.ones(r), Dt[0]))
        np.testing.assert_allclose(C2, Ct - np.outer(Dt[:, 0], np.ones(r)))
        np.testing.assert_array_equal(E2, Et)

    def test_zero_shift_is_plain_projection(self, rng):
        s = generate_synthetic("semiexplicit-index1", 1, n1=6, n2=3)
        data = InterpolationData.siso([0.5, 2.0])
        m = shifted_projection(s, data, s.D)
        assert verify_interpolation(s, m, data).passed
        np.testing.assert_array_equal(m.D, s.D)

    @pytest.mark.parametrize("seed", range(6))
    def test_random_interpolation_and_limit(self, seed):
        rng = np.random.default_rng(seed)
        s = generate_synthetic("semiexplicit-index1", seed, n1=8, n2=4, m=2, p=2, D=True)
        pts = np.array([0.3 + 0.0j, 1.0 + 2.0j, 5.0])
        data = conjugate_close(InterpolationData(pts, rng.standard_normal((3, 2)),
                                                 rng.standard_normal((3, 2))))
        m = reduce_index1(s, data)
        assert verify_interpolation(s, m, data, tol=1e-8).passed
        Dt = polynomial_part_index1(s).Dtilde
        assert np.linalg.norm(eval_transfer(m, 1e8) - Dt) <= 1e-6 * np.linalg.norm(Dt)
        # agreement with the general path
        md = reduce_dae(s, data)
        for z in rng.uniform(0.1, 10, 10) + 1j * rng.uniform(-10, 10, 10):
            G1, G2 = eval_transfer(m, z), eval_transfer(md, z)
            assert np.linalg.norm(G1 - G2) <= 1e-7 * np.linalg.norm(G2)

    def test_requires_index1(self):
        s = index1_small()
        with pytest.raises(MethodStructureMismatch):
            reduce_index1(DescriptorSystem(s.E, s.A, s.B, s.C), InterpolationData.siso([1.0]))
