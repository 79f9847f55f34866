"""Small hand-checkable systems shared by the test modules."""

import numpy as np
import pytest

from daemor.core import DescriptorSystem, Structure, index1_blocks, index2_blocks


def ode2():
    """E = I, A = -I, B = C = I (G(s) = I/(s+1))."""
    return DescriptorSystem(np.eye(2), -np.eye(2), np.eye(2), np.eye(2))


def canonical(structure=None):
    """E = diag(1, 0), A = diag(-1, 1), B = [1; 1], C = [1, 1]: G(s) = 1/(s+1) - 1."""
    E = np.diag([1.0, 0.0])
    A = np.diag([-1.0, 1.0])
    B = np.ones((2, 1))
    C = np.ones((1, 2))
    return DescriptorSystem(E, A, B, C, None, structure or Structure())


def nilpotent3(B=None, C=None):
    """E = [[1,0,0],[0,0,1],[0,0,0]], A = I: one finite eigenvalue and an index-2 Jordan chain."""
    E = np.array([[1.0, 0, 0], [0, 0, 1], [0, 0, 0]])
    A = np.eye(3)
    B = np.array([[1.0], [1.0], [1.0]]) if B is None else B
    C = np.array([[1.0, 1.0, 1.0]]) if C is None else C
    return DescriptorSystem(E, A, B, C)


def index1_small(D=0.0):
    """The n1 = 2, n2 = 1 semi-explicit example with hand-computed M1 = [-0.5; 0], M2 = 0.5."""
    E = np.zeros((3, 3))
    E[:2, :2] = np.eye(2)
    E[0, 2] = 1.0
    A = np.array([[-1.0, 0, 0], [0, -2, 1], [1, 0, -1]])
    B = np.array([[1.0], [0], [1]])
    C = np.array([[2.0, 0, 1]])
    return DescriptorSystem(E, A, B, C, np.array([[D]]), index1_blocks(2, 1))


def index2_small(B1=(0.0, 1.0), C2=0.0, B2=0.0):
    """n1 = 2, n2 = 1 Stokes-type example with hidden transfer function 1/(s+1)."""
    E = np.diag([1.0, 1.0, 0.0])
    A = np.array([[-1.0, 0, 1], [0, -1, 0], [1, 0, 0]])
    B = np.array([[B1[0]], [B1[1]], [B2]])
    C = np.array([[0.0, 1.0, C2]])
    return DescriptorSystem(E, A, B, C, None, index2_blocks(2, 1))


def random_ode(rng, n, m=1, p=1):
    E = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    X = rng.standard_normal((n, n))
    A = -(X @ X.T / n + 0.5 * np.eye(n)) + 0.3 * (X - X.T) / np.sqrt(n)
    return DescriptorSystem(E, E @ np.linalg.solve(E, A), rng.standard_normal((n, m)),
                            rng.standard_normal((p, n)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
