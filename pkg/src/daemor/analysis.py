"""Transfer function evaluation, frequency sweeps and system norms."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate as spi
import scipy.linalg as spla

from .core import ReducedModel, as_dense
from .errors import DenseLimitExceeded, SingularShift, UnstableSystem
from .linalg import ShiftedSolver
from .spectral import StrictlyProperRealization, dense_limit

log = logging.getLogger(__name__)

__all__ = [
    "FrequencyResponse",
    "eval_transfer",
    "eval_transfer_derivative",
    "bode_sample",
    "h2_norm_sp",
    "h2_error",
    "hinf_estimate",
    "DEFAULT_GRID",
]

DEFAULT_GRID = (1e-3, 1e6, 400)


def _parts(model):
    if isinstance(model, (tuple, list)):
        E, A, B, C = model
        return E, A, B, C, np.zeros((np.shape(C)[0], np.shape(B)[1])), None
    if isinstance(model, ReducedModel):
        return model.E, model.A, model.B, model.C, model.D, model.feedthrough_poly
    if isinstance(model, StrictlyProperRealization):
        D = np.zeros((model.C.shape[0], model.B.shape[1]))
        return model.E, model.A, model.B, model.C, D, None
    return model.E, model.A, model.B, model.C, model.D, None


def eval_transfer(model, s):
    """``G(s) = C (sE - A)^{-1} B + D`` (+ extra feedthrough polynomial)."""
    E, A, B, C, D, extra = _parts(model)
    X = ShiftedSolver(E, A, s).solve(as_dense(B).astype(complex))
    G = C @ X + D
    if extra is not None:
        G = G + extra(s)
    return np.asarray(G)


def eval_transfer_derivative(model, s, ell=1):
    """``G^(l)(s) = (-1)^l l! C [(sE-A)^{-1} E]^l (sE-A)^{-1} B`` (+ extra terms)."""
    if ell < 1:
        return eval_transfer(model, s)
    if ell > 4:
        raise ValueError("derivative order is capped at 4")
    E, A, B, C, D, extra = _parts(model)
    solver = ShiftedSolver(E, A, s)
    X = solver.solve(as_dense(B).astype(complex))
    for _ in range(ell):
        X = solver.solve(E @ X)
    G = (-1) ** ell * math.factorial(ell) * (C @ X)
    if extra is not None:
        G = G + extra.derivative(s, ell)
    return np.asarray(G)


@dataclass(frozen=True)
class FrequencyResponse:
    omegas: np.ndarray
    values: np.ndarray

    @property
    def magnitudes(self):
        return np.abs(self.values)


def log_grid(wmin, wmax, npts):
    if not (wmin > 0 and wmax > wmin and npts >= 2):
        raise ValueError("need 0 < wmin < wmax and npts >= 2")
    return np.logspace(np.log10(wmin), np.log10(wmax), int(npts))


def bode_sample(model, wmin=DEFAULT_GRID[0], wmax=DEFAULT_GRID[1], npts=DEFAULT_GRID[2]):
    omegas = log_grid(wmin, wmax, npts)
    vals = []
    for w in omegas:
        try:
            vals.append(eval_transfer(model, 1j * w))
        except SingularShift as exc:
            raise SingularShift(1j * w, f"imaginary-axis pole at omega={w:.6g}") from exc
    return FrequencyResponse(omegas, np.array(vals))


def _realization(sys_sp):
    if isinstance(sys_sp, (tuple, list)):
        return tuple(np.asarray(as_dense(M), dtype=float) for M in sys_sp)
    return tuple(np.asarray(as_dense(getattr(sys_sp, k)), dtype=float) for k in "EABC")


def h2_norm_sp(sys_sp):
    """H2 norm of the strictly proper system ``C (sE - A)^{-1} B`` with ``E`` nonsingular.

    Solves ``A P E^T + E P A^T + B B^T = 0`` and returns
    ``sqrt(trace(C P C^T))``.
    """
    E, A, B, C = _realization(sys_sp)
    n = E.shape[0]
    if n > dense_limit():
        raise DenseLimitExceeded(n, dense_limit())
    if n == 0 or not np.any(B) or not np.any(C):
        return 0.0
    lam = spla.eigvals(A, E)
    if not np.all(np.isfinite(lam)) or np.max(lam.real) >= 0:
        raise UnstableSystem("finite spectrum is not in the open left half-plane")
    Ah = np.linalg.solve(E, A)
    Bh = np.linalg.solve(E, B)
    P = spla.solve_continuous_lyapunov(Ah, -Bh @ Bh.T)
    val = np.trace(C @ P @ C.T)
    return float(np.sqrt(max(val.real, 0.0)))


def _h2_quadrature(err, poles, scale=0.0):
    """``sqrt(1/pi * int_0^inf ||err(iw)||_F^2 dw)`` for a real strictly proper ``err``.

    ``scale`` is a reference H2 norm; contributions below ``1e-15 * scale``
    are treated as rounding noise.
    """

    def integrand(theta):
        w = math.tan(theta)
        H = err(1j * w)
        return float(np.sum(np.abs(H) ** 2)) / math.cos(theta) ** 2

    brk = sorted({math.atan(abs(p.imag)) for p in poles if abs(p.imag) > 0})
    brk = [b for b in brk if 0 < b < math.pi / 2]
    # near-zero errors are pure rounding noise and QUADPACK reports that as
    # bad integrand behavior; the estimate is still the right magnitude
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", spi.IntegrationWarning)
        val, _ = spi.quad(integrand, 0.0, math.pi / 2, points=brk or None,
                          limit=500, epsabs=math.pi * (1e-15 * scale) ** 2,
                          epsrel=1e-8)
    for w in caught:
        log.debug("H2 quadrature: %s", str(w.message).splitlines()[0])
    return math.sqrt(max(val, 0.0) / math.pi)


def h2_error(full_sp, reduced_sp, full_poly=None, reduced_poly=None, poly_rtol=1e-8):
    """H2 norm of ``G - G~`` given strictly proper realizations of both.

    Returns ``(value, reason)``; ``value`` is ``inf`` when the supplied
    polynomial parts differ. The Lyapunov route loses accuracy when the
    error is at the square root of machine precision relative to ``||G||``
    (the difference of two nearly equal quadratic forms), so small results
    are recomputed by quadrature of ``||G(iw) - G~(iw)||_F^2``.
    """
    if full_poly is not None and reduced_poly is not None:
        diff = full_poly.relative_difference(reduced_poly)
        if diff > poly_rtol:
            return math.inf, f"polynomial parts differ (relative {diff:.3e})"
    E1, A1, B1, C1 = _realization(full_sp)
    E2, A2, B2, C2 = _realization(reduced_sp)
    Ee = spla.block_diag(E1, E2)
    Ae = spla.block_diag(A1, A2)
    Be = np.vstack([B1, B2])
    Ce = np.hstack([C1, -C2])
    val = h2_norm_sp((Ee, Ae, Be, Ce))
    ref = max(h2_norm_sp((E1, A1, B1, C1)), h2_norm_sp((E2, A2, B2, C2)))
    if val <= 1e-4 * ref:
        poles = spla.eigvals(Ae, Ee)

        def err(s):
            return eval_transfer((E1, A1, B1, C1), s) - eval_transfer((E2, A2, B2, C2), s)

        val = _h2_quadrature(err, poles, ref)
    return val, ""


def hinf_estimate(full, reduced, wmin=DEFAULT_GRID[0], wmax=DEFAULT_GRID[1],
                  npts=DEFAULT_GRID[2], full_output=False):
    """Grid estimate (a lower bound) of ``sup_w sigma_max(G(iw) - G~(iw))``.

    With ``full_output`` returns ``(value, omega_at_peak, divergent)`` where
    ``divergent`` flags an error that is still growing at ``wmax``.
    """
    omegas = log_grid(wmin, wmax, npts)
    errs = np.array([
        np.linalg.norm(eval_transfer(full, 1j * w) - eval_transfer(reduced, 1j * w), 2)
        for w in omegas
    ])
    k = int(np.argmax(errs))
    val = float(errs[k])
    if not full_output:
        return val
    tail = errs[-max(3, npts // 20):]
    divergent = bool(k >= npts - 2 and np.all(np.diff(tail) > 0))
    return val, float(omegas[k]), divergent
