"""IRKA fixed-point iterations for descriptor systems and a first-order optimality check.

All variants share one loop: build a reduced model from the current shifts
and directions, take the eigentriples of its strictly proper pencil, mirror
the reduced poles to get the next shifts and read the next directions off the
residues. They differ only in how a reduced model is built from interpolation
data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .analysis import eval_transfer
from .core import InterpolationData, as_dense, conjugate_close
from .errors import (
    DefectivePencil,
    InvalidParams,
    MaxIterExceeded,
    SingularShift,
)
from .index1 import polynomial_part_index1, reduce_index1, shift_feedthrough, shifted_projection
from .index2 import SaddleSolver, hidden_feedthrough, reduce_index2
from .interpolation import InterpolationReport, numeric_derivative, reduce_dae, _rel
from .linalg import ShiftedSolver, arnoldi_ritz, eig_pencil
from .spectral import weierstrass

log = logging.getLogger(__name__)

__all__ = [
    "IrkaConfig",
    "IrkaResult",
    "irka",
    "irka_dae",
    "irka_index1",
    "irka_index2",
    "irka_naive",
    "irka_naive_then_shift",
    "shift_change",
    "break_cycle",
    "seed_shifts",
    "default_seed",
    "index2_seed",
    "check_h2_first_order",
    "OptimalityReport",
    "next_data",
]

MAX_RETRIES = 4
RITZ_FLOOR = 1e-6
# a step that lands this much closer to the iterate before last than to the
# current one is treated as a two-cycle
CYCLE_RATIO = 0.2


@dataclass
class IrkaConfig:
    r: int
    max_iter: int = 100
    shift_tol: float = 1e-6
    initial: InterpolationData | None = None
    defect_retry: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if int(self.r) < 1:
            raise InvalidParams("reduced order r must be at least 1")
        if self.max_iter < 1 or not self.shift_tol > 0 or not self.defect_retry > 0:
            raise InvalidParams("max_iter, shift_tol and defect_retry must be positive")
        self.r = int(self.r)


@dataclass
class IrkaResult:
    model: object
    converged: bool
    iterations: int
    shift_history: list
    final_shift_change: float
    data: InterpolationData
    retries: int = 0
    method: str = ""
    history_changes: list = field(default_factory=list)
    averaged_steps: int = 0

    def to_dict(self):
        pair = lambda z: [float(np.real(z)), float(np.imag(z))]  # noqa: E731
        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_shift_change": self.final_shift_change,
            "retries": self.retries,
            "averaged_steps": self.averaged_steps,
            "shift_changes": self.history_changes,
            "shift_history": [[pair(s) for s in h] for h in self.shift_history],
            "final_data": self.data.to_dict(),
        }


def shift_change(old, new):
    """Largest relative shift change under the optimal matching of the two multisets."""
    old = np.asarray(old, dtype=complex)
    new = np.asarray(new, dtype=complex)
    if old.shape != new.shape:
        return np.inf
    denom = np.maximum(np.abs(old), np.finfo(float).tiny)
    cost = np.abs(new[None, :] - old[:, None]) / denom[:, None]
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def _pair_partners(lam):
    """Index of each eigenvalue's exact conjugate partner (itself when real)."""
    partner = list(range(len(lam)))
    for i, l in enumerate(lam):
        if l.imag > 0:
            for j in range(len(lam)):
                if j != i and lam[j] == np.conj(l):
                    partner[i], partner[j] = j, i
                    break
    return partner


def next_data(Et, At, Bt, Ct):
    """Mirrored reduced poles with residue directions ``b_i = B~^T conj(y_i)``, ``c_i = C~ z_i``."""
    triples = eig_pencil(Et, At)
    lam = np.array([t.lam for t in triples])
    Y = np.column_stack([t.y for t in triples])
    Z = np.column_stack([t.z for t in triples])
    b = (np.asarray(Bt).T @ Y.conj()).T
    c = (np.asarray(Ct) @ Z).T
    for i, j in enumerate(_pair_partners(lam)):
        if lam[i].imag > 0 and j != i:
            b[j] = np.conj(b[i])
            c[j] = np.conj(c[i])
    return InterpolationData(-lam + 0.0j, b, c), lam


def _perturb(data, delta, sigma=None):
    pts = np.array(data.points)
    hit = np.ones(len(pts), dtype=bool)
    if sigma is not None:
        near = np.abs(pts - sigma) <= 1e-12 * max(1.0, abs(sigma))
        near |= np.abs(pts - np.conj(sigma)) <= 1e-12 * max(1.0, abs(sigma))
        if near.any():
            hit = near
    for k in np.flatnonzero(hit):
        s = pts[k]
        if s.imag > 0:
            pts[k] = s * (1 + 1j * delta)
        elif s.imag < 0:
            pts[k] = s * (1 - 1j * delta)
        else:
            pts[k] = s * (1 + delta)
    return InterpolationData(pts, data.right_dirs, data.left_dirs)


def _matching(old, new):
    old = np.asarray(old, dtype=complex)
    new = np.asarray(new, dtype=complex)
    denom = np.maximum(np.abs(old), np.finfo(float).tiny)
    cost = np.abs(new[None, :] - old[:, None]) / denom[:, None]
    return linear_sum_assignment(cost)[1]


def break_cycle(before, data, new):
    """Midpoint step when the iteration bounces back towards ``before``.

    Plain IRKA can settle into a two-cycle between shift sets, typically when
    a real shift keeps jumping across a pair of complex poles. Replacing the
    step by the midpoint of the matched shifts (keeping the new directions)
    leaves fixed points untouched, since at a fixed point no cycle is
    detected. Returns ``None`` when no cycle is seen or the midpoint is not
    closed under conjugation.
    """
    step = shift_change(data.points, new.points)
    if before is None or not step > 0 or shift_change(before.points, new.points) >= CYCLE_RATIO * step:
        return None
    perm = _matching(data.points, new.points)
    mid = 0.5 * (np.asarray(data.points) + np.asarray(new.points)[perm])
    real = np.abs(mid.imag) <= 1e-10 * np.abs(mid)
    mid[real] = mid[real].real
    keep = mid.imag >= 0
    if int(real.sum()) + 2 * int((mid.imag > 0).sum()) != len(mid):
        return None
    half = InterpolationData(mid[keep], new.right_dirs[perm][keep], new.left_dirs[perm][keep])
    out = conjugate_close(half)
    return out if len(out) == len(mid) else None


def irka(build, initial, config, method="irka", finalize=None):
    """Generic fixed-point loop.

    ``build(data)`` returns a reduced model whose ``strictly_proper()``
    quadruple drives the eigen-update. ``finalize(data)`` (default
    ``build``) assembles the returned model from the final data.
    """
    finalize = finalize or build
    data = initial
    history = [np.array(data.points)]
    changes = []
    retries = averaged = 0
    before = None
    best = (np.inf, None)
    change = np.inf
    iterations = 0
    for it in range(1, config.max_iter + 1):
        iterations = it
        delta = config.defect_retry
        for attempt in range(MAX_RETRIES + 1):
            try:
                model = build(data)
                new, _ = next_data(*model.strictly_proper())
                break
            except (SingularShift, DefectivePencil) as exc:
                if attempt == MAX_RETRIES:
                    raise
                retries += 1
                log.info("retrying iteration %d after %s", it, exc)
                data = _perturb(data, delta, getattr(exc, "sigma", None))
                delta *= 10
        change = shift_change(data.points, new.points)
        changes.append(change)
        if change < best[0]:
            best = (change, new)
        if change <= config.shift_tol:
            data = new
            history.append(np.array(data.points))
            final = _finalize_with_retry(finalize, data, config)
            return IrkaResult(final, True, it, history, change, data, retries, method, changes,
                              averaged)
        mid = break_cycle(before, data, new)
        if mid is not None:
            averaged += 1
            log.info("iteration %d: two-cycle detected, taking the midpoint", it)
        before, data = data, (new if mid is None else mid)
        history.append(np.array(data.points))
    final_data = best[1] if best[1] is not None else data
    final = _finalize_with_retry(finalize, final_data, config)
    log.warning("IRKA (%s) hit max_iter=%d; best shift change %.3e", method, config.max_iter, best[0])
    return IrkaResult(final, False, iterations, history, float(best[0]), final_data, retries,
                      method, changes, averaged)


def _finalize_with_retry(finalize, data, config):
    delta = config.defect_retry
    for attempt in range(MAX_RETRIES + 1):
        try:
            return finalize(data)
        except SingularShift as exc:
            if attempt == MAX_RETRIES:
                raise
            data = _perturb(data, delta, exc.sigma)
            delta *= 10
    raise MaxIterExceeded("could not assemble the final model")  # pragma: no cover


# ------------------------------------------------------------------ seeding


def _ritz_poles(apply_factory, n, k, seed):
    """Finite pole estimates from Arnoldi on ``(s0 E - A)^{-1} E`` (``lambda = s0 - 1/theta``)."""
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    for s0 in (0.0, 1.0):
        try:
            op = apply_factory(s0)
        except SingularShift:
            continue
        theta = arnoldi_ritz(op, v0, k)
        big = np.abs(theta).max(initial=0.0)
        # tiny Ritz values belong to the infinite eigenvalues (split by rounding)
        theta = theta[np.abs(theta) > RITZ_FLOOR * max(big, 1e-300)]
        if theta.size:
            return s0 - 1.0 / theta
    return np.array([-1.0])


def _log_shifts(poles, r):
    mags = np.abs(poles)
    mags = mags[mags > 0]
    lo, hi = (mags.min(), mags.max()) if mags.size else (1.0, 1.0)
    if r == 1:
        return np.array([np.sqrt(lo * hi)])
    if hi <= lo * (1 + 1e-12):
        hi = lo * 10.0
    return np.logspace(np.log10(lo), np.log10(hi), r)


def _dominant_directions(transfer, D, shifts):
    b, c = [], []
    for s in shifts:
        H = np.real_if_close(transfer(s) - D)
        U, _, Vh = np.linalg.svd(np.atleast_2d(H))
        b.append(Vh[0].conj())
        c.append(U[:, 0])
    return np.array(b), np.array(c)


def seed_shifts(n, D, r, apply_factory, transfer, seed=0):
    """Default initial data: log-spaced real shifts over the Ritz pole magnitudes.

    ``apply_factory(s0)`` returns the operator ``x -> (s0 E - A)^{-1} E x`` of
    order ``n``. Directions are the dominant singular vectors of
    ``G(sigma) - D`` at each shift, so every shift starts with its most
    visible input/output pair.
    """
    k = min(n, max(2 * r + 10, 20))
    poles = _ritz_poles(apply_factory, n, k, seed)
    shifts = _log_shifts(poles, r)
    b, c = _dominant_directions(transfer, np.asarray(D), shifts)
    return InterpolationData(shifts.astype(complex), b, c)


def default_seed(system, r, seed=0):
    """:func:`seed_shifts` on the full pencil of ``system``."""

    def apply_factory(s0):
        solver = ShiftedSolver(system.E, system.A, s0)
        return lambda x: solver.solve(system.E @ x)

    return seed_shifts(system.n, as_dense(system.D), r, apply_factory,
                       lambda s: eval_transfer(system, s), seed)


def _initial(system, config):
    data = config.initial if config.initial is not None else default_seed(
        system, config.r, config.seed)
    data = conjugate_close(data)
    if len(data) != config.r:
        raise InvalidParams(
            f"initial data has {len(data)} entries after conjugate closure, expected r={config.r}"
        )
    return data


# ------------------------------------------------------------------ variants


def irka_dae(system, w=None, config=None):
    """IRKA with spectral projectors; the final model carries the full infinite part."""
    w = w or weierstrass(system)
    if config.r > w.n_f:
        raise InvalidParams(f"r={config.r} exceeds the finite order n_f={w.n_f}")
    data = _initial(system, config)

    def build(d):
        return reduce_dae(system, d, w)

    return irka(build, data, config, method="irka-dae")


def irka_index1(system, config):
    """IRKA for semi-explicit index-1 systems with the ``D~`` shift inside every iteration."""
    fd = polynomial_part_index1(system)
    data = _initial(system, config)

    def build(d):
        return reduce_index1(system, d, fd)

    return irka(build, data, config, method="irka-index1")


def irka_naive(system, config):
    """Plain IRKA that ignores the polynomial part (keeps ``D`` as feedthrough)."""
    data = _initial(system, config)

    def build(d):
        return shifted_projection(system, d, as_dense(system.D), method="irka-naive")

    return irka(build, data, config, method="irka-naive")


def irka_naive_then_shift(system, config):
    """Plain IRKA followed by a single ``D~`` shift of the converged model.

    The polynomial part then matches, but the reduced poles move, so the
    first-order optimality conditions are generally lost.
    """
    fd = polynomial_part_index1(system)
    res = irka_naive(system, config)
    res.model = shift_feedthrough(res.model, fd.Dtilde)
    res.method = "irka-then-shift"
    return res


def index2_seed(system, r, seed=0, hidden=None):
    """:func:`seed_shifts` for index-2 systems, using saddle solves only."""
    hidden = hidden or hidden_feedthrough(system)
    E11 = system.block("E", 1, 1)

    def apply_factory(s0):
        solver = SaddleSolver(system, s0)
        return lambda x: solver.right(E11 @ x)[0]

    def transfer(s):
        v = SaddleSolver(system, s).right(hidden.Bmat.astype(complex))[0]
        return hidden.Cmat @ v + hidden.Dscript

    return seed_shifts(system.structure.n1, hidden.Dscript, r, apply_factory, transfer, seed)


def irka_index2(system, config):
    """IRKA for Stokes-type index-2 systems built on saddle-point solves."""
    hidden = hidden_feedthrough(system)
    if config.initial is None:
        seeded = index2_seed(system, config.r, config.seed, hidden)
        config = IrkaConfig(config.r, config.max_iter, config.shift_tol, seeded,
                            config.defect_retry, config.seed)
    data = _initial(system, config)

    def build(d):
        return reduce_index2(system, d, hidden)

    return irka(build, data, config, method="irka-index2")


# ------------------------------------------------------------------ optimality


@dataclass
class OptimalityReport(InterpolationReport):
    poles: list = field(default_factory=list)


def check_h2_first_order(full, result, tol=1e-6):
    """Residuals of the first-order H2 conditions at the mirrored reduced poles.

    For each eigentriple ``(lambda_i, y_i, z_i)`` of the reduced strictly
    proper pencil: ``G(-lambda_i) b_i``, ``c_i^T G(-lambda_i)`` and
    ``c_i^T G'(-lambda_i) b_i`` must match the reduced model.
    """
    model = getattr(result, "model", result)
    data, lam = next_data(*model.strictly_proper())
    rows = []
    for i, (s, b, c) in enumerate(data.entries()):
        G, Gr = eval_transfer(full, s), eval_transfer(model, s)
        d, dr = numeric_derivative(full, s), numeric_derivative(model, s)
        sig = [float(s.real), float(s.imag)]
        rows.append({"index": i, "kind": "right", "order": 0, "sigma": sig,
                     "residual": _rel(G @ b, Gr @ b)})
        rows.append({"index": i, "kind": "left", "order": 0, "sigma": sig,
                     "residual": _rel(c @ G, c @ Gr)})
        rows.append({"index": i, "kind": "hermite", "order": 1, "sigma": sig,
                     "residual": _rel(c @ d @ b, c @ dr @ b)})
    return OptimalityReport(rows, tol, poles=[[float(l.real), float(l.imag)] for l in lam])

