"""Matrix Market + JSON manifest persistence and synthetic test-system generators.

A system directory holds one ``.mtx`` file per matrix and a manifest::

    {
      "format_version": 1,
      "kind": "descriptor-system",
      "structure": {"kind": "index2", "n1": 200, "n2": 40},
      "matrices": {"E": "E.mtx", "A": "A.mtx", "B": "B.mtx", "C": "C.mtx", "D": "D.mtx"},
      "metadata": {"name": "...", "source": "..."}
    }

``D`` may be omitted (zero feedthrough). Reduced models use the same layout
with ``"kind": "reduced-model"``, extra entries for the polynomial parts and a
``provenance.json`` sidecar.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
import scipy.io as sio
import scipy.linalg as spla
import scipy.sparse as sp

from .core import DescriptorSystem, MatrixPolynomial, ReducedModel, Structure, as_dense, validate
from .errors import DimensionMismatch, InvalidParams, ParseError, ValidationFailed

__all__ = [
    "FORMAT_VERSION",
    "read_matrix",
    "write_matrix",
    "load_system",
    "save_system",
    "save_model",
    "load_model",
    "generate_synthetic",
    "SYNTHETIC_KINDS",
]

FORMAT_VERSION = 1
PRECISION = 17
SYNTHETIC_KINDS = ("ode", "semiexplicit-index1", "stokes-index2", "rlc-index2")


def write_matrix(path, M):
    """Write ``M`` as Matrix Market: array format when dense, coordinate when sparse."""
    if sp.issparse(M):
        sio.mmwrite(str(path), sp.coo_matrix(M), precision=PRECISION)
    else:
        sio.mmwrite(str(path), np.atleast_2d(np.asarray(M, dtype=float)), precision=PRECISION)


def read_matrix(path):
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "file not found")
    try:
        M = sio.mmread(str(path))
    except (ValueError, OSError, IndexError, TypeError) as exc:
        match = re.search(r"[Ll]ine (\d+)", str(exc))
        raise ParseError(path, int(match.group(1)) if match else None, str(exc)) from exc
    if sp.issparse(M):
        return sp.csr_array(M)
    return np.atleast_2d(np.asarray(M, dtype=float))


def _read_json(path):
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ParseError(path, None, "file not found") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from exc


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _check_version(doc, path):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(path, None, f"unsupported format_version {doc.get('format_version')!r}")


def load_system(manifest_path, check=True):
    """Load and validate a :class:`DescriptorSystem` from its manifest."""
    manifest_path = Path(manifest_path)
    doc = _read_json(manifest_path)
    _check_version(doc, manifest_path)
    base = manifest_path.parent
    try:
        files = doc["matrices"]
        mats = {k: read_matrix(base / files[k]) for k in "EABC"}
    except KeyError as exc:
        raise ParseError(manifest_path, None, f"missing matrix entry {exc}") from exc
    D = read_matrix(base / files["D"]) if files.get("D") else None
    st = doc.get("structure", {"kind": "general"})
    try:
        structure = Structure(st.get("kind", "general"), st.get("n1"), st.get("n2"))
    except ValueError as exc:
        raise ParseError(manifest_path, None, str(exc)) from exc
    try:
        system = DescriptorSystem(mats["E"], mats["A"], mats["B"], mats["C"], D, structure)
    except DimensionMismatch as exc:
        raise ParseError(manifest_path, None, str(exc)) from exc
    if check:
        diags = validate(system)
        if diags:
            raise ValidationFailed(diags)
    return system


def save_system(system, directory, metadata=None):
    """Write ``system`` into ``directory``; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in "EABCD":
        files[name] = f"{name}.mtx"
        write_matrix(d / files[name], getattr(system, name))
    st = system.structure
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "descriptor-system",
        "structure": {"kind": st.kind, "n1": st.n1, "n2": st.n2},
        "matrices": files,
        "metadata": metadata or {},
    }
    path = d / "manifest.json"
    _write_json(path, doc)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def save_model(model, directory):
    """Write a :class:`ReducedModel`; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in "EABCD":
        files[name] = f"{name}.mtx"
        write_matrix(d / files[name], getattr(model, name))
    polys = {}
    for key, poly in (("polynomial_part", model.polynomial_part),
                      ("feedthrough_poly", model.feedthrough_poly)):
        if poly is None:
            continue
        names = []
        for j, c in enumerate(poly.coeffs):
            fname = f"{key}_{j}.mtx"
            write_matrix(d / fname, c)
            names.append(fname)
        polys[key] = names
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "reduced-model",
        "n_finite": int(model.n_finite),
        "matrices": files,
        "polynomials": polys,
        "provenance": "provenance.json",
    }
    _write_json(d / "provenance.json", _jsonable(model.provenance))
    path = d / "model.json"
    _write_json(path, doc)
    return path


def load_model(manifest_path):
    manifest_path = Path(manifest_path)
    doc = _read_json(manifest_path)
    _check_version(doc, manifest_path)
    if doc.get("kind") != "reduced-model":
        raise ParseError(manifest_path, None, "not a reduced-model manifest")
    base = manifest_path.parent
    mats = {k: as_dense(read_matrix(base / doc["matrices"][k])) for k in "EABCD"}
    polys = {}
    for key, names in doc.get("polynomials", {}).items():
        polys[key] = MatrixPolynomial([as_dense(read_matrix(base / f)) for f in names])
    prov_file = doc.get("provenance")
    prov = _read_json(base / prov_file) if prov_file else {}
    try:
        return ReducedModel(
            mats["E"], mats["A"], mats["B"], mats["C"], mats["D"],
            polynomial_part=polys.get("polynomial_part"),
            n_finite=doc.get("n_finite"),
            feedthrough_poly=polys.get("feedthrough_poly"),
            provenance=prov,
        )
    except DimensionMismatch as exc:
        raise ParseError(manifest_path, None, str(exc)) from exc


def find_manifest(path):
    """Accept a manifest file or a directory containing ``manifest.json``/``model.json``."""
    p = Path(path)
    if p.is_dir():
        for name in ("manifest.json", "model.json"):
            if (p / name).exists():
                return p / name
        raise ParseError(p, None, "no manifest.json or model.json in directory")
    return p


# ---------------------------------------------------------------- generators


def _stable_dense(rng, n, lo=0.1, hi=100.0, skew=0.5):
    """``-Q diag(d) Q^T + skew part``: negative definite symmetric part, so stable with SPD ``E``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = np.logspace(np.log10(lo), np.log10(hi), n)
    S = rng.standard_normal((n, n))
    return -(Q * d) @ Q.T + skew * (S - S.T) / 2


def _spd(rng, n, strength=0.1):
    R = rng.standard_normal((n, n))
    return np.eye(n) + strength * R @ R.T / n


def _io(rng, n, m, p):
    return rng.standard_normal((n, m)), rng.standard_normal((p, n))


def _ode(rng, n=10, m=1, p=1):
    if n < 1:
        raise InvalidParams("ode needs n >= 1")
    E = _spd(rng, n)
    A = _stable_dense(rng, n)
    B, C = _io(rng, n, m, p)
    return DescriptorSystem(E, A, B, C)


def _index1(rng, n1=6, n2=3, m=1, p=1, D=False):
    if n1 < 1 or n2 < 1:
        raise InvalidParams("semiexplicit-index1 needs n1 >= 1 and n2 >= 1")
    n = n1 + n2
    E11 = _spd(rng, n1)
    E12 = 0.3 * rng.standard_normal((n1, n2))
    A22 = -(np.eye(n2) * 2.0 + 0.3 * rng.standard_normal((n2, n2)))
    A12 = rng.standard_normal((n1, n2))
    A21 = rng.standard_normal((n2, n1))
    A11 = _stable_dense(rng, n1, 0.1, 50.0)
    # place the finite spectrum in the left half-plane: shift A11 by -alpha * S
    S = E11 - E12 @ np.linalg.solve(A22, A21)
    Ahat = A11 - A12 @ np.linalg.solve(A22, A21)
    lam = spla.eigvals(Ahat, S)
    alpha = max(0.0, float(np.max(lam.real)) + 0.2)
    A11 = A11 - alpha * S
    E = np.zeros((n, n))
    E[:n1, :n1], E[:n1, n1:] = E11, E12
    A = np.block([[A11, A12], [A21, A22]])
    B, C = _io(rng, n, m, p)
    Dm = rng.standard_normal((p, m)) if D else None
    return DescriptorSystem(E, A, B, C, Dm, Structure("index1", n1, n2))


def _laplacian(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])


def _stokes(rng, n1=50, n2=10, m=1, p=1, b2=True, c2=True, mass="identity", dense=False,
            lo=0.1, hi=20.0, convection=0.2):
    if n1 < 2 or n2 < 1 or n2 >= n1:
        raise InvalidParams("stokes-index2 needs 1 <= n2 < n1")
    # diffusion: symmetric part with spectrum roughly in [lo, hi]
    lap = _laplacian(n1)
    diff = lo * sp.eye(n1) + (hi - lo) / 4.0 * lap
    # convection: random sparse skew-symmetric coupling (keeps the symmetric part)
    U = sp.random(n1, n1, density=min(1.0, 4.0 / n1), random_state=rng, format="csr")
    A11 = (-diff + convection * (U - U.T)).tocsr()
    if mass == "identity":
        E11 = sp.eye(n1, format="csr")
    else:
        d = 1.0 + 0.5 * rng.random(n1)
        E11 = sp.diags(d, format="csr")
    # discrete-divergence-like constraint: distinct pivot columns keep full rank
    cols = np.sort(rng.choice(n1, size=n2, replace=False))
    rows = np.arange(n2)
    pattern = sp.random(n2, n1, density=min(1.0, 3.0 / n1), random_state=rng, format="csr")
    A21 = (sp.csr_matrix((np.ones(n2) * 2.0, (rows, cols)), shape=(n2, n1)) + 0.3 * pattern).tocsr()
    A12 = A21.T.tocsr()
    E = sp.bmat([[E11, None], [None, sp.csr_matrix((n2, n2))]], format="csr")
    A = sp.bmat([[A11, A12], [A21, None]], format="csr")
    B1, C1 = rng.standard_normal((n1, m)), rng.standard_normal((p, n1))
    B2 = rng.standard_normal((n2, m)) if b2 else np.zeros((n2, m))
    C2 = rng.standard_normal((p, n2)) if c2 else np.zeros((p, n2))
    B = np.vstack([B1, B2])
    C = np.hstack([C1, C2])
    if dense:
        E, A = E.toarray(), A.toarray()
    return DescriptorSystem(E, A, B, C, None, Structure("index2", n1, n2))


def _rlc(rng, nodes=20, dense=False):
    """RC ladder with inductive links driven by a voltage source at node 1.

    States: node voltages, inductor currents, source current. The output is
    the current drawn from the source, so ``G`` contains a capacitive
    ``s``-linear term.
    """
    if nodes < 2:
        raise InvalidParams("rlc-index2 needs at least 2 nodes")
    N = nodes
    cap = 1.0 + 0.5 * rng.random(N)
    gnd = 0.1 + 0.1 * rng.random(N)
    ind = 1.0 + 0.5 * rng.random(N - 1)
    res = 0.2 + 0.1 * rng.random(N - 1)
    # incidence of inductor k: +1 at node k, -1 at node k+1
    AL = sp.diags([np.ones(N - 1), -np.ones(N - 1)], [0, -1], shape=(N, N - 1)).tocsr()
    AV = sp.csr_matrix(([1.0], ([0], [0])), shape=(N, 1))
    n1 = 2 * N - 1
    E11 = sp.diags(np.concatenate([cap, ind]), format="csr")
    A11 = sp.bmat([[-sp.diags(gnd), -AL], [AL.T, -sp.diags(res)]], format="csr")
    A12 = sp.vstack([-AV, sp.csr_matrix((N - 1, 1))]).tocsr()
    A21 = -A12.T.tocsr()
    E = sp.bmat([[E11, None], [None, sp.csr_matrix((1, 1))]], format="csr")
    A = sp.bmat([[A11, A12], [A21, None]], format="csr")
    B = np.zeros((n1 + 1, 1))
    B[-1, 0] = -1.0
    C = np.zeros((1, n1 + 1))
    C[0, -1] = 1.0
    if dense:
        E, A = E.toarray(), A.toarray()
    return DescriptorSystem(E, A, B, C, None, Structure("index2", n1, 1))


def generate_synthetic(kind, seed=0, **params):
    """Deterministic synthetic system of the given kind.

    ``ode``: ``n, m, p``. ``semiexplicit-index1``: ``n1, n2, m, p, D``.
    ``stokes-index2``: ``n1, n2, m, p, b2, c2, mass, dense, lo, hi, convection``.
    ``rlc-index2``: ``nodes, dense``.
    """
    rng = np.random.default_rng(seed)
    makers = {"ode": _ode, "semiexplicit-index1": _index1, "stokes-index2": _stokes,
              "rlc-index2": _rlc}
    if kind not in makers:
        raise InvalidParams(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    try:
        return makers[kind](rng, **params)
    except TypeError as exc:
        raise InvalidParams(str(exc)) from exc

