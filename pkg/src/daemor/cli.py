"""Command line front end: ``daemor {reduce,bode,verify,info,generate}``.

Exit codes are a stable contract: 0 success, 1 error (including a failed
verification), 2 IRKA did not converge (the model is still written).

Outputs are deterministic: JSON is written with sorted keys and no
timestamps, CSV rows use ``repr`` of binary64 values.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import model_io
from .analysis import DEFAULT_GRID, bode_sample
from .core import InterpolationData, ReducedModel
from .errors import DaemorError, InvalidParams, MethodStructureMismatch
from .index1 import reduce_index1
from .index2 import reduce_index2
from .interpolation import REPORT_TOL, reduce_dae, reduce_naive, set_workers, verify_interpolation
from .irka import (
    IrkaConfig,
    check_h2_first_order,
    default_seed,
    index2_seed,
    irka_dae,
    irka_index1,
    irka_index2,
)
from .spectral import dense_limit, split_transfer, weierstrass

log = logging.getLogger("daemor")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
REPORT_VERSION = 1
BODE_VERSION = 1

METHODS = ("naive", "dae", "index1", "index2", "irka-dae", "irka-index1", "irka-index2")
_REQUIRED_KIND = {"index1": "index1", "irka-index1": "index1",
                  "index2": "index2", "irka-index2": "index2"}


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _load_any(path):
    """Full system or reduced model, depending on the manifest kind."""
    manifest = model_io.find_manifest(path)
    doc = json.loads(Path(manifest).read_text())
    if doc.get("kind") == "reduced-model":
        return model_io.load_model(manifest)
    return model_io.load_system(manifest)


def _load_shifts(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise InvalidParams(f"cannot read shift file {path}: {exc}") from exc
    return InterpolationData.from_dict(doc.get("data", doc))


def _check_method(method, system):
    need = _REQUIRED_KIND.get(method)
    if need is not None and system.structure.kind != need:
        raise MethodStructureMismatch(
            f"method/structure mismatch: {method} needs {need} blocks, "
            f"manifest declares {system.structure.kind}"
        )


def _seed(system, method, r, seed):
    if method in ("index2", "irka-index2"):
        return index2_seed(system, r, seed)
    return default_seed(system, r, seed)


def run_reduce(system, method, r, shifts=None, max_iter=100, shift_tol=1e-6, seed=0,
               tol=REPORT_TOL):
    """Dispatch one reduction; returns ``(model, report, converged)``."""
    if method not in METHODS:
        raise InvalidParams(f"unknown method {method!r}")
    _check_method(method, system)
    report = {"method": method, "order": r, "version": REPORT_VERSION}
    converged = True
    if method.startswith("irka-"):
        config = IrkaConfig(r, max_iter=max_iter, shift_tol=shift_tol, initial=shifts, seed=seed)
        run = {"irka-dae": irka_dae, "irka-index1": irka_index1, "irka-index2": irka_index2}[method]
        res = run(system, config=config)
        model, data, converged = res.model, res.data, res.converged
        report["irka"] = res.to_dict()
        report["optimality"] = check_h2_first_order(system, model, tol).to_dict()
    else:
        data = shifts if shifts is not None else _seed(system, method, r, seed)
        build = {"naive": reduce_naive, "dae": reduce_dae, "index1": reduce_index1,
                 "index2": reduce_index2}[method]
        model = build(system, data)
    report["converged"] = bool(converged)
    report["shifts"] = data.to_dict()
    report["interpolation"] = verify_interpolation(system, model, data, tol=tol).to_dict()
    report["reduced_order"] = model.order
    return model, report, converged


def cmd_reduce(args):
    system = model_io.load_system(model_io.find_manifest(args.system))
    shifts = _load_shifts(args.shifts) if args.shifts else None
    model, report, converged = run_reduce(
        system, args.method, args.order, shifts, args.max_iter, args.shift_tol, args.seed,
        args.tol,
    )
    out = Path(args.out)
    model_io.save_model(model, out)
    _write_json(out / "report.json", report)
    if not converged:
        print(f"IRKA did not converge in {args.max_iter} iterations; model written to {out}",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(f"reduced model of order {model.order} written to {out}")
    return EXIT_OK


def bode_rows(full, reduced=None, wmin=DEFAULT_GRID[0], wmax=DEFAULT_GRID[1],
              npts=DEFAULT_GRID[2]):
    """Header and rows of the Bode CSV.

    Columns: ``omega``, then for every output/input pair ``(i, j)``
    ``abs_G_i_j`` and, with a reduced model, ``abs_Gr_i_j`` and ``abs_err_i_j``.
    """
    fr = bode_sample(full, wmin, wmax, npts)
    frr = bode_sample(reduced, wmin, wmax, npts) if reduced is not None else None
    p, m = fr.values.shape[1:]
    header = ["omega"]
    for i in range(p):
        for j in range(m):
            header.append(f"abs_G_{i + 1}_{j + 1}")
            if frr is not None:
                header += [f"abs_Gr_{i + 1}_{j + 1}", f"abs_err_{i + 1}_{j + 1}"]
    rows = []
    for k, w in enumerate(fr.omegas):
        row = [float(w)]
        for i in range(p):
            for j in range(m):
                g = fr.values[k, i, j]
                row.append(float(abs(g)))
                if frr is not None:
                    gr = frr.values[k, i, j]
                    row += [float(abs(gr)), float(abs(g - gr))]
        rows.append(row)
    return header, rows


def cmd_bode(args):
    full = _load_any(args.system)
    reduced = _load_any(args.reduced) if args.reduced else None
    header, rows = bode_rows(full, reduced, args.wmin, args.wmax, args.npts)
    out = open(args.out, "w", newline="") if args.out and args.out != "-" else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(x) for x in row])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_verify(args):
    full = model_io.load_system(model_io.find_manifest(args.system))
    reduced = model_io.load_model(model_io.find_manifest(args.reduced))
    if args.shifts:
        data = _load_shifts(args.shifts)
    elif "shifts" in reduced.provenance:
        data = InterpolationData.from_dict(reduced.provenance["shifts"])
    else:
        raise InvalidParams("no shifts in the model provenance; pass --shifts")
    rep = verify_interpolation(full, reduced, data, tol=args.tol)
    doc = {"version": REPORT_VERSION, "interpolation": rep.to_dict()}
    passed = rep.passed
    if args.optimality:
        opt = check_h2_first_order(full, reduced, args.tol)
        doc["optimality"] = opt.to_dict()
        doc["optimality"]["poles"] = opt.poles
        passed = passed and opt.passed
    doc["passed"] = bool(passed)
    _write_json(args.out, doc)
    return EXIT_OK if passed else EXIT_ERROR


def system_info(system):
    """Dimensions, structure and (when dense analysis is feasible) spectral data."""
    st = system.structure
    info = {
        "n": system.n, "m": system.m, "p": system.p,
        "structure": {"kind": st.kind, "n1": st.n1, "n2": st.n2},
        "sparse": bool(system.is_sparse),
    }
    if system.n > dense_limit():
        info["spectral"] = f"spectral analysis skipped (n={system.n} > dense limit {dense_limit()})"
        return info
    w = weierstrass(system)
    _, poly = split_transfer(system, w)
    info["spectral"] = {
        "n_f": w.n_f, "n_inf": w.n_inf, "index": w.nu,
        "polynomial_degree": poly.degree,
        "polynomial_part": poly.to_list(),
    }
    return info


def model_info(model: ReducedModel):
    return {"order": model.order, "m": model.m, "p": model.p, "n_finite": model.n_finite,
            "method": model.provenance.get("method")}


def cmd_info(args):
    obj = _load_any(args.system)
    info = model_info(obj) if isinstance(obj, ReducedModel) else system_info(obj)
    if args.json:
        _write_json(None, info)
        return EXIT_OK
    for key in sorted(info):
        val = info[key]
        if isinstance(val, dict):
            for k in sorted(val):
                print(f"{key}.{k}: {val[k]}")
        else:
            print(f"{key}: {val}")
    return EXIT_OK


def _param(text):
    key, _, val = text.partition("=")
    if not _:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(val)
    except ValueError:
        return key, val


def cmd_generate(args):
    params = dict(args.param or [])
    system = model_io.generate_synthetic(args.kind, args.seed, **params)
    path = model_io.save_system(system, args.out,
                                {"generator": args.kind, "seed": args.seed, "params": params})
    print(f"wrote {path}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="daemor", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=1,
                    help="threads for independent per-shift solves (default 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="reduce a system and write the model plus report.json")
    p.add_argument("system", help="manifest.json or its directory")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--order", "-r", type=int, required=True)
    p.add_argument("--shifts", help="JSON file with points/right_dirs/left_dirs")
    p.add_argument("--seed", type=int, default=0, help="seed for the default shift policy")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--shift-tol", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=REPORT_TOL, help="residual tolerance")
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("bode", help="amplitude sweep as CSV")
    p.add_argument("system", help="full system or reduced model")
    p.add_argument("--reduced", help="reduced model to compare against")
    p.add_argument("--wmin", type=float, default=DEFAULT_GRID[0])
    p.add_argument("--wmax", type=float, default=DEFAULT_GRID[1])
    p.add_argument("--npts", type=int, default=DEFAULT_GRID[2])
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("verify", help="interpolation (and optimality) residuals as JSON")
    p.add_argument("system")
    p.add_argument("reduced")
    p.add_argument("--shifts", help="defaults to the shifts stored in the model provenance")
    p.add_argument("--tol", type=float, default=REPORT_TOL)
    p.add_argument("--optimality", action="store_true",
                   help="also check the first-order H2 conditions")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("info", help="dimensions, structure and spectral data")
    p.add_argument("system")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("generate", help="write a synthetic system")
    p.add_argument("kind", choices=model_io.SYNTHETIC_KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", "-p", type=_param, action="append",
                   help="generator parameter as key=value (value parsed as JSON)")
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    set_workers(args.threads)
    try:
        return args.func(args)
    except (DaemorError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        set_workers(1)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
