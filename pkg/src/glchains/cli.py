"""Command line entry point: ``glchains <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__


def _read_json_arg(s):
    p = Path(s)
    if p.exists():
        return json.loads(p.read_text())
    return json.loads(s)


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, default=float)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text)


def cmd_run(a):
    from .experiments import load_config, run_experiment

    cfg = load_config(a.config, output_dir=a.output_dir)
    rep = run_experiment(cfg)
    sys.stdout.write(rep.summary_csv())
    for r in rep.rows:
        if r["status"] != "ok":
            print(f"eps={r['eps']}: {r['status']}", file=sys.stderr)
    return 0 if rep.ok else 1


def cmd_minimize(a):
    from .energy import SolverOptions, minimize, TRACE_COLUMNS
    from .fields import load_field, save_field

    u0 = load_field(a.field)
    opts = SolverOptions(max_iters=a.max_iters, grad_tol=a.grad_tol, step_rule=a.step_rule, direction=a.direction)
    u, rep, trace = minimize(u0, a.eps, opts)
    save_field(a.out, u)
    if a.trace:
        with open(a.trace, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            w.writerows(trace)
    print(json.dumps({**rep.as_dict(), "iterations": trace[-1][0], "grad_norm": trace[-1][4]}, default=float))
    return 0


def cmd_extract(a):
    from .experiments import extract_with_retry
    from .fields import load_field
    from .singular import SingularGrid, extract_chain

    u = load_field(a.field)
    if a.h != "auto":
        g = SingularGrid(u, float(a.h), np.asarray(a.offset if a.offset else [0.0] * u.ndim))
        chain = extract_chain(u, g)
    else:
        chain, g = extract_with_retry(u, a.eps, a.trials, a.seed)
    out = chain.to_json()
    out["grid"] = {"h": g.h, "offset": g.offset.tolist()}
    _write_json(a.out, out)
    if a.report:
        res = g.classes()
        n_plaq = sum(int(v.sum()) for _, v in res)
        n_nz = sum(int((np.any(c != 0, axis=-1) & v).sum()) for c, v in res)
        with open(a.report, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["offset", "skeleton_max_dist", "n_plaquettes", "n_nonzero", "mass"])
            w.writerow([" ".join(f"{o:.6g}" for o in g.offset), g.skeleton_max_dist(), n_plaq, n_nz, chain.mass()])
    return 0


def cmd_certify(a):
    from .energy import energy
    from .fields import load_field
    from .lowerbound import BallParams, BoundaryTouch, NotAdmissible, ball_construction, slice_certificate

    u = load_field(a.field)
    p = BallParams(tau=a.tau)
    try:
        if u.ndim == 2:
            cert = ball_construction(u, a.eps, p)
            out = cert.to_json()
            ok = cert.sound
        else:
            b, rows = slice_certificate(u, a.eps, axis=a.axis, p=p)
            e = energy(u, a.eps, density=False).total
            out = {"bound": b, "energy": e, "sound": b <= e, "slices": rows, "axis": a.axis}
            ok = b <= e
    except (BoundaryTouch, NotAdmissible) as exc:
        out = {"bound": None, "error": f"{type(exc).__name__}: {exc}"}
        ok = False
    _write_json(a.out, out)
    return 0 if ok else 1


def cmd_dipole(a):
    from .fields import insert_dipole, load_field, save_field

    u = load_field(a.field)
    T = np.asarray(_read_json_arg(a.T), dtype=float)
    save_field(a.out, insert_dipole(u, T, tuple(a.sigma)))
    return 0


def cmd_make_datum(a):
    from .fields import make_boundary_datum, save_field

    save_field(a.out, make_boundary_datum(_read_json_arg(a.spec)))
    return 0


def cmd_regularize(a):
    from .chains import PolyChain
    from .fields import load_field, regularize, save_field

    u = load_field(a.field)
    S = PolyChain.from_json(_read_json_arg(a.chain))
    save_field(a.out, regularize(u, S, a.eps))
    return 0


def cmd_plateau(a):
    from .experiments import load_config, predict_plateau

    chain = predict_plateau(load_config(a.config))
    _write_json(a.out, {"chain": chain.to_json(), "mass": chain.mass()})
    return 0


def cmd_norm_table(a):
    from .groups import get_group, norm_table

    g = get_group(a.group)
    w = csv.writer(sys.stdout if a.out in (None, "-") else open(a.out, "w", newline=""), lineterminator="\n")
    w.writerow(["sigma", "e_min", "norm", "in_S"])
    for s, e, n, gen in norm_table(g, a.max_abs):
        w.writerow([str(s), repr(e), repr(n), int(gen)])
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="glchains", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run an experiment from a TOML/JSON config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("minimize", help="minimise E_eps from a field file")
    p.add_argument("--field", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--tol", "--grad-tol", dest="grad_tol", type=float, default=1e-6)
    p.add_argument("--step-rule", choices=("backtracking", "fixed"), default="backtracking")
    p.add_argument("--direction", choices=("lbfgs", "gradient"), default="lbfgs")
    p.set_defaults(fn=cmd_minimize)

    p = sub.add_parser("extract", help="extract the singular chain of a field")
    p.add_argument("--field", required=True)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--h", default="auto", help="singular grid size or 'auto'")
    p.add_argument("--offset", type=float, nargs="+")
    p.add_argument("--trials", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--report", help="CSV: offset, skeleton max distance, n_plaquettes, n_nonzero, mass")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("certify", help="ball-construction lower bound")
    p.add_argument("--field", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--axis", type=int, default=0, help="slicing axis for 3D fields")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("dipole", help="insert a dipole along a segment / planar polygon")
    p.add_argument("--field", required=True)
    p.add_argument("--T", required=True, help="vertices as JSON (string or file)")
    p.add_argument("--sigma", type=int, nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dipole)

    p = sub.add_parser("make-datum", help="boundary datum field from a JSON descriptor")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_make_datum)

    p = sub.add_parser("regularize", help="regularise an N-valued field around a chain")
    p.add_argument("--field", required=True)
    p.add_argument("--chain", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_regularize)

    p = sub.add_parser("plateau", help="predicted mass-minimising chain of a config")
    p.add_argument("config")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_plateau)

    p = sub.add_parser("norm-table", help="E_min and |.|_* table of a coefficient group")
    p.add_argument("--group", default="Z_circle", choices=("Z_circle", "ZxZ_torus", "Z2_projective"))
    p.add_argument("--max", dest="max_abs", type=int, default=4)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_norm_table)
    return ap


def main(argv=None):
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.fn(a)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
