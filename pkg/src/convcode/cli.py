"""``convcode`` command line: gen, mds-check, kappa, bound, search-r, simulate, sweep."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import runtime, spectral
from .codec import MatMatPlan, MatVecPlan
from .decode import DecodeError
from .polyalg import (PolyMatrix, ValidationError, as_fraction, khatri_rao, make_matmat_factors,
                      make_matvec_generator, min_q, min_z)

EXIT_OK, EXIT_VALIDATION, EXIT_DECODE, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w") as f:
            f.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_R(arg):
    if arg is None:
        return None
    if os.path.exists(arg):
        with open(arg) as f:
            return np.asarray(json.load(f), dtype=float)
    return np.asarray(json.loads(arg), dtype=float)


# ---- target construction ----------------------------------------------------

def _matmat_sizes(a):
    k = a.kA * a.kB
    s = a.n - k
    if s < 0:
        raise ValidationError(f"n = {a.n} below k_A*k_B = {k}")
    qa = a.qA if a.qA else (min_q(a.kA, s, a.gammaA) if a.gammaA else 1)
    qb = a.qB if a.qB else (min_q(a.kB, s, a.gammaB) if a.gammaB else 1)
    z = a.z if a.z else min_z(qb, s, a.kB)
    return s, qa, qb, z


def _target_from_config(path):
    """A JSON file holding either a PolyMatrix (plus ``q``) or an experiment config."""
    with open(path) as f:
        d = json.load(f)
    if "entries" in d:
        G = PolyMatrix.from_dict(d)
        q = d.get("q")
        if q is None:
            raise ValidationError("generator file needs a 'q' field for kappa")
        return G, int(q)
    cfg = runtime.ExperimentConfig.from_dict(d)
    return cfg.plan(), None


def _target(a):
    if getattr(a, "config", None):
        return _target_from_config(a.config)
    if a.matmat:
        s, qa, qb, z = _matmat_sizes(a)
        GA, GB = make_matmat_factors(a.kA, a.kB, s, z, _load_R(a.RA), _load_R(a.RB))
        return MatMatPlan(GA, GB, qa, qb, z, 1, a.kA * qa, a.kB * qb), None
    s = a.n - a.k
    q = a.q if a.q else (min_q(a.k, s, a.gamma) if a.gamma else 1)
    return MatVecPlan(make_matvec_generator(a.k, s, _load_R(a.R)), q, 1, a.k * q), None


def _add_shape_flags(p, need_q=True):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--matvec", action="store_true")
    g.add_argument("--matmat", action="store_true")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--kA", type=int)
    p.add_argument("--kB", type=int)
    p.add_argument("--R", help="JSON array or path for the mat-vec scaling matrix")
    p.add_argument("--RA")
    p.add_argument("--RB")
    p.add_argument("--z", type=int)
    if need_q:
        p.add_argument("--q", type=int)
        p.add_argument("--qA", type=int)
        p.add_argument("--qB", type=int)
        p.add_argument("--gamma", type=as_fraction)
        p.add_argument("--gammaA", type=as_fraction)
        p.add_argument("--gammaB", type=as_fraction)


def _check_shape(a):
    if getattr(a, "config", None):
        return
    if a.n is None:
        raise ValidationError("--n is required")
    if a.matmat:
        if a.kA is None or a.kB is None:
            raise ValidationError("--kA and --kB are required with --matmat")
    elif a.k is None:
        raise ValidationError("--k is required")


# ---- commands ---------------------------------------------------------------

def cmd_gen(a):
    _check_shape(a)
    if a.matmat:
        s, qa, qb, z = _matmat_sizes(a)
        GA, GB = make_matmat_factors(a.kA, a.kB, s, z, _load_R(a.RA), _load_R(a.RB))
        doc = {"G_A": GA.to_dict(), "G_B": GB.to_dict(), "q_A": qa, "q_B": qb, "z": z,
               "product": khatri_rao(GA, GB).to_dict()}
    else:
        s = a.n - a.k
        G = make_matvec_generator(a.k, s, _load_R(a.R))
        doc = G.to_dict()
        if a.q or a.gamma:
            doc["q"] = a.q if a.q else min_q(a.k, s, a.gamma)
    _emit(json.dumps(doc), a.out)


def cmd_mds_check(a):
    _check_shape(a)
    target, q = _target(a)
    rep = spectral.kappa_worst(target, q, threads=a.threads)
    sv_ok = []
    for I in rep.subsets:
        sv = np.linalg.svd(spectral.decoding_matrix(target, I, q), compute_uv=False)
        sv_ok.append(bool(sv[-1] > a.tol * sv[0]))
    doc = {"mds": all(sv_ok), "subsets": len(sv_ok), "failing": [list(I) for I, ok in zip(rep.subsets, sv_ok) if not ok],
           "kappa_worst": rep.kappa_worst}
    _emit(json.dumps(doc), a.out)
    return EXIT_OK


def cmd_kappa(a):
    _check_shape(a)
    target, q = _target(a)
    rep = spectral.kappa_worst(target, q, max_subsets=a.max_subsets, threads=a.threads)
    _emit(rep.to_json() if a.format == "json" else rep.to_csv(), a.out)


def _two_by_two():
    # k=2, s=2 all-ones: parity columns (1, 1) and (1, D)
    return make_matvec_generator(2, 2)


def cmd_bound(a):
    grid = spectral.FrequencyGrid(a.N)
    if a.two_by_two:
        G, subsets = _two_by_two(), [(2, 3)]
    else:
        _check_shape(a)
        target, _ = _target(a)
        G = target.worker_generator() if not isinstance(target, PolyMatrix) else target
        subsets = None
    if a.subset:
        subsets = [tuple(int(x) for x in a.subset.split(","))]
    rep = spectral.bound_report(G, grid, subsets)
    if a.format == "csv":
        _emit(rep.to_csv(), a.out)
        return
    doc = {"lambda_min_bound": min(rep.lambda_min_bounds), "lambda_max_bound": max(rep.lambda_max_bounds),
           "kappa_R": rep.kappa_worst, "subsets": [list(s) for s in rep.subsets],
           "lambda_min_bounds": rep.lambda_min_bounds, "lambda_max_bounds": rep.lambda_max_bounds}
    _emit(json.dumps(doc), a.out)


def cmd_search_r(a):
    grid = spectral.FrequencyGrid(a.N)
    if a.matmat:
        if a.kA is None or a.kB is None or a.n is None:
            raise ValidationError("--n, --kA and --kB are required with --matmat")
        s = a.n - a.kA * a.kB
        z = a.z if a.z else min_z(a.qB or 1, s, a.kB)
        res = spectral.search_R_matmat(a.kA, a.kB, s, z, a.trials, grid, a.distribution, a.seed)
    else:
        if a.n is None or a.s is None:
            raise ValidationError("--n and --s are required")
        res = spectral.search_R(a.n, a.n - a.s, a.s, trials=a.trials, grid=grid,
                                distribution=a.distribution, seed=a.seed)
    _emit(json.dumps(res.to_dict()), a.out)


def _config_from_args(a):
    with open(a.config) as f:
        d = json.load(f)
    d["data_seed"] = a.seed
    noise = dict(d.get("noise") or {})
    noise["seed"] = a.seed
    d["noise"] = noise
    return runtime.ExperimentConfig.from_dict(d)


def cmd_simulate(a):
    cfg = _config_from_args(a)
    res = runtime.run_experiment(cfg)
    doc = res.to_dict()
    doc["config"] = cfg.to_dict()
    _emit(json.dumps(doc), a.out)


def cmd_sweep(a):
    cfg = _config_from_args(a)
    values = [float(v) if a.axis == "snr_db" else int(v) for v in a.values.split(",")]
    rows = runtime.sweep(cfg, a.axis, values, with_kappa=a.kappa)
    if a.out:
        runtime.write_csv(rows, a.out)
    else:
        runtime.write_csv(rows, sys.stdout)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="convcode", description=__doc__)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: CONVCODE_THREADS or CPU count)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a generator as JSON")
    _add_shape_flags(g)
    g.add_argument("--out")
    g.set_defaults(fn=cmd_gen)

    m = sub.add_parser("mds-check", help="rank check over every size-k worker set")
    _add_shape_flags(m)
    m.add_argument("--config")
    m.add_argument("--tol", type=float, default=1e-9)
    m.add_argument("--out")
    m.set_defaults(fn=cmd_mds_check)

    k = sub.add_parser("kappa", help="exact worst-case condition number")
    _add_shape_flags(k)
    k.add_argument("--config")
    k.add_argument("--max-subsets", type=int, dest="max_subsets")
    k.add_argument("--format", choices=["csv", "json"], default="csv")
    k.add_argument("--out")
    k.set_defaults(fn=cmd_kappa)

    b = sub.add_parser("bound", help="frequency-domain eigenvalue bounds")
    _add_shape_flags(b)
    b.add_argument("--config")
    b.add_argument("--two-by-two", action="store_true")
    b.add_argument("--subset", help="comma-separated worker ids")
    b.add_argument("--N", type=int, default=512)
    b.add_argument("--format", choices=["csv", "json"], default="json")
    b.add_argument("--out")
    b.set_defaults(fn=cmd_bound)

    r = sub.add_parser("search-r", help="random search for a well-conditioned scaling matrix")
    r.add_argument("--matmat", action="store_true")
    r.add_argument("--n", type=int)
    r.add_argument("--s", type=int)
    r.add_argument("--kA", type=int)
    r.add_argument("--kB", type=int)
    r.add_argument("--qB", type=int)
    r.add_argument("--z", type=int)
    r.add_argument("--trials", type=int, default=50)
    r.add_argument("--N", type=int, default=512)
    r.add_argument("--distribution", choices=["uniform", "gaussian"], default="uniform")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out")
    r.set_defaults(fn=cmd_search_r)

    s = sub.add_parser("simulate", help="one end-to-end experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_simulate)

    w = sub.add_parser("sweep", help="experiments along one axis, as CSV")
    w.add_argument("--config", required=True)
    w.add_argument("--seed", type=int, required=True)
    w.add_argument("--axis", choices=["snr_db", "digits", "q"], required=True)
    w.add_argument("--values", required=True, help="comma-separated axis values")
    w.add_argument("--kappa", action="store_true", help="add the worst-case condition number column")
    w.add_argument("--out")
    w.set_defaults(fn=cmd_sweep)
    return p


def _fail(code: int, kind: str, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        if a.threads:
            os.environ["CONVCODE_THREADS"] = str(a.threads)
        rc = a.fn(a)
        return EXIT_OK if rc is None else rc
    except DecodeError as e:
        return _fail(EXIT_DECODE, type(e).__name__, e)
    except (ValidationError, ValueError, ZeroDivisionError) as e:
        return _fail(EXIT_VALIDATION, type(e).__name__, e)
    except OSError as e:
        return _fail(EXIT_IO, type(e).__name__, e)


if __name__ == "__main__":
    sys.exit(main())
