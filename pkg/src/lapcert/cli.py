"""Command-line experiment driver.

Subcommands wire the pipeline stages together and write deterministic CSV
and JSON artifacts plus a run manifest (config echo, git hash, wall times).
The process exits nonzero iff an asserted invariant fails, never for an
infeasible certificate (infeasibility is data).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys
import time

from . import certification as cert
from . import validation as val
from .config import ConfigError, ExperimentConfig, load_config
from .eigensolver import cached_solve, eig_diagnostics
from .model import TruthSpec, exp_family, generate, save_dataset
from .operators import CoefficientPair, assemble_design
from .posterior import Problem, fit_to_dict, map_solve

CERT_COLUMNS = ["label", "kind", "gamma0", "alpha", "effdim", "radius",
                "tau3_sup", "local_term", "tail_term", "tv_bound", "feasible",
                "A", "B", "gap_est", "S_dim", "S_tau", "m", "m0star"]


def _git_hash() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=10)
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except OSError:
        return "unknown"


def _write_csv(path: str, columns: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))  # full precision, deterministic, plain float repr
    return v


def _manifest(cfg: ExperimentConfig, out_dir: str, times: dict) -> None:
    doc = {"config": cfg.to_dict(), "git_hash": _git_hash(), "wall_times_s": times}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _pipeline_objects(cfg: ExperimentConfig, stage: str):
    spec = CoefficientPair(tuple(cfg.operator.a), tuple(cfg.operator.b))
    cache = cfg.eigensolver.cache_dir or os.path.join(cfg.out_dir, "eigcache")
    eig = cached_solve(spec, cfg.eigensolver.N, cfg.eigensolver.K, cache)
    if stage == "eigen":
        return spec, eig, None, None, None
    fam = exp_family(cfg.family)
    truth = (TruthSpec(p_star=cfg.truth.p_star, amplitude=cfg.truth.amplitude,
                       decay=cfg.truth.decay)
             if cfg.truth.theta is None else
             TruthSpec(p_star=len(cfg.truth.theta), explicit=tuple(cfg.truth.theta)))
    ds = generate(eig, fam, truth, n=cfg.n, seed=cfg.seed)
    if stage == "simulate":
        return spec, eig, ds, None, None
    des = assemble_design(eig, cfg.n, cfg.p)
    prob = Problem(design=des, data=ds, family=fam, gamma=cfg.gamma, eig=eig)
    fit = map_solve(prob)
    return spec, eig, ds, prob, fit


def _cert_row(label: str, c: cert.Certificate) -> dict:
    d = c.diagnostics
    return {"label": label, "kind": c.choice.kind, "gamma0": c.choice.gamma0,
            "alpha": c.alpha, "effdim": c.effdim, "radius": c.radius,
            "tau3_sup": c.tau3_sup, "local_term": c.local_term,
            "tail_term": c.tail_term, "tv_bound": c.tv_bound,
            "feasible": int(c.feasible), "A": d.get("A"), "B": d.get("B"),
            "gap_est": d.get("gap_est"), "S_dim": d.get("S_dim"),
            "S_tau": d.get("S_tau"), "m": d.get("m"), "m0star": d.get("m0star")}


def cmd_eigen(cfg, out_dir, times):
    t0 = time.time()
    spec, eig, *_ = _pipeline_objects(cfg, "eigen")
    times["eigen"] = time.time() - t0
    diag = eig_diagnostics(eig)
    cols = ["k", "lambda", "psi_sup", "dpsi_sup_over_k", "vk_inf", "dvk_inf",
            "vk_l2", "active"]
    rows = [{"k": int(diag["k"][i]), "lambda": float(eig.lambdas[i]),
             "psi_sup": float(diag["psi_sup"][i]),
             "dpsi_sup_over_k": float(diag["dpsi_sup_over_k"][i]),
             "vk_inf": float(diag["vk_inf"][i]), "dvk_inf": float(diag["dvk_inf"][i]),
             "vk_l2": float(diag["vk_l2"][i]), "active": int(diag["active"][i])}
            for i in range(eig.lambdas.size)]
    _write_csv(os.path.join(out_dir, "eigen.csv"), cols, rows)
    print("eigen: K=%d, gap report: sup-field gap estimates attached per certificate"
          % eig.lambdas.size)
    return 0


def cmd_simulate(cfg, out_dir, times):
    t0 = time.time()
    _, _, ds, *_ = _pipeline_objects(cfg, "simulate")
    times["simulate"] = time.time() - t0
    save_dataset(ds, os.path.join(out_dir, "dataset.csv"))
    print("simulate: n=%d, family=%s, seed=%d" % (ds.n, cfg.family, cfg.seed))
    return 0


def cmd_fit(cfg, out_dir, times):
    t0 = time.time()
    *_, fit = _pipeline_objects(cfg, "fit")
    times["fit"] = time.time() - t0
    with open(os.path.join(out_dir, "fit.json"), "w") as fh:
        json.dump(fit_to_dict(fit), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("fit: grad_norm=%.3e iters=%d" % (fit.grad_norm, fit.newton_iters))
    return 0


def cmd_certify(cfg, out_dir, times):
    t0 = time.time()
    *_, prob, fit = _pipeline_objects(cfg, "certify")
    beta = cfg.beta
    rows = []
    res = cert.compare_choices(fit, prob, beta=beta)
    for label in ("DG", "identity", "gamma0_star"):
        rows.append(_cert_row(label, res["certs"][label]))
    for g0 in (cfg.certification.gamma0 or []):
        c = cert.certify(fit, prob, cert.choice_gamma0(fit, g0, cfg.gamma), beta=beta)
        rows.append(_cert_row("gamma0=%g" % g0, c))
    times["certify"] = time.time() - t0
    _write_csv(os.path.join(out_dir, "certificates.csv"), CERT_COLUMNS, rows)
    with open(os.path.join(out_dir, "comparison.json"), "w") as fh:
        json.dump({"m": res["m"], "m0_star": res["m0_star"],
                   "gamma0_star": res["gamma0_star"],
                   "ratio_DG": res["ratio_DG"],
                   "ratio_identity": res["ratio_identity"]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    for row in rows:
        print("certify: %-12s tv_bound=%.4g feasible=%d (grid gap est %.2e)"
              % (row["label"], row["tv_bound"], row["feasible"], row["gap_est"]))
    return 0


def cmd_validate(cfg, out_dir, times):
    t0 = time.time()
    *_, prob, fit = _pipeline_objects(cfg, "validate")
    res = cert.compare_choices(fit, prob, beta=cfg.beta)
    rows = []
    ok = True
    if cfg.validation.method in ("importance", "both"):
        tv = val.tv_importance(fit, prob, n_samples=max(10000, cfg.validation.M),
                               seed=cfg.seed)
        rows.append({"method": tv.method, "value": tv.value, "ci_low": tv.ci_low,
                     "ci_high": tv.ci_high, "n_points": tv.n_points,
                     "ess": tv.ess, "low_ess": int(tv.low_ess)})
    if cfg.validation.method in ("quadrature", "both"):
        tv = val.tv_quadrature(fit, prob, per_axis=cfg.validation.per_axis)
        rows.append({"method": tv.method, "value": tv.value, "ci_low": tv.ci_low,
                     "ci_high": tv.ci_high, "n_points": tv.n_points,
                     "ess": "", "low_ess": 0})
    times["validate"] = time.time() - t0
    _write_csv(os.path.join(out_dir, "tv_estimates.csv"),
               ["method", "value", "ci_low", "ci_high", "n_points", "ess", "low_ess"],
               rows)
    best = res["certs"]["gamma0_star"]
    for row in rows:
        dom = ""
        if best.feasible and best.tv_bound < 1.0:
            # 1e-12 absolute floor: below it both the estimators and the
            # underflowed tail term are numerically zero
            holds = row["ci_high"] <= max(best.tv_bound, 1e-12)
            ok = ok and holds
            dom = " dominance=%s (bound %.4g)" % ("OK" if holds else "VIOLATED",
                                                  best.tv_bound)
        print("validate: %s TV=%.4g ci=[%.4g, %.4g]%s"
              % (row["method"], row["value"], row["ci_low"], row["ci_high"], dom))
    return 0 if ok else 1


def cmd_sweep(cfg, out_dir, times):
    t0 = time.time()
    beta = cfg.beta
    rows = []
    if cfg.sweep.synthetic:
        if cfg.sweep.axis == "p":
            rows = cert.sweep_synthetic(cfg.sweep.n, cfg.sweep.values, beta, cfg.gamma)
        else:
            for n in cfg.sweep.values:
                rows += cert.sweep_synthetic(n, [cfg.p], beta, cfg.gamma)
        cols = ["n", "p", "beta", "gamma", "gamma0_star", "m", "m0_star",
                "bound_DG", "bound_identity", "bound_gamma0_star"]
    else:
        cols = ["n", "p"] + CERT_COLUMNS
        for v in cfg.sweep.values:
            sub = load_point(cfg, v)
            *_, prob, fit = _pipeline_objects(sub, "certify")
            res = cert.compare_choices(fit, prob, beta=beta)
            for label in ("DG", "identity", "gamma0_star"):
                r = _cert_row(label, res["certs"][label])
                r.update(n=sub.n, p=sub.p)
                rows.append(r)
    times["sweep"] = time.time() - t0
    _write_csv(os.path.join(out_dir, "sweep.csv"), cols, rows)
    print("sweep: %d rows over %s grid (%s mode)"
          % (len(rows), cfg.sweep.axis, "synthetic" if cfg.sweep.synthetic else "real"))
    return 0


def load_point(cfg: ExperimentConfig, v) -> ExperimentConfig:
    from .config import config_from_dict
    d = cfg.to_dict()
    if cfg.sweep.axis == "p":
        d["p"] = int(v)
    else:
        d["n"] = int(v)
    return config_from_dict(d)


def cmd_all(cfg, out_dir, times):
    rc = 0
    for fn in (cmd_eigen, cmd_simulate, cmd_fit, cmd_certify, cmd_validate):
        rc = max(rc, fn(cfg, out_dir, times))
    return rc


COMMANDS = {"eigen": cmd_eigen, "simulate": cmd_simulate, "fit": cmd_fit,
            "certify": cmd_certify, "validate": cmd_validate,
            "sweep": cmd_sweep, "all": cmd_all}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="lapcert",
        description="Certified total-variation bounds for Laplace approximations "
                    "of generalized linear inverse problems")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", default=None, help="output directory (default from config)")
    ap.add_argument("--seed", type=int, default=None, help="override config seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="cap BLAS threads for reproducible timings")
    args = ap.parse_args(argv)

    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    os.makedirs(cfg.out_dir, exist_ok=True)

    times: dict = {}
    t0 = time.time()
    try:
        rc = COMMANDS[args.command](cfg, cfg.out_dir, times)
    except Exception as exc:  # surfaced module errors keep their class name
        print("%s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 3
    times["total"] = time.time() - t0
    _manifest(cfg, cfg.out_dir, times)
    return rc


if __name__ == "__main__":
    sys.exit(main())
