"""Command-line runner: ``heatsheet <subcommand> --config <path> [options] [key=value ...]``."""
import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from . import config as config_mod
from .capacity import cap
from .dynamics import girsanov_weight, integrate
from .errors import EXIT_CODES, ConfigError, HeatsheetError
from .hitting import (ExperimentConfig, excursions, hit_until_success, hitting_probability, homogeneity_test,
                      importance_check, initial_coefficients, sup_tail)
from .invariant import bridge_sup_cdf, ergodic_check, gibbs_sample
from .potential import Zero, potential_from_dict
from .rng import RngStream
from .schema import load_schema
from .spectral import Truncation, reconstruct
from .targets import target_from_dict
from .verify import run_suite

log = logging.getLogger("heatsheet")
SCHEMA_VERSION = 1


def jsonable(obj):
    """Plain JSON types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def _experiment(run):
    spec = dict(run.experiment)
    spec["seed"] = run.seed
    return ExperimentConfig.from_dict(spec)


def _section(run, key, default=None):
    return run.params.get(key, default)


def _bad(run, key, msg):
    raise ConfigError(f"{run.subcommand}.{key}: {msg}")


# ---------------------------------------------------------------------------
# experiments: each returns (payload, trial rows, extra files)

def do_simulate(run, out_dir):
    cfg = _experiment(run)
    n = int(_section(run, "n_paths", 4))
    T = float(_section(run, "T", cfg.T))
    dump = bool(_section(run, "dump", False))
    weigh = bool(_section(run, "girsanov", False))
    if n < 1:
        _bad(run, "n_paths", "must be >= 1")
    pot = Zero(cfg.d) if weigh else cfg.potential
    rows, files = [], []
    for i in range(n):
        path = integrate(_u0_callable(cfg.u0, cfg.d, cfg.trunc, run.seed), pot, T, cfg.dt, cfg.trunc, cfg.n_x,
                         RngStream(run.seed, i, "noise"), keep_noise=weigh, d=cfg.d)
        sup = np.abs(path.values).max(axis=(1, 2))
        row = {"trial": i, "final_sup": float(sup[-1]), "max_sup": float(sup.max()),
               "mean_final": float(path.values[-1].mean())}
        if weigh:
            row["weight"] = girsanov_weight(path, cfg.potential, cfg.trunc)
        rows.append(row)
        if dump:
            name = f"path_{i:04d}.bin"
            path.write(os.path.join(out_dir, name))
            files.append(name)
    sups = np.array([r["max_sup"] for r in rows])
    payload = {"n_paths": n, "T": T, "mean_max_sup": float(sups.mean()), "path_files": files,
               "dynamics": "driftless (weighted)" if weigh else cfg.potential.family}
    if weigh:
        payload["mean_weight"] = float(np.mean([r["weight"] for r in rows]))
    return payload, rows


def _u0_callable(spec, d, trunc, seed):
    if not spec or spec.get("kind", "zero") == "zero":
        return None
    coeffs = initial_coefficients(spec, trunc, d, seed)[0]
    return lambda x: reconstruct(coeffs, x)


def do_hit(run, out_dir):
    cfg = _experiment(run)
    mode = _section(run, "mode", "window")
    if mode == "window":
        est = hitting_probability(cfg, workers=run.workers, capacity_m=int(_section(run, "capacity_m", 500)))
        return est.to_dict(), est.trials
    if mode == "until_success":
        res = hit_until_success(cfg, workers=run.workers)
        return res.to_dict(), res.trial_rows()
    if mode == "importance":
        res = importance_check(cfg, workers=run.workers)
        rows = res.pop("trials")
        return res, [{"trial": r["trial"], "hit": r["hit"], "first_hit_time": None, "excursions_used": None,
                      "min_distance": None, "weight": r["weight"]} for r in rows]
    _bad(run, "mode", f"unknown mode {mode!r}; use window, until_success or importance")


def do_capacity(run, out_dir):
    spec = _section(run, "target") or run.experiment.get("target")
    if spec is None:
        _bad(run, "target", "missing")
    try:
        target = target_from_dict(spec)
    except (HeatsheetError, KeyError, ValueError) as exc:
        raise ConfigError(f"{run.subcommand}.target: {exc}") from None
    betas = _section(run, "beta", [1.0])
    betas = betas if isinstance(betas, list) else [betas]
    m = int(_section(run, "m", 2000))
    if m < 1:
        _bad(run, "m", "must be >= 1")
    results, rows = [], []
    for beta in betas:
        est = cap(target, float(beta), m)
        results.append(est.to_dict())
        if est.measure is not None:
            for i, (p, w) in enumerate(zip(est.measure.support, est.measure.weights)):
                rows.append({"beta": float(beta), "point": i, "coords": " ".join(f"{c:.17g}" for c in p),
                             "weight": float(w)})
    return {"target": target.to_dict(), "estimates": results}, rows


def do_invariant(run, out_dir):
    d = int(run.experiment.get("d", 1))
    try:
        pot = potential_from_dict(_section(run, "potential", run.experiment.get("potential", {})) or {}, d)
    except (HeatsheetError, KeyError, ValueError) as exc:
        raise ConfigError(f"{run.subcommand}.potential: {exc}") from None
    mode = _section(run, "mode", "standard")
    n = int(_section(run, "n", 10_000))
    n_x = int(_section(run, "n_x", 128))
    radii = _section(run, "R", [1.0])
    radii = radii if isinstance(radii, list) else [radii]
    batch = gibbs_sample(pot, mode, n, n_x, RngStream(run.seed, 0, "gibbs").generator())
    masses = []
    for R in radii:
        inside = float((batch.samples.sup < R).mean())
        se = float(np.sqrt(inside * (1 - inside) / n))
        entry = {"R": R, "inside": inside, "inside_se": se, "outside": 1 - inside, "outside_se": se}
        if pot.is_zero and mode == "standard":
            entry["closed_form"] = float(bridge_sup_cdf(R)) ** d
        masses.append(entry)
    payload = {"gibbs": batch.to_dict(), "ball_mass": masses}
    erg = _section(run, "ergodic")
    if erg:
        erg = dict(erg)
        u0 = erg.pop("u0", None)
        u0_fn = _u0_callable(u0, d, Truncation(int(erg.get("n_x", 64))), run.seed)
        payload["ergodic"] = ergodic_check(pot, u0_fn, rng=run.seed, **erg)
    rows = [{"sample": i, "sup_norm": r[0], "int_u": r[1], "accepted": bool(r[2])}
            for i, r in enumerate(batch.raw_rows())] if _section(run, "raw", True) else []
    return payload, rows


def do_recurrence(run, out_dir):
    cfg = _experiment(run)
    payload = {}
    recs = excursions(cfg, workers=run.workers)
    completed = np.array([r.completed for r in recs])
    payload["excursions"] = {
        "n": len(recs), "mean_completed": float(completed.mean()),
        "censored_fraction": float(np.mean(completed == 0)),
        "returned_fraction": float(np.mean([len(r.S) > 0 for r in recs])),
        "interlaced": bool(all(r.interlaced() for r in recs)),
    }
    tail_K = _section(run, "tail_K")
    if tail_K:
        payload["sup_tail"] = sup_tail(cfg, tail_K, float(_section(run, "tail_horizon", 2.0)))
    n_h = _section(run, "homogeneity_excursions")
    if n_h:
        hcfg = replace(cfg, max_excursions=int(n_h), u0={"kind": "stationary"})
        res = hit_until_success(hcfg, workers=run.workers, stop_on_hit=False)
        payload["homogeneity"] = homogeneity_test(res.records, int(n_h))
    rows = [{"trial": i, "excursions_completed": r.completed, "returns": len(r.S),
             "first_exit": r.T[0] if r.T else None, "first_return": r.S[0] if r.S else None}
            for i, r in enumerate(recs)]
    return payload, rows


def do_verify(run, out_dir):
    checks = run_suite(run.seed, int(_section(run, "mc_n", 1_000_000)), int(_section(run, "h_mc_n", 1_000_000)))
    rows = [c.to_dict() for c in checks]
    return {"checks": rows, "all_passed": all(c.passed for c in checks)}, rows


DISPATCH = {"simulate": do_simulate, "hit": do_hit, "capacity": do_capacity, "invariant": do_invariant,
            "recurrence": do_recurrence, "verify": do_verify}


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(row.get(k)) for k in columns})


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else ""
    return v


def run(run_cfg):
    """Execute a validated RunConfig; returns the envelope dict."""
    out_dir = os.path.abspath(run_cfg.out)
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    payload, rows = DISPATCH[run_cfg.subcommand](run_cfg, out_dir)
    wall = time.perf_counter() - start
    payload = jsonable(payload)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    columns = load_schema()["csv"][run_cfg.subcommand]
    write_csv(os.path.join(out_dir, "trials.csv"), columns, rows)
    envelope = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "subcommand": run_cfg.subcommand,
        "config": jsonable(run_cfg.to_dict()),
        "wall_clock_seconds": wall,
        "payload": payload,
        "payload_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "csv": ["trials.csv"],
    }
    with open(os.path.join(out_dir, "envelope.json"), "w") as fh:
        json.dump(envelope, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return envelope


def build_parser():
    p = argparse.ArgumentParser(prog="heatsheet", description="Stochastic heat equation experiments.")
    p.add_argument("subcommand", choices=config_mod.SUBCOMMANDS)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("overrides", nargs="*", metavar="key=value", help="override any config leaf")
    return p


def main(argv=None):
    args = build_parser().parse_intermixed_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load(args.config, args.subcommand, args.overrides, args.seed, args.workers, args.out)
        env = run(cfg)
    except HeatsheetError as exc:
        print(f"heatsheet: {exc.category} error: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    summary = {"subcommand": env["subcommand"], "payload_sha256": env["payload_sha256"],
               "wall_clock_seconds": round(env["wall_clock_seconds"], 3)}
    if env["subcommand"] == "verify":
        for c in env["payload"]["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (tol {c['tolerance']:.1e})")
    print(json.dumps(summary))
    if env["subcommand"] == "verify" and not env["payload"]["all_passed"]:
        return EXIT_CODES["precision"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
