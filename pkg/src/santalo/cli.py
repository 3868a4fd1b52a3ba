"""Config-driven experiment runner.

Usage:  santalo <experiment> [--config PATH] [--seed N] [--count N]
                [--out PREFIX] [--override key=value ...]

Emits <PREFIX>.reports.jsonl, <PREFIX>.summary.csv, a rendered figure
next to them, and <PREFIX>.trace.csv for iteration experiments.  Exit
code 0 when every theorem-backed check passes, 2 when a conjecture-mode
run finds a negative-slack instance with valid hypotheses, 1 on errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .flow import bs_iterate_pair, multimarginal_monotone_step
from .functionals import RhoProfile
from .instances import FAMILIES, generate_instance
from .plotting import render_slack_figure, render_trace_figure
from .verifiers import (verify_affine_isoperimetric, verify_bs_bodies,
                        verify_bsunc, verify_displacement_convexity,
                        verify_pointwise_entropy_bound, verify_pointwise_pl,
                        verify_prekopa_leindler, verify_radial_bs,
                        verify_talagrand_barycenter)

EXPERIMENTS = (
    "verify-bsunc", "verify-pl", "verify-pointwise-pl",
    "verify-displacement", "verify-talagrand", "verify-pointwise-entropy",
    "verify-bodies", "verify-radial", "verify-asa",
    "iterate-pair", "mm-step", "search",
)

#: default instance family per experiment
DEFAULT_FAMILY = {
    "verify-bsunc": "unconditional-mixed",
    "verify-pl": "unconditional-mixed",
    "verify-pointwise-pl": "unconditional-mixed",
    "verify-displacement": "shifted-gaussians",
    "verify-talagrand": "gaussian-triple",
    "verify-pointwise-entropy": "gaussian-pair",
    "verify-bodies": "shrunken-balls",
    "verify-radial": "shrunken-balls",
    "verify-asa": "quadratic-tuple",
    "iterate-pair": "quartic-tuple",
    "mm-step": "quartic-tuple",
    "search": "even-crossterm",
}

#: pair-style experiments default to two marginals
DEFAULT_K = {"verify-pl": 2, "verify-pointwise-pl": 2,
             "verify-pointwise-entropy": 2}

DEFAULTS = {
    "seed": 0,
    "count": 1,
    "k": None,
    "n": 1,
    "half_width": None,
    "points": None,
    "steps": 10,
    "lam": 0.25,
    "coupling_scale": None,     # mm-step: defaults to k/(k-1)
    "output": "santalo-run",
    "tolerances": {},
}


class ConfigError(ValueError):
    pass


def load_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"config: {e}")
        for key, val in user.items():
            if key == "experiment":
                continue
            if key == "family":
                cfg["family"] = val
                continue
            if key not in cfg:
                raise ConfigError(f"config.{key}: unknown field")
            cfg[key] = val
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.count is not None:
        cfg["count"] = args.count
    if args.out is not None:
        cfg["output"] = args.out
    for ov in args.override or ():
        if "=" not in ov:
            raise ConfigError(f"override {ov!r}: expected key=value")
        key, val = ov.split("=", 1)
        try:
            cfg[key] = json.loads(val)
        except json.JSONDecodeError:
            cfg[key] = val
    if cfg["count"] < 1:
        raise ConfigError("config.count: must be >= 1")
    if cfg["k"] is not None and cfg["k"] < 2:
        raise ConfigError("config.k: must be >= 2")
    return cfg


def _check_cell_cap(grid):
    cap = os.environ.get("SANTALO_MAX_CELLS")
    if cap is not None and grid.num_nodes > int(cap):
        raise ConfigError(
            f"grid has {grid.num_nodes} cells, above SANTALO_MAX_CELLS={cap}")


def _default_rho(k: int) -> RhoProfile:
    return RhoProfile.exponential(1.0 / (k - 1), k_context=k)


def _make_instance(experiment: str, cfg: dict, index: int):
    family = cfg.get("family") or DEFAULT_FAMILY[experiment]
    if family not in FAMILIES:
        raise ConfigError(f"config.family: invalid family {family!r}")
    k = cfg["k"] if cfg["k"] is not None else DEFAULT_K.get(experiment, 3)
    n = cfg["n"]
    if family == "even-crossterm" and n < 2:
        # the cross-term perturbation needs at least two coordinates
        n = 2
    inst = generate_instance(family, cfg["seed"] + index, k=k, n=n,
                             half_width=cfg["half_width"],
                             points=cfg["points"])
    _check_cell_cap(inst.grid)
    return inst


def run_one(experiment: str, cfg: dict, index: int):
    """Run a single instance; returns (report dict or None, trace rows)."""
    inst = _make_instance(experiment, cfg, index)
    tol = cfg["tolerances"]
    if experiment in ("verify-bsunc", "search"):
        rep = verify_bsunc(inst.nonneg_fns(), inst.rho or _default_rho(inst.k),
                           **({"tol": tol["bsunc"]} if "bsunc" in tol else {}))
    elif experiment == "verify-pl":
        rep = verify_prekopa_leindler(inst.nonneg_fns(), inst.lambdas)
    elif experiment == "verify-pointwise-pl":
        rep = verify_pointwise_pl(inst.nonneg_fns(), inst.lambdas)
    elif experiment == "verify-displacement":
        rep = verify_displacement_convexity(inst.densities, inst.lambdas)
    elif experiment == "verify-talagrand":
        rep = verify_talagrand_barycenter(inst.densities)
    elif experiment == "verify-pointwise-entropy":
        rep = verify_pointwise_entropy_bound(inst.densities)
    elif experiment == "verify-bodies":
        rep = verify_bs_bodies(inst.bodies, inst.rho)
    elif experiment == "verify-radial":
        rep = verify_radial_bs(inst.bodies)
    elif experiment == "verify-asa":
        rep = verify_affine_isoperimetric(
            "functions", inst.potentials, cfg["lam"],
            inst.rho or _default_rho(inst.k))
    elif experiment == "iterate-pair":
        traces = bs_iterate_pair(inst.potentials[0], cfg["steps"],
                                 stop_early=False)
        rows = [{"step": t.step_index, "bs": t.bs_value,
                 "j_sq": t.j_value ** 2, "delta_quad": t.delta_quad}
                for t in traces]
        return None, rows
    elif experiment == "mm-step":
        C = cfg["coupling_scale"]
        if C is None:
            C = inst.k / (inst.k - 1)
        _, report = multimarginal_monotone_step(inst.potentials,
                                               inst.lambdas, C)
        d = {"inequality_id": "mm_monotone_step",
             "lhs": report["product_before"],
             "rhs": report["product_after"],
             "slack": report["slack"],
             "hypothesis_margin": report["hypothesis_margin"],
             "certification": "Exhaustive",
             "pass": report["slack"] >= -1e-6, "tol": 1e-6,
             "instance_hash": inst.instance_hash, "mode": "theorem",
             "warnings": []}
        return d, []
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    d = rep.to_json_dict()
    return d, []


def write_outputs(prefix: str, reports: list, trace_rows: list,
                  experiment: str):
    paths = []
    if reports:
        p = f"{prefix}.reports.jsonl"
        with open(p, "w") as fh:
            for r in reports:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        paths.append(p)
        cols = ["index", "inequality_id", "lhs", "rhs", "slack",
                "hypothesis_margin", "certification", "pass", "tol",
                "mode", "instance_hash"]
        p = f"{prefix}.summary.csv"
        with open(p, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            for i, r in enumerate(reports):
                w.writerow({"index": i, **r})
        paths.append(p)
        paths.append(render_slack_figure(reports, f"{prefix}.slack.png"))
    if trace_rows:
        p = f"{prefix}.trace.csv"
        with open(p, "w", newline="") as fh:
            w = csv.DictWriter(fh,
                               fieldnames=["step", "bs", "j_sq", "delta_quad"])
            w.writeheader()
            for row in trace_rows:
                w.writerow(row)
        paths.append(p)
        paths.append(render_trace_figure(trace_rows, f"{prefix}.trace.png",
                                         ceiling=2 * np.pi))
    return paths


def run_experiment(experiment: str, cfg: dict) -> int:
    reports, trace_rows = [], []
    for index in range(cfg["count"]):
        rep, rows = run_one(experiment, cfg, index)
        if rep is not None:
            reports.append(rep)
        trace_rows.extend(rows)
    paths = write_outputs(cfg["output"], reports, trace_rows, experiment)
    for p in paths:
        print(f"wrote {p}")
    theorem_fail = any(r["mode"] == "theorem" and not r["pass"]
                       for r in reports)
    finding = any(r["mode"] == "conjecture"
                  and r["slack"] < -r["tol"]
                  and r["hypothesis_margin"] >= -r["tol"]
                  for r in reports)
    for r in reports:
        status = "pass" if r["pass"] else "FAIL"
        print(f"{r['inequality_id']} [{r['mode']}] slack={r['slack']:.6g} "
              f"margin={r['hypothesis_margin']:.6g} {status}")
    if theorem_fail:
        return 1
    if finding:
        print("conjecture-mode finding: negative slack with valid hypothesis")
        return 2
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="santalo",
        description="run inequality-verification experiments")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--count", type=int)
    parser.add_argument("--out")
    parser.add_argument("--override", action="append", metavar="KEY=VALUE")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        return run_experiment(args.experiment, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:       # solver/domain failures are exit 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
