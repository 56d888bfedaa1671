"""``vesselkeep`` command line: simulate, certify, sweep.

Exit codes: 0 success, 1 configuration or usage error, 2 divergence,
3 a hard certificate failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, load
from .sim import (
    CONTROLLER_KINDS,
    KIND_ALIASES,
    DivergenceError,
    RunLog,
    Scenario,
    ScenarioError,
    certificates,
    metrics,
    run,
    run_many,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CERT = 0, 1, 2, 3

RUN_COLUMNS = (
    ["t", "X", "Y", "Phi", "Xe", "Ye", "Phie"]
    + [f"tau{i}" for i in (1, 2, 3)]
    + [f"taud{i}" for i in (1, 2, 3)]
    + [f"qhat{i}" for i in (1, 2, 3)]
    + [f"qtil{i}" for i in (1, 2, 3)]
    + ["obs_err", "V"]
)
SWEEP_PARAMS = ("kappa", "L", "Q_scale", "q1", "q2", "q3")
SWEEP_COLUMNS = (
    "param", "value", "status", "eps_tail", "xe_final", "settling_time",
    "qtil1", "qtil2", "qtil3", "obs_vel_err_mean", "V_violations",
)

log = logging.getLogger("vesselkeep")


def fmt(v) -> str:
    """12 significant digits; blank for not-applicable values."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return f"{v:.12g}"


def write_run_csv(path: Path, lg: RunLog) -> None:
    n = len(lg)
    blank = np.full((n, 3), np.nan)
    qhat = lg.q_hat if lg.q_hat is not None else blank
    qtil = lg.q_tilde if lg.q_tilde is not None else blank
    obs = lg.obs_err if lg.obs_err is not None else np.full(n, np.nan)
    V = lg.V if lg.V is not None else np.full(n, np.nan)
    data = np.column_stack([lg.t, lg.x, lg.x_e, lg.tau, lg.tau_d, qhat, qtil, obs, V])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(RUN_COLUMNS)
        for row in data:
            w.writerow([fmt(v) for v in row])


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _load(args) -> Scenario:
    scn = load(args.config)
    changes = {}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "t_final", None) is not None:
        changes["t_final"] = args.t_final
    if getattr(args, "controller", None) is not None:
        changes["controller_kind"] = args.controller
    return scn.with_(**changes) if changes else scn


def cmd_simulate(args) -> int:
    try:
        scn = _load(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    certs = certificates(scn)
    status = "ok"
    try:
        lg = run(scn, backend=args.backend)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        lg = exc.log
        status = "diverged"
    write_run_csv(out / "run.csv", lg)
    summary = {
        "scenario": scn.name,
        "controller_kind": scn.controller_kind,
        "status": status,
        "dt": scn.dt,
        "t_final": scn.t_final,
        "metrics": metrics(lg),
        "certificates": [c.to_dict() for c in certs],
    }
    _write_json(out / "summary.json", summary)
    m = summary["metrics"]
    print(f"wrote {out / 'run.csv'} ({m['rows']} rows) and {out / 'summary.json'}")
    print(f"eps_tail={m['eps_tail']:.4g}  settling_time={m['settling_time']}")
    if m["qtil_final"] is not None:
        print("final |q_tilde| = " + ", ".join(f"{v:.3e}" for v in m["qtil_final"]))
    return EXIT_DIVERGED if status == "diverged" else EXIT_OK


def cmd_certify(args) -> int:
    try:
        scn = load(args.config)
        certs = certificates(scn)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        # a value that fails a hard gate, or a scenario that cannot be assembled, is a gate failure
        if isinstance(exc, ScenarioError) or getattr(exc, "gate", None):
            if getattr(exc, "gate", None):
                print(f"[FAIL] {exc.gate}: {exc.message}")
            return EXIT_CERT
        return EXIT_CONFIG
    for c in certs:
        print(c.summary_line())
    doc = {"scenario": scn.name, "certificates": [c.to_dict() for c in certs]}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "certificates.json", doc)
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True))
    hard_fail = [c.name for c in certs if c.hard and not c.passed]
    if hard_fail:
        print("hard gate failed: " + ", ".join(hard_fail), file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def apply_param(scn: Scenario, name: str, value: float) -> Scenario:
    """Copy of ``scn`` with one sweep parameter replaced."""
    ctrl = scn.controller
    if name == "kappa":
        return scn.with_(controller=replace(ctrl, observer=replace(ctrl.observer, kappa=value)))
    if name == "L":
        return scn.with_(controller=replace(ctrl, observer=replace(ctrl.observer, L=value)))
    if name == "Q_scale":
        return scn.with_(controller=replace(ctrl, Q=ctrl.Q * value))
    if name in ("q1", "q2", "q3"):
        q = scn.exo.q.copy()
        q[int(name[1]) - 1] = value
        return scn.with_(exo=replace(scn.exo, q=q))
    raise ValueError(f"unknown sweep parameter {name!r}; expected one of {', '.join(SWEEP_PARAMS)}")


def _parse_values(text: str) -> list[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    return [float(p) for p in parts]


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        print(f"error: unknown sweep parameter {args.param!r}; expected one of {', '.join(SWEEP_PARAMS)}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        values = _parse_values(args.values)
    except ValueError:
        print(f"error: --values must be a list of numbers, got {args.values!r}", file=sys.stderr)
        return EXIT_CONFIG
    if not values:
        print("error: --values is empty", file=sys.stderr)
        return EXIT_CONFIG
    try:
        base = _load(args)
        scenarios = [apply_param(base, args.param, v) for v in values]
    except (ConfigError, ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        results = run_many(scenarios, backend=args.backend, max_workers=args.workers)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(SWEEP_COLUMNS)
        for v, m in zip(values, results):
            qt = m["qtil_final"] or [None] * 3
            w.writerow([
                args.param, fmt(v), m["status"], fmt(m["eps_tail"]), fmt(m["xe_final"]),
                fmt(m["settling_time"]), *[fmt(x) for x in qt], fmt(m["obs_vel_err_mean"]),
                "" if m["V_violations"] is None else m["V_violations"],
            ])
    print(f"wrote {out / 'sweep.csv'} ({len(values)} runs)")
    return EXIT_DIVERGED if any(m["status"] != "ok" for m in results) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    kinds = sorted(CONTROLLER_KINDS) + sorted(KIND_ALIASES)
    p = argparse.ArgumentParser(prog="vesselkeep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate one scenario and export run.csv and summary.json")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dt", type=float)
    s.add_argument("--t-final", type=float)
    s.add_argument("--controller", choices=kinds)
    s.add_argument("--seed", type=int, help="reserved; runs are deterministic")
    s.add_argument("--backend", choices=("numba", "numpy"))
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("certify", help="evaluate the design certificates")
    c.add_argument("--config", required=True)
    c.add_argument("--out", help="directory for certificates.json")
    c.add_argument("--json", action="store_true", help="also print the certificates as JSON")
    c.set_defaults(func=cmd_certify)

    w = sub.add_parser("sweep", help="one run per parameter value, in parallel")
    w.add_argument("--config", required=True)
    w.add_argument("--param", required=True, help=", ".join(SWEEP_PARAMS))
    w.add_argument("--values", required=True, help="comma or space separated numbers")
    w.add_argument("--out", required=True)
    w.add_argument("--dt", type=float)
    w.add_argument("--t-final", type=float)
    w.add_argument("--controller", choices=kinds)
    w.add_argument("--workers", type=int)
    w.add_argument("--backend", choices=("numba", "numpy"))
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for divergence
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
