"""Batch front end: experiment orchestration and artifact persistence.

One invocation runs one command, writes its JSON reports and CSV tables
into the output directory together with a manifest (config echo plus
SHA-256 of every written file), and exits 0 iff every report passed.

Configuration comes from command-line flags with an optional plain
key=value file (--config); flags override the file.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import excursion, twosided, verify
from .localtime import default_dx
from .paths import ParameterError, build_mu_process, simulate_driver
from .rng import replica_seed
from .whitenoise import Rect, StepFunction2D


@dataclass
class ExperimentConfig:
    command: str
    mu: float = 1.0
    a: float = 1.0
    b: float = -1.0
    r: float = 0.0
    h: float = 0.5
    x: float = -0.5
    n: int = 1000
    steps: int = 10000
    dt: float = 1e-3
    dx: float | None = None
    dt_ladder: tuple = (1e-2, 1e-3)
    h_max: float = 0.5
    horizon_time: float | None = None
    r_max: float = 1.0
    offset: float = 0.2
    master_seed: int = 0
    out_dir: str = field(default_factory=lambda: os.environ.get("MUPROCESS_OUT", "runs"))
    workers: int = 1
    cap_time: float | None = None

    def resolved_dx(self) -> float:
        return self.dx if self.dx is not None else default_dx(self.dt)


_FLOAT_KEYS = {"mu", "a", "b", "r", "h", "x", "dt", "dx", "h_max",
               "horizon_time", "r_max", "offset", "cap_time"}
_INT_KEYS = {"n", "steps", "master_seed", "workers"}


def read_config_file(path: str) -> dict:
    """Plain key=value lines; '#' starts a comment; blank lines ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key == "dt_ladder":
                out[key] = tuple(float(v) for v in value.split(","))
            else:
                out[key] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="muprocess",
        description="Simulation and verification of perturbed reflecting "
                    "Brownian motion and its local-time identities.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, dest="master_seed")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--dx", type=float)
        sp.add_argument("--out", dest="out_dir")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--cap-time", type=float, dest="cap_time")

    sp = sub.add_parser("simulate", help="dump one path as CSV")
    common(sp)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--steps", type=int)

    sp = sub.add_parser("rk2-law", help="marginal law of L(T_b, b+h)")
    common(sp)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--b", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--n", type=int)

    sp = sub.add_parser("rk1-law", help="marginal law of L(tau_a^0, -h)")
    common(sp)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--a", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--n", type=int)

    for name, flag in (("sde1", "--a"), ("sde2", "--b")):
        sp = sub.add_parser(name, help=f"pathwise residuals of the "
                            f"{'first' if name == 'sde1' else 'second'} identity")
        common(sp)
        sp.add_argument("--mu", type=float, required=True)
        sp.add_argument(flag, type=float)
        sp.add_argument("--h-max", type=float, dest="h_max")
        sp.add_argument("--n", type=int)
        sp.add_argument("--dt-ladder", dest="dt_ladder",
                        type=lambda s: tuple(float(v) for v in s.split(",")))

    sp = sub.add_parser("whitenoise", help="Gaussianity of W(g)")
    common(sp)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--b", type=float, help="hit-level horizon")
    sp.add_argument("--horizon-time", type=float, dest="horizon_time")
    sp.add_argument("--n", type=int)

    sp = sub.add_parser("independence", help="glued-side independence")
    common(sp)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--x", type=float)
    sp.add_argument("--offset", type=float)
    sp.add_argument("--horizon-time", type=float, dest="horizon_time",
                    help="glued-clock horizon of the functionals")
    sp.add_argument("--n", type=int)

    sp = sub.add_parser("two-sided", help="shifted identities at level r")
    common(sp)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--r", type=float)
    sp.add_argument("--a", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--n", type=int)
    return p


def build_config(argv) -> ExperimentConfig:
    args = vars(_build_parser().parse_args(argv))
    cfg_file = args.pop("config", None)
    merged = read_config_file(cfg_file) if cfg_file else {}
    merged.update({k: v for k, v in args.items() if v is not None})
    try:
        cfg = ExperimentConfig(**merged)
    except TypeError as exc:
        raise ParameterError(f"unknown configuration key: {exc}")
    if cfg.dt <= 0:
        raise ParameterError(f"dt must be > 0, got {cfg.dt}")
    if cfg.n < 1 or cfg.steps < 1:
        raise ParameterError("n and steps must be >= 1")
    return cfg


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _default_rects():
    g1 = StepFunction2D((Rect(0.0, 1.0, -0.5, 0.0, np.sqrt(2.0)),))
    g2 = StepFunction2D((Rect(0.0, 1.0, -1.0, -0.5, np.sqrt(2.0)),))
    return [g1, g2]


def run(cfg: ExperimentConfig) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    written = []
    reports = []

    def save_report(report):
        reports.append(report)
        path = os.path.join(cfg.out_dir, f"report-{report.name}.json")
        with open(path, "w") as fh:
            fh.write(report.to_json() + "\n")
        written.append(path)
        print(report.summary())

    dx = cfg.resolved_dx()
    cap_kw = {} if cfg.cap_time is None else {"cap_time": cfg.cap_time}
    if cfg.command == "simulate":
        driver = simulate_driver(replica_seed(cfg.master_seed, 0), cfg.dt, cfg.steps)
        path = build_mu_process(driver, cfg.mu)
        csv_path = os.path.join(cfg.out_dir, "path.csv")
        t = cfg.dt * np.arange(cfg.steps + 1)
        _write_csv(csv_path, ["t", "btilde", "smax", "x", "inf_run"],
                   zip(t, driver.btilde, driver.smax, path.x, path.inf_run))
        written.append(csv_path)
    elif cfg.command == "rk2-law":
        save_report(verify.ray_knight_second_law(
            cfg.mu, cfg.b, cfg.h, cfg.n, cfg.dt, dx, cfg.master_seed,
            cfg.workers, **cap_kw))
    elif cfg.command == "rk1-law":
        save_report(verify.ray_knight_first_law(
            cfg.mu, cfg.a, cfg.h, cfg.n, cfg.dt, dx, cfg.master_seed,
            cfg.workers, **cap_kw))
    elif cfg.command in ("sde1", "sde2"):
        which = "first" if cfg.command == "sde1" else "second"
        ab = cfg.a if which == "first" else cfg.b
        report = verify.sde_residual(which, cfg.mu, ab, [cfg.h_max],
                                     cfg.dt_ladder, cfg.n, cfg.master_seed,
                                     cfg.workers, **cap_kw)
        save_report(report)
        table = os.path.join(cfg.out_dir, f"residuals-{which}.csv")
        _write_csv(table, ["dt", "median_sup_residual"],
                   zip(cfg.dt_ladder, report.metadata["medians"]))
        written.append(table)
    elif cfg.command == "whitenoise":
        horizon = (("fixed-time", cfg.horizon_time) if cfg.horizon_time
                   else ("hit-level", cfg.b))
        save_report(verify.gaussianity_check(
            _default_rects(), cfg.n, horizon, cfg.master_seed, cfg.mu,
            cfg.dt, dx, cfg.workers, **cap_kw))
    elif cfg.command == "independence":
        horizon = cfg.horizon_time if cfg.horizon_time is not None else 0.25
        max_steps = int(cfg.cap_time / cfg.dt) if cfg.cap_time else 8 * 10 ** 6
        # generator: paths can be large and are consumed one at a time
        paths = (p for p in (excursion.simulate_until_clocks(
            replica_seed(cfg.master_seed, i), cfg.mu, cfg.x, cfg.dt, horizon,
            max_steps=max_steps) for i in range(cfg.n)) if p is not None)
        save_report(excursion.independence_test(
            paths, cfg.x,
            excursion.occupation_below_functional(cfg.offset, horizon),
            excursion.occupation_above_functional(cfg.offset, horizon)))
    elif cfg.command == "two-sided":
        save_report(twosided.verify_main_bis(
            cfg.mu, cfg.r, cfg.a, [cfg.h], cfg.n, cfg.dt, dx,
            cfg.master_seed, cfg.workers, **cap_kw))
    else:  # pragma: no cover - argparse enforces the choices
        raise ParameterError(f"unknown command {cfg.command}")

    manifest = {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in asdict(cfg).items()},
        "files": [{"name": os.path.basename(f), "sha256": _sha256(f)}
                  for f in written],
    }
    manifest_path = os.path.join(cfg.out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return 0 if all(r.passed for r in reports) else 1


def main(argv=None) -> int:
    try:
        cfg = build_config(sys.argv[1:] if argv is None else argv)
        return run(cfg)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
