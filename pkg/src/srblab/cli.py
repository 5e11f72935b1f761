"""Command-line experiment runner.

Subcommands: ``list-systems``, ``empiric``, ``pomega``, ``observable`` and
``check``. Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 check-suite failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, jsonfmt
from .checks import run_checks
from .config import ExperimentConfig, load_config, parse_config
from .dynamics import SYSTEM_NAMES, MapSystem, make_system
from .empiric import CheckpointSchedule, empiric_sequence
from .errors import ConfigError, SRBLabError
from .measure import (DiscreteMeasure, GridPartition, WeakStarMetric, dirac, family_for,
                      uniform_measure)
from .observable import SamplePlan, estimate_observable_set, minimality_check, sample_point
from .pomega import PomegaParams, limit_set_from_snapshots, segment_projection_residual

SCHEMA = "srblab/1"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
DEFAULT_OUT = "srblab_out"
FAMILY_NOTE = (
    "test functions (1 + cos)/2 and (1 - sin)/2 of k.u, ordered by max-norm, "
    "support size, then descending k; integrals at cell centers"
)


@dataclass
class Experiment:
    config: ExperimentConfig
    system: MapSystem
    partition: GridPartition
    metric: WeakStarMetric
    params: PomegaParams

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Experiment":
        system = make_system(cfg.system, cfg.params)
        partition = GridPartition(system.domain, cfg.resolution)
        metric = WeakStarMetric(family_for(system.domain), cfg.truncation)
        sched = CheckpointSchedule.geometric(cfg.n0, cfg.gamma, cfg.horizon)
        params = PomegaParams(sched, cfg.tail_fraction, cfg.delta_cluster, cfg.delta_conv,
                              cfg.burn_in)
        return cls(cfg, system, partition, metric, params)

    def start_point(self) -> np.ndarray:
        if self.config.x0 is not None:
            return np.asarray(self.config.x0, dtype=np.float64)
        plan = SamplePlan(1, self.config.seed, self.system.domain)
        return sample_point(plan, 0, self.system.region)

    def header(self, wall_time: Optional[float] = None) -> dict:
        cfg = self.config
        return {
            "schema": SCHEMA,
            "version": __version__,
            "system": {"name": self.system.name, "formula": self.system.formula,
                       "parameters": dict(self.system.parameters),
                       "domain": self.system.domain.to_dict()},
            "config": cfg.echo(),
            "test_functions": FAMILY_NOTE,
            "burn_in_flag": cfg.burn_in > 0,
            "wall_time": wall_time if cfg.wall_time else None,
        }


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srblab", description="Estimate observable measures of maps.")
    parser.add_argument("--version", action="version", version=f"srblab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("list-systems", help="print the registered systems")
    for name, text in (
        ("empiric", "one orbit's empiric sequence as CSV"),
        ("pomega", "limit-set estimate of one orbit"),
        ("observable", "observable-set estimate over sampled starts"),
        ("check", "run the invariant suite"),
    ):
        p = sub.add_parser(name, help=text)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="experiment TOML file")
        src.add_argument("--system", choices=SYSTEM_NAMES, help="run a system with defaults")
        p.add_argument("--out", help="output directory (default $SRBLAB_OUT or ./srblab_out)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads")
    return parser


def _load(args) -> ExperimentConfig:
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = load_config(f'system = "{args.system}"\n', "<--system>")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer", field="seed")
        cfg = replace(cfg, seed=args.seed)
        if cfg.holdout_seed == cfg.seed:
            raise ConfigError("holdout seed equals --seed", field="observable.holdout_seed")
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be positive", field="threads")
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.output or os.environ.get("SRBLAB_OUT") or DEFAULT_OUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_measure(exp: Experiment, out: Path, name: str, mu: DiscreteMeasure) -> None:
    d = out / "measures"
    d.mkdir(exist_ok=True)
    doc = {"schema": SCHEMA, "version": __version__, "config": exp.config.echo(),
           "measure": mu.to_dict()}
    _write(d / f"{name}.json", jsonfmt.dumps(doc))


def _csv_text(exp: Experiment, rows: list) -> str:
    buf = io.StringIO()
    buf.write(f"# srblab {__version__}\n")
    buf.write("# config " + jsonfmt.dumps(exp.config.echo(), indent=0).strip() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "dist_to_reference", "occupied_cells"])
    for n, d, occ in rows:
        w.writerow([n, "" if d is None else jsonfmt.format_float(d), occ])
    return buf.getvalue()


def cmd_list_systems(stream=None) -> int:
    stream = stream or sys.stdout
    rows = []
    for name in SYSTEM_NAMES:
        params = {"matrix": [[2.0, 1.0], [1.0, 1.0]]} if name == "affine_custom" else {}
        s = make_system(name, params)
        dom = " x ".join(
            f"{'S' if per else 'I'}[{a:g},{b:g}]" for (a, b), per in zip(s.domain.bounds,
                                                                         s.domain.periodic)
        )
        par = ", ".join(f"{k}={v}" for k, v in s.parameters.items()) or "-"
        rows.append((name, dom, par, s.formula))
    widths = [max(len(r[i]) for r in rows + [("name", "domain", "parameters", "")])
              for i in range(3)]
    stream.write(f"{'name':<{widths[0]}}  {'domain':<{widths[1]}}  "
                 f"{'parameters':<{widths[2]}}  formula\n")
    for r in rows:
        stream.write(f"{r[0]:<{widths[0]}}  {r[1]:<{widths[1]}}  {r[2]:<{widths[2]}}  {r[3]}\n")
    return EXIT_OK


def cmd_empiric(exp: Experiment, out: Path) -> int:
    t0 = time.perf_counter()
    x0 = exp.start_point()
    snaps = empiric_sequence(exp.system, x0, exp.params.schedule, exp.partition,
                             exp.params.burn_in)
    ref = {"final": snaps[-1][1], "uniform": uniform_measure(exp.partition),
           "none": None}[exp.config.reference]
    rows = [(n, None if ref is None else exp.metric.distance(mu, ref), len(mu)) for n, mu in snaps]
    _write(out / "sequence.csv", _csv_text(exp, rows))
    if exp.config.dump_measures:
        for n, mu in snaps:
            _write_measure(exp, out, f"snapshot_{n:012d}", mu)
    doc = exp.header(time.perf_counter() - t0)
    doc.update({"command": "empiric", "x0": x0.tolist(), "reference": exp.config.reference,
                "checkpoints": len(snaps), "final": snaps[-1][1].to_dict()})
    _write(out / "report.json", jsonfmt.dumps(doc))
    return EXIT_OK


def _endpoints(exp: Experiment):
    cfg = exp.config
    if cfg.endpoint_a is None:
        return None
    return dirac(cfg.endpoint_a, exp.partition), dirac(cfg.endpoint_b, exp.partition)


def cmd_pomega(exp: Experiment, out: Path) -> int:
    t0 = time.perf_counter()
    x0 = exp.start_point()
    snaps = empiric_sequence(exp.system, x0, exp.params.schedule, exp.partition,
                             exp.params.burn_in)
    est = limit_set_from_snapshots(snaps, exp.metric, exp.params.tail_fraction,
                                   exp.params.delta_cluster, exp.params.delta_conv)
    body = est.to_dict()
    ends = _endpoints(exp)
    if ends is not None:
        body["segment_projection"] = [
            {"lambda": lam, "residual": res}
            for lam, res in segment_projection_residual(est, ends[0], ends[1], exp.metric)
        ]
    for k, rep in enumerate(est.representatives):
        _write_measure(exp, out, f"representative_{k:03d}", rep)
    doc = exp.header(time.perf_counter() - t0)
    doc.update({"command": "pomega", "x0": x0.tolist(), "limit_set": body})
    _write(out / "report.json", jsonfmt.dumps(doc))
    return EXIT_OK


def cmd_observable(exp: Experiment, out: Path) -> int:
    t0 = time.perf_counter()
    cfg = exp.config
    plan = SamplePlan(cfg.samples, cfg.seed, exp.system.domain)
    est = estimate_observable_set(
        exp.system, plan, exp.partition, exp.metric, exp.params, cfg.epsilon,
        phi_srb=cfg.phi_srb, decay_ratio=cfg.decay_ratio, threads=cfg.threads,
    )
    holdout = SamplePlan(cfg.holdout_samples, cfg.effective_holdout_seed, exp.system.domain)
    est.coverage = minimality_check(est, holdout, cfg.coverage_epsilon)
    body = est.to_dict()
    body["coverage_epsilon"] = cfg.coverage_epsilon
    body["holdout"] = {"samples": holdout.n, "seed": holdout.seed}
    body["srb_rule"] = (
        "scaling heuristic: convergent fraction >= phi_srb at every eps and mean "
        "successive basin-fraction ratio > decay_ratio"
    )
    for k, c in enumerate(est.candidates):
        _write_measure(exp, out, f"candidate_{k:03d}", c.representative)
    doc = exp.header(time.perf_counter() - t0)
    doc.update({"command": "observable", **body})
    _write(out / "report.json", jsonfmt.dumps(doc))
    return EXIT_OK


def cmd_check(exp: Experiment, out: Path, stream=None) -> int:
    stream = stream or sys.stdout
    t0 = time.perf_counter()
    results = run_checks(exp.system, exp.partition, exp.metric, exp.start_point(),
                         exp.config.seed)
    for r in results:
        stream.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.detail}\n")
    doc = exp.header(time.perf_counter() - t0)
    doc.update({"command": "check", "checks": [r.to_dict() for r in results],
                "passed": all(r.passed for r in results)})
    _write(out / "report.json", jsonfmt.dumps(doc))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


COMMANDS = {"empiric": cmd_empiric, "pomega": cmd_pomega,
            "observable": cmd_observable, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-systems":
        return cmd_list_systems()
    try:
        cfg = _load(args)
        exp = Experiment.from_config(cfg)
        out = _out_dir(args, cfg)
    except ConfigError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        sys.stderr.write(f"srblab: config error{where}: {exc}\n")
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](exp, out)
    except (SRBLabError, ArithmeticError, ValueError) as exc:
        sys.stderr.write(f"srblab: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
