"""Batch experiment runner: build a problem, run solver(s), write artifacts.

A run emits ``recon_<solver>.pgm``, ``trace_<solver>.csv``, ``summary.csv``
and ``original.pgm`` into the output directory, optionally followed by
rendered figures. Trace CSV column order is fixed:
iter,wall_seconds,objective_tv,objective_penalty,constraint_residual,
rel_change,rel_error with empty fields where a column does not apply to the
solver. The run seed splits into a matrix seed (+101) and a noise seed
(+202) so sensing and noise are independently reproducible; wall-clock
columns are the only nondeterministic output.
"""

import argparse
import csv
import os
import sys

import numpy as np
from dataclasses import dataclass, field

from .imaging import read_image, relative_error, shepp_logan, write_image
from .sensing import (make_gaussian_operator, make_partial_dct_operator,
                      synthesize_observation)
from .solvers import SolverConfig, TVProblem, run_ftvcs, run_iadm

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "parse_config",
    "run_experiment",
    "print_trace_summary",
    "main",
]

MATRIX_SEED_OFFSET = 101
NOISE_SEED_OFFSET = 202

TRACE_COLUMNS = ("iter", "wall_seconds", "objective_tv", "objective_penalty",
                 "constraint_residual", "rel_change", "rel_error")
SUMMARY_COLUMNS = ("solver", "mu", "RE_percent", "objective", "iters", "wall_seconds")

_SENSING_KINDS = ("gaussian", "partial-dct", "partial-dct-2d")
_SOLVER_CHOICES = ("ftvcs", "iadm", "both")


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the key and line."""


@dataclass
class ExperimentSpec:
    """Fully validated experiment description with protocol defaults."""

    phantom_n: int = 64
    image_path: str | None = None
    sensing: str = "gaussian"
    sample_ratio: float = 0.3
    sigma: float = 0.001
    solver: str = "both"
    mu: float = 200.0
    beta: float = 8.0
    beta_schedule: tuple = (16.0, 32.0, 64.0, 128.0)
    tau: float | None = None
    tau_fraction: float = 1.9
    tol: float = 1e-3
    max_iters: int = 10000
    seed: int = 0
    output_dir: str = "results"
    figures: bool = False


def _parse_bool(value):
    low = value.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _parse_input(spec, value):
    if value.startswith("phantom:"):
        spec.phantom_n = int(value.split(":", 1)[1])
        spec.image_path = None
    else:
        spec.image_path = value


def _parse_tau_rule(spec, value):
    parts = value.split()
    if len(parts) != 2 or parts[0] not in ("fraction", "explicit"):
        raise ValueError(f"expected 'fraction <f>' or 'explicit <tau>', got {value!r}")
    number = float(parts[1])
    if parts[0] == "fraction":
        if not 0.0 < number < 2.0:
            raise ValueError(f"fraction must lie in (0, 2), got {number}")
        spec.tau_fraction = number
        spec.tau = None
    else:
        if number <= 0:
            raise ValueError(f"explicit tau must be positive, got {number}")
        spec.tau = number


def _parse_schedule(value):
    schedule = tuple(float(part) for part in value.split(","))
    if not schedule:
        raise ValueError("beta_schedule must be nonempty")
    return schedule


def parse_config(text):
    """Parse flat ``key = value`` lines (``#`` comments) into an ExperimentSpec.

    Unknown keys, unparsable values, and violated invariants are rejected
    with the offending key and line number in the message. An empty file
    yields the full protocol defaults (64x64 phantom, 30% Gaussian sampling,
    sigma 0.001, mu 200, IADM beta 8, FTVCS schedule 16..128, tau rule
    fraction 1.9, tolerance 1e-3).
    """
    spec = ExperimentSpec()
    setters = {
        "input": lambda v: _parse_input(spec, v),
        "sensing": lambda v: setattr(spec, "sensing", v),
        "sample_ratio": lambda v: setattr(spec, "sample_ratio", float(v)),
        "sigma": lambda v: setattr(spec, "sigma", float(v)),
        "solver": lambda v: setattr(spec, "solver", v),
        "mu": lambda v: setattr(spec, "mu", float(v)),
        "beta": lambda v: setattr(spec, "beta", float(v)),
        "beta_schedule": lambda v: setattr(spec, "beta_schedule", _parse_schedule(v)),
        "tau_rule": lambda v: _parse_tau_rule(spec, v),
        "tol": lambda v: setattr(spec, "tol", float(v)),
        "max_iters": lambda v: setattr(spec, "max_iters", int(v)),
        "seed": lambda v: setattr(spec, "seed", int(v)),
        "output_dir": lambda v: setattr(spec, "output_dir", v),
        "figures": lambda v: setattr(spec, "figures", _parse_bool(v)),
    }
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in setters:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setters[key](value)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: invalid value for {key!r}: {exc}") from exc
    _validate_spec(spec)
    return spec


def _validate_spec(spec):
    if spec.image_path is None and spec.phantom_n < 8:
        raise ConfigError(f"phantom size must be at least 8, got {spec.phantom_n}")
    if spec.sensing not in _SENSING_KINDS:
        raise ConfigError(f"sensing must be one of {_SENSING_KINDS}, got {spec.sensing!r}")
    if not 0.0 < spec.sample_ratio <= 1.0:
        raise ConfigError(f"sample_ratio must lie in (0, 1], got {spec.sample_ratio}")
    if spec.sigma < 0:
        raise ConfigError(f"sigma must be nonnegative, got {spec.sigma}")
    if spec.solver not in _SOLVER_CHOICES:
        raise ConfigError(f"solver must be one of {_SOLVER_CHOICES}, got {spec.solver!r}")
    if spec.mu <= 0 or spec.beta <= 0:
        raise ConfigError("mu and beta must be positive")
    if spec.tol <= 0:
        raise ConfigError(f"tol must be positive, got {spec.tol}")
    if spec.max_iters < 1:
        raise ConfigError(f"max_iters must be at least 1, got {spec.max_iters}")
    if spec.seed < 0:
        raise ConfigError(f"seed must be nonnegative, got {spec.seed}")
    if any(b <= 0 for b in spec.beta_schedule):
        raise ConfigError("beta_schedule entries must be positive")
    if any(b2 <= b1 for b1, b2 in zip(spec.beta_schedule, spec.beta_schedule[1:])):
        raise ConfigError("beta_schedule must be strictly increasing")


def _load_truth(spec):
    if spec.image_path is not None:
        try:
            return read_image(spec.image_path)
        except OSError as exc:
            raise ConfigError(
                f"cannot read input image {spec.image_path!r}: {exc}") from exc
    return shepp_logan(spec.phantom_n)


def _build_operator(spec, n2, seed):
    m = max(1, round(spec.sample_ratio * n2))
    if spec.sensing == "gaussian":
        return make_gaussian_operator(m, n2, seed)
    two_d = spec.sensing == "partial-dct-2d"
    return make_partial_dct_operator(m, n2, seed, two_dimensional=two_d)


def _fmt(value):
    if value is None:
        return ""
    return f"{value:.12g}"


def _write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace.records:
            writer.writerow([
                rec.iteration,
                _fmt(rec.wall_seconds),
                _fmt(rec.objective_tv),
                _fmt(rec.objective_penalty),
                _fmt(rec.constraint_residual),
                _fmt(rec.rel_change),
                _fmt(rec.rel_error),
            ])


def run_experiment(spec):
    """Execute one experiment spec; returns the list of files written.

    Output paths are created before any compute so permission problems fail
    fast; on any error all files written so far are removed before the
    exception propagates.
    """
    os.makedirs(spec.output_dir, exist_ok=True)
    if not os.access(spec.output_dir, os.W_OK):
        raise ConfigError(f"output directory {spec.output_dir!r} is not writable")

    truth = _load_truth(spec)
    n = truth.shape[0]
    if spec.sample_ratio * n * n < 1.0:
        raise ConfigError(
            f"sample_ratio {spec.sample_ratio} yields no measurements for n={n}")
    operator = _build_operator(spec, n * n, spec.seed + MATRIX_SEED_OFFSET)
    observation = synthesize_observation(operator, truth, spec.sigma,
                                         spec.seed + NOISE_SEED_OFFSET)
    problem = TVProblem(operator, observation.values)
    config = SolverConfig(mu=spec.mu, beta=spec.beta, tau=spec.tau,
                          tau_fraction=spec.tau_fraction, tol_rel_change=spec.tol,
                          max_iters=spec.max_iters, beta_schedule=spec.beta_schedule,
                          record_trace=True, oracle_truth=truth)
    runners = {"ftvcs": run_ftvcs, "iadm": run_iadm}
    selected = ("ftvcs", "iadm") if spec.solver == "both" else (spec.solver,)

    written = []
    try:
        write_image(os.path.join(spec.output_dir, "original.pgm"), truth)
        written.append(os.path.join(spec.output_dir, "original.pgm"))
        summary_rows = []
        from .imaging import objective_tv_l2  # local import keeps module load light

        for name in selected:
            u, trace = runners[name](problem, config)
            recon_path = os.path.join(spec.output_dir, f"recon_{name}.pgm")
            write_image(recon_path, u)
            written.append(recon_path)
            trace_path = os.path.join(spec.output_dir, f"trace_{name}.csv")
            _write_trace_csv(trace_path, trace)
            written.append(trace_path)
            report = objective_tv_l2(u, operator, problem.f, spec.mu)
            # RE is measured on the clipped image so the summary row describes
            # the artifact on disk up to 8-bit quantization
            re_percent = relative_error(np.clip(u, 0.0, 1.0), truth)
            summary_rows.append([
                name,
                _fmt(spec.mu),
                _fmt(re_percent),
                _fmt(report.objective_tv),
                trace.iterations,
                _fmt(trace.wall_seconds),
            ])
        summary_path = os.path.join(spec.output_dir, "summary.csv")
        with open(summary_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_COLUMNS)
            writer.writerows(summary_rows)
        written.append(summary_path)
        if spec.figures:
            from .figures import render_report

            written.extend(render_report(spec.output_dir))
    except BaseException:
        for path in written:
            try:
                os.unlink(path)
            except OSError:
                pass
        raise
    return written


def print_trace_summary(trace_csv_path, out=None):
    """Print first/last/decile rows of the objective and error columns.

    Returns the rendered text table; raises on a missing or malformed file.
    """
    out = out or sys.stdout
    if not os.path.exists(trace_csv_path):
        raise ValueError(f"trace file not found: {trace_csv_path}")
    with open(trace_csv_path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows or rows[0] != list(TRACE_COLUMNS):
        raise ValueError(f"{trace_csv_path}: not a trace CSV (unexpected header)")
    body = rows[1:]
    if not body:
        raise ValueError(f"{trace_csv_path}: trace has no data rows")
    picks = sorted({round(k * (len(body) - 1) / 10) for k in range(11)})
    header = f"{'iter':>8} {'wall_s':>12} {'objective_tv':>16} {'rel_change':>12} {'rel_error_%':>12}"
    lines = [header, "-" * len(header)]
    for idx in picks:
        row = dict(zip(TRACE_COLUMNS, body[idx]))
        lines.append(
            f"{row['iter']:>8} {row['wall_seconds']:>12.12s} {row['objective_tv']:>16.16s} "
            f"{row['rel_change']:>12.12s} {row['rel_error'] or '-':>12.12s}")
    text = "\n".join(lines)
    print(text, file=out)
    return text


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TVCS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"TVCS_SEED must be an integer, got {env!r}") from None
    return None


def _cmd_run(args):
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
    spec = parse_config(text)
    seed = _resolve_seed(args)
    if seed is not None:
        spec.seed = seed
    if args.output_dir is not None:
        spec.output_dir = args.output_dir
    if args.figures:
        spec.figures = True
    written = run_experiment(spec)
    for path in written:
        print(path)
    return 0


def _cmd_trace(args):
    print_trace_summary(args.csv)
    return 0


def _cmd_report(args):
    from .figures import render_report

    for path in render_report(args.output_dir):
        print(path)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tvcs",
        description="TV-regularized image reconstruction from random projections")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config", help="path to a key = value config file")
    p_run.add_argument("--output-dir", default=None, help="override output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the run seed (takes precedence over TVCS_SEED)")
    p_run.add_argument("--figures", action="store_true",
                       help="render report figures after the run")
    p_run.set_defaults(func=_cmd_run)

    p_trace = sub.add_parser("trace", help="summarize a trace CSV")
    p_trace.add_argument("csv", help="path to a trace_<solver>.csv file")
    p_trace.set_defaults(func=_cmd_trace)

    p_report = sub.add_parser("report", help="render figures from run artifacts")
    p_report.add_argument("output_dir", help="directory holding run artifacts")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime/divergence failures
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
