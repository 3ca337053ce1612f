"""Command-line entry point.

    cprates experiment      gradient-descent error-table ladder per x0
    cprates counterexample  perturbed minimizers on the diagonal operator
    cprates rates           rate fits plus converse and B2 diagnostics

Every run writes config-resolved.json next to its outputs; feeding that
file back through ``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rates
from .counterexample import counterexample_run, halving_ladder
from .problem import build_depth_profiling_operator, make_grid
from .rates import SOLVERS, DEFAULT_DELTAS
from .regularizers import CONVEX_PART, EXACT, make_regularizer

EXIT_OK, EXIT_FLAGGED, EXIT_CONFIG = 0, 1, 2
REGULARIZERS = ("quad", "genquad", "boundedpert")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    n: int = 256
    deltas: list[float] = field(default_factory=lambda: list(DEFAULT_DELTAS))
    alpha_c: float = 1.0
    beta: float = 0.1
    eta_rule: str = "alpha-power"
    stopping: str = "gradnorm"
    x0: list = field(default_factory=lambda: [1.0, 0.0])
    solver: str = "gd"
    momentum: float = 0.5
    selection: str = EXACT
    regularizer: str = "quad"
    pert_a: float = 0.5
    max_iter: int = 10**7
    seed: int = 0
    out: str = "out"
    format: str = "csv"
    strict: bool = False
    # counterexample
    dim: int = 41
    steps: int = 20
    support_count: int = 1
    eps: float | str = 0.5
    # rates diagnostics
    b2_samples: int = 200
    b2_radius: float = 0.1

    def validate(self) -> "ExperimentConfig":
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n!r}")
        if not self.deltas:
            raise ConfigError("deltas must not be empty")
        if any(not (isinstance(d, (int, float)) and d > 0) for d in self.deltas):
            raise ConfigError("deltas must be positive")
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ConfigError("deltas must be strictly decreasing")
        if not self.alpha_c > 0:
            raise ConfigError("alpha-c must be positive")
        if not self.beta >= 0:
            raise ConfigError("beta must be >= 0")
        if self.eta_rule not in rates.ETA_RULES:
            raise ConfigError(f"eta rule must be one of {rates.ETA_RULES}")
        if self.stopping not in rates.STOPPINGS:
            raise ConfigError(f"stopping must be one of {rates.STOPPINGS}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"unknown regularizer {self.regularizer!r}; choose from {REGULARIZERS}")
        allowed = (CONVEX_PART, EXACT) if self.regularizer == "boundedpert" else (EXACT,)
        if self.selection not in allowed:
            raise ConfigError(f"selection {self.selection!r} not available for {self.regularizer}")
        if self.regularizer == "boundedpert" and not self.pert_a > 0:
            raise ConfigError("pert-a must be positive")
        if self.regularizer == "boundedpert" and (self.solver in ("oracle", "gd-spectral") or self.stopping != "gradnorm"):
            raise ConfigError("boundedpert needs solver gd or heavyball with gradnorm stopping")
        if self.regularizer == "boundedpert" and self.solver == "heavyball":
            raise ConfigError("heavyball is restricted to convex regularizers")
        if not self.x0:
            raise ConfigError("at least one x0 is required")
        self.x0 = [x0_profile(v) for v in self.x0]
        self.deltas = [float(d) for d in self.deltas]
        if self.max_iter < 1:
            raise ConfigError("max-iter must be >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.steps < 1 or self.dim < 2 * self.steps + 1:
            raise ConfigError(f"dim must be >= 2 * steps + 1 (steps={self.steps}, dim={self.dim})")
        if self.support_count < 1 or 2 * self.support_count - 1 > self.dim:
            raise ConfigError("support-count does not fit in dim")
        if self.eps != "delta":
            try:
                self.eps = float(self.eps)
            except (TypeError, ValueError):
                raise ConfigError(f"eps must be a number or 'delta', got {self.eps!r}") from None
            if self.eps < 0:
                raise ConfigError("eps must be >= 0")
        return self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


NAMED_PROFILES = {"zero": 0.0, "one": 1.0}


def x0_profile(spec) -> float:
    """x0 is a constant function, given as a number or a named profile."""
    if isinstance(spec, str):
        if spec in NAMED_PROFILES:
            return NAMED_PROFILES[spec]
        try:
            return float(spec)
        except ValueError:
            raise ConfigError(f"unknown x0 profile {spec!r}") from None
    if isinstance(spec, (int, float)) and math.isfinite(spec):
        return float(spec)
    raise ConfigError(f"bad x0 {spec!r}")


def _deltas_arg(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _eps_arg(text: str):
    return "delta" if text == "delta" else float(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # defaults are None so that only flags given on the command line override --config
    common.add_argument("--config", type=Path)
    common.add_argument("--n", type=int)
    common.add_argument("--deltas", type=_deltas_arg)
    common.add_argument("--alpha-c", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--eta-rule", choices=rates.ETA_RULES)
    common.add_argument("--stopping", choices=rates.STOPPINGS)
    common.add_argument("--x0", action="append")
    common.add_argument("--solver")
    common.add_argument("--momentum", type=float)
    common.add_argument("--selection")
    common.add_argument("--regularizer")
    common.add_argument("--pert-a", type=float)
    common.add_argument("--max-iter", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--format")
    common.add_argument("--strict", action="store_true", default=None)
    common.add_argument("--dim", type=int)
    common.add_argument("--steps", type=int)
    common.add_argument("--support-count", type=int)
    common.add_argument("--eps", type=_eps_arg)
    common.add_argument("--b2-samples", type=int)
    common.add_argument("--b2-radius", type=float)

    parser = _Parser(prog="cprates", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("experiment", parents=[common], help="error-table ladder for each x0")
    sub.add_parser("counterexample", parents=[common], help="perturbed minimizers on the diagonal operator")
    sub.add_parser("rates", parents=[common], help="rate fits with converse and B2 checks")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config is not None:
        try:
            values.update(json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    unknown = set(values) - {f.name for f in dataclasses.fields(ExperimentConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def _plain(v):
    # numpy scalars would otherwise print as np.float64(...)
    return v.item() if isinstance(v, np.generic) else v


def _fmt(v) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path: Path, rows: list[dict], fields, fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        path.write_text(json.dumps([{k: _plain(r[k]) for k in fields} for r in rows], indent=2, allow_nan=True) + "\n")
        return path
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for r in rows:
            writer.writerow([_fmt(r[k]) for k in fields])
    return path


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _setup(cfg: ExperimentConfig):
    grid = make_grid(cfg.n)
    op = build_depth_profiling_operator(grid)
    source = rates.make_source_instance(op, rates.default_source_element(grid))
    reg = make_regularizer(cfg.regularizer, a=cfg.pert_a, K=op if cfg.regularizer == "genquad" else None)
    return grid, op, source, reg


def _ladders(cfg, grid, op, source, reg):
    out = []
    for spec in cfg.x0:
        x0 = grid.constant(x0_profile(spec))
        recs = rates.run_noise_ladder(
            op, source, reg, cfg.selection, cfg.deltas, cfg.alpha_c, cfg.beta, x0, cfg.solver, cfg.seed,
            cfg.eta_rule, cfg.stopping, cfg.momentum, cfg.max_iter,
        )  # fmt: skip
        out.append((x0_profile(spec), recs))
    return out


RECORD_FIELDS = ("x0",) + rates.RunRecord.CSV_FIELDS
RATE_FIELDS = ("x0",) + rates.RateFit.CSV_FIELDS


def _record_rows(ladders):
    return [{"x0": x0, **r.as_row()} for x0, recs in ladders for r in recs]


def _rate_rows(ladders, metrics):
    rows, fits = [], {}
    for x0, recs in ladders:
        for m in metrics:
            try:
                fit = rates.fit_rate(recs, m)
            except rates.RateFitError:
                rows.append({"x0": x0, "metric": m, "slope": math.nan, "intercept": math.nan,
                             "r_squared": math.nan, "points_used": 0})  # fmt: skip
                continue
            fits[(x0, m)] = fit
            rows.append({"x0": x0, **fit.as_row()})
    return rows, fits


def summary_table(cfg, ladders) -> str:
    header = ["delta", "delta^beta"] + [f"x_0 = {x0:g}" for x0, _ in ladders]
    lines = [" | ".join(header)]
    for i, d in enumerate(cfg.deltas):
        cells = [f"{d:.0e}", f"{d**cfg.beta:.1e}"] + [f"{recs[i].error_sq:.1e}" for _, recs in ladders]
        lines.append(" | ".join(cells))
    return "\n".join(lines)


def cmd_experiment(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config-resolved.json", cfg.as_dict())
    grid, op, source, reg = _setup(cfg)
    ladders = _ladders(cfg, grid, op, source, reg)
    write_table(out / "records.csv", _record_rows(ladders), RECORD_FIELDS, cfg.format)
    rows, fits = _rate_rows(ladders, ("error_sq",) if len(cfg.deltas) >= 2 else ())
    write_table(out / "rates.csv", rows, RATE_FIELDS, cfg.format)
    text = "Error ||x_k - x_dag||^2\n" + summary_table(cfg, ladders) + "\n"
    for (x0, m), fit in fits.items():
        text += f"x_0 = {x0:g}: estimated rate {fit.slope:.2f} (r^2 {fit.r_squared:.3f}, {m})\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    flagged = [r for _, recs in ladders for r in recs if r.stop_reason == "MaxIter"]
    _write_json(out / "report.json", {"max_iter_rows": len(flagged), "rates": [f.as_row() for f in fits.values()]})
    return EXIT_FLAGGED if (flagged and cfg.strict) else EXIT_OK


def cmd_counterexample(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config-resolved.json", cfg.as_dict())
    res = counterexample_run(cfg.dim, cfg.support_count, cfg.eps, halving_ladder(cfg.steps), cfg.alpha_c)
    fields = res.records[0].CSV_FIELDS
    write_table(out / "records.csv", [r.as_row() for r in res.records], fields, cfg.format)
    last = res.records[-1]
    status = "PASS" if res.identities_hold else "FAIL"
    text = (
        f"identities H(z)-H(x) = alpha eps^2/2 and R(z)-R(x) = eps^2/2: {status}\n"
        f"final R(z_k) - R(x_dag) = {last.r_excess!r} at delta = {last.delta!r}\n"
    )
    (out / "summary.txt").write_text(text)
    _write_json(out / "report.json", {"identities_hold": res.identities_hold, "final_r_excess": last.r_excess,
                                      "columns": list(fields)})  # fmt: skip
    print(text, end="")
    return EXIT_FLAGGED if (cfg.strict and not res.identities_hold) else EXIT_OK


def cmd_rates(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config-resolved.json", cfg.as_dict())
    grid, op, source, reg = _setup(cfg)
    ladders = _ladders(cfg, grid, op, source, reg)
    write_table(out / "records.csv", _record_rows(ladders), RECORD_FIELDS, cfg.format)
    rows, fits = _rate_rows(ladders, rates.METRICS)
    write_table(out / "rates.csv", rows, RATE_FIELDS, cfg.format)
    report = {"fits": rows, "ladders": []}
    lines = []
    for x0, recs in ladders:
        entry = {
            "x0": x0,
            "converse": rates.converse_check(recs, source, reg, cfg.selection).as_dict(),
            "b2_constant": rates.verify_b2_constant(
                op, source, reg, cfg.selection, cfg.b2_samples, cfg.b2_radius, cfg.seed
            ),
            "inexact_bound": rates.inexact_bound_check(recs).as_dict(),
            "sign_flag_fraction": sum(r.sign_flag for r in recs) / len(recs),
            "iterations_nondecreasing": rates.iterations_nondecreasing(recs),
        }
        if all(math.isfinite(r.gap) for r in recs) and len(recs) >= 2:
            entry["gap_rates"] = rates.gap_rate_check(recs).as_dict()
        report["ladders"].append(entry)
        for m in rates.METRICS:
            if (x0, m) in fits:
                f = fits[(x0, m)]
                lines.append(f"x_0 = {x0:g} {m}: slope {f.slope:.3f} (r^2 {f.r_squared:.3f}, {f.points_used} pts)")
    _write_json(out / "report.json", report)
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    flagged = any(r.stop_reason == "MaxIter" for _, recs in ladders for r in recs)
    return EXIT_FLAGGED if (flagged and cfg.strict) else EXIT_OK


COMMANDS = {"experiment": cmd_experiment, "counterexample": cmd_counterexample, "rates": cmd_rates}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"cprates {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
