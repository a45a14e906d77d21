"""Command-line runner: single runs, convergence tables and prediction diagnostics.

Exit status: 0 on success, 1 on a numerical failure, 2 on a usage or
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .problems import PROBLEMS, get_problem
from .mesh import build_mesh
from .schemes import SCHEMES, make_operators, run_trajectory, state_norms, step_count

log = logging.getLogger("robindc")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    problem: str
    scheme: str
    dt: float | None = None
    levels: tuple = ()
    alpha: float | None = None
    out_dir: str | None = None
    format: str = "md"
    threads: int = 1
    dump_states: bool = False
    verbose: int = 0

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {list(SCHEMES)}")
        if self.format not in ("csv", "md", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        try:
            analysis.check_scheme(get_problem(self.problem), self.scheme)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.command == "run":
            if self.dt is None or not self.dt > 0:
                raise ConfigError("run needs a positive --dt")
            try:
                step_count(get_problem(self.problem).T, self.dt)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            n = 1.0 / self.dt
            if abs(n - round(n)) > 1e-9 * n:
                raise ConfigError(f"h = dt needs 1/dt integral, got dt = {self.dt}")
        else:
            if len(self.levels) < 2:
                raise ConfigError("a convergence study needs at least two levels")
            if any(k < 1 for k in self.levels) or list(self.levels) != sorted(set(self.levels)):
                raise ConfigError("levels must be positive and strictly increasing")
        return self


def parse_levels(text) -> tuple:
    """``"2..8"`` or ``"2,3,5"`` (or a JSON list) to a tuple of ints."""
    if isinstance(text, (list, tuple)):
        return tuple(int(k) for k in text)
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", str(text))
    if m:
        k0, k1 = int(m.group(1)), int(m.group(2))
        return tuple(range(k0, k1 + 1))
    try:
        return tuple(int(k) for k in str(text).split(","))
    except ValueError:
        raise ConfigError(f"cannot parse levels {text!r}; use k0..k1 or a comma list") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # defaults are None so the config file can fill the gaps; flags win
    common.add_argument("--config", help="JSON file with any of the options below")
    common.add_argument("--problem", choices=sorted(PROBLEMS))
    common.add_argument("--scheme", choices=SCHEMES)
    common.add_argument("--alpha", type=float)
    common.add_argument("--out-dir")
    common.add_argument("--format", choices=("csv", "md", "json"))
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="count")

    p = _Parser(prog="robindc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", parents=[common], help="advance one scheme to the final time")
    run.add_argument("--dt", type=float)
    run.add_argument("--dump-states", action="store_true", default=None,
                     help="write t, |w|, |u|, |lambda| per step as CSV")
    for name, text in (("convergence", "error table over refinement levels"),
                       ("diagnose", "time-difference diagnostics of the prediction step")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--levels", help="k0..k1 or a comma list; dt = h = 2^-k")
    return p


def make_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    opts = {}
    if args.config:
        try:
            opts = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        if not isinstance(opts, dict):
            raise ConfigError("config file must hold a JSON object")
        opts = {k.replace("-", "_"): v for k, v in opts.items()}
    for key, val in vars(args).items():
        if key not in ("config", "command") and val is not None:
            opts[key] = val
    known = {"problem", "scheme", "dt", "levels", "alpha", "out_dir", "format", "threads",
             "dump_states", "verbose"}
    unknown = set(opts) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "problem" not in opts:
        raise ConfigError("--problem is required")
    defaults = {"scheme": "prediction" if args.command == "diagnose" else "correction",
                "format": "json" if args.command == "run" else "md"}
    cfg = RunConfig(command=args.command, problem=opts["problem"],
                    scheme=opts.get("scheme", defaults["scheme"]),
                    dt=None if opts.get("dt") is None else float(opts["dt"]),
                    levels=parse_levels(opts["levels"]) if "levels" in opts else (),
                    alpha=None if opts.get("alpha") is None else float(opts["alpha"]),
                    out_dir=opts.get("out_dir"), format=opts.get("format", defaults["format"]),
                    threads=int(opts.get("threads", 1)),
                    dump_states=bool(opts.get("dump_states", False)),
                    verbose=int(opts.get("verbose", 0)))
    return cfg.validate()


def _emit(cfg: RunConfig, stem: str, text: str, suffix: str):
    sys.stdout.write(text)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.{suffix}").write_text(text)


def _stem(cfg: RunConfig) -> str:
    return f"{cfg.problem}_{cfg.scheme}"


def cmd_run(cfg: RunConfig) -> int:
    problem = get_problem(cfg.problem)
    mesh = build_mesh(round(1.0 / cfg.dt), problem.interface, problem.bc)
    ops = make_operators(cfg.scheme, mesh, problem, cfg.dt, cfg.alpha)
    rows = []

    def observer(pred_n, pred_np1, corr_n, corr_np1):
        if cfg.dump_states:
            s = pred_np1 if corr_np1 is None else corr_np1
            rows.append((s.t, *state_norms(ops, s)))

    traj = run_trajectory(cfg.scheme, problem, cfg.dt, alpha=cfg.alpha, keep="last2",
                          observer=observer, ops=ops)
    record = analysis.error_norms(traj, problem)
    payload = {"problem": cfg.problem, "scheme": cfg.scheme, "dt": cfg.dt,
               "alpha": getattr(ops, "alpha", problem.alpha),
               "steps": step_count(problem.T, cfg.dt), "errors": asdict(record)}
    stem = _stem(cfg) + f"_dt{cfg.dt:g}"
    _emit(cfg, stem, json.dumps(payload, indent=2) + "\n", "json")
    if cfg.dump_states:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "norm_w", "norm_u", "norm_lambda"])
        for row in rows:
            wr.writerow([f"{v:.10g}" for v in row])
        if cfg.out_dir:
            Path(cfg.out_dir, stem + "_states.csv").write_text(buf.getvalue())
        else:
            sys.stderr.write(buf.getvalue())
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    problem = get_problem(cfg.problem)
    report = analysis.convergence_study(problem, cfg.scheme, cfg.levels, alpha=cfg.alpha,
                                        threads=cfg.threads)
    if cfg.format == "csv":
        _emit(cfg, _stem(cfg), report.to_csv(), "csv")
    elif cfg.format == "json":
        _emit(cfg, _stem(cfg), json.dumps(report.to_dict(), indent=2) + "\n", "json")
    else:
        _emit(cfg, _stem(cfg), report.to_markdown(), "md")
    # the acceptance lines go to stderr so the table on stdout stays machine-readable
    for label, ok, detail in analysis.acceptance_checks(report):
        print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}", file=sys.stderr)
    return EXIT_NUMERICAL if report.failures else EXIT_OK


DIAGNOSTIC_COLUMNS = ("max_du_l2", "max_dw_l2", "max_du_grad", "difference_energy",
                      "second_difference_sum", "multiplier_difference_sum")


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.10g}"


def cmd_diagnose(cfg: RunConfig) -> int:
    problem = get_problem(cfg.problem)
    results = []
    for k in cfg.levels:
        res = analysis.run_level(problem, cfg.scheme, k, cfg.alpha, diagnostics=True)
        if res.error:
            print(f"level {k} failed: {res.error}", file=sys.stderr)
            return EXIT_NUMERICAL
        results.append(res)
    table = {c: [r.diagnostics.summary()[c] for r in results] for c in DIAGNOSTIC_COLUMNS}
    fitted = {c: analysis.fitted_rate(cfg.levels, v) for c, v in table.items()}
    if cfg.format == "json":
        text = json.dumps({"problem": cfg.problem, "scheme": cfg.scheme, "levels": list(cfg.levels),
                           "series": table, "fitted_rate": fitted}, indent=2) + "\n"
        _emit(cfg, _stem(cfg) + "_diagnostics", text, "json")
        return EXIT_OK
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["level", "dt", *DIAGNOSTIC_COLUMNS])
    for i, k in enumerate(cfg.levels):
        wr.writerow([k, _fmt(0.5 ** k)] + [_fmt(table[c][i]) for c in DIAGNOSTIC_COLUMNS])
    wr.writerow(["fitted_rate", ""] + [_fmt(fitted[c]) for c in DIAGNOSTIC_COLUMNS])
    _emit(cfg, _stem(cfg) + "_diagnostics", buf.getvalue(), "csv")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    try:
        cfg = make_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"robindc: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if cfg.verbose > 1 else
                        logging.INFO if cfg.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[cfg.command](cfg)
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"robindc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
