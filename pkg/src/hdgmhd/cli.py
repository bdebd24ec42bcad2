"""Command-line driver: ``hdg-mhd run | verify | report``.

Exit codes: 0 on success, 2 when a solve fails, 3 for invalid configuration
or input files; ``verify`` exits with ``10 + i`` for the first failing suite.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis import VARIABLES, pair_orders
from .local import LocalSolverError, QuadratureWarning
from .postprocess import write_samples
from .problems import PROBLEMS, get_problem
from .report import CsvFormatError, markdown_table, read_csv, write_csv, write_report
from .study import DOF_LIMIT, convergence_study, degrees_for, estimated_dofs_for
from .system import MONOLITHIC_LIMIT, SolverError, solve_monolithic
from .verify import SUITES, exit_code, relative_differences, run_suites

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3
THREADS_ENV = "HDG_MHD_THREADS"
POST_HEADER = ["level", "h", "err_u", "err_b", "err_ubar", "err_bbar", "ord_ubar", "ord_bbar",
               "div_ubar", "div_bbar"]


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    problem: str = "hartmann"
    order: int = 1
    levels: list = field(default_factory=lambda: [1, 2, 3, 4])
    Re: float | None = None
    Rm: float | None = None
    kappa: float | None = None
    Ha: float | None = None
    alpha1: float | None = None
    alpha2: float | None = None
    alpha3: float | None = None
    stabilization: str | None = None
    form_degree: int | None = None
    load_degree: int | None = None
    output: str | None = None
    samples: str | None = None
    postprocess: bool = False
    monolithic: bool = False
    threads: int = 1

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {', '.join(PROBLEMS)}")
        if self.order not in (1, 2, 3):
            raise ConfigError("order must be 1, 2 or 3")
        if not self.levels:
            raise ConfigError("no levels given")
        if any(lv < 1 for lv in self.levels):
            raise ConfigError("levels must be positive")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("levels must be strictly ascending")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.problem != "hartmann":
            extra = [n for n in ("Re", "Rm", "kappa", "Ha") if getattr(self, n) is not None]
            if extra:
                raise ConfigError(f"{', '.join(extra)} can only be overridden for the hartmann problem")
        return self

    @property
    def output_path(self) -> Path:
        return Path(self.output) if self.output else Path(f"{self.problem}_k{self.order}.csv")

    def build_problem(self):
        kw = {n: getattr(self, n) for n in ("Re", "Rm", "kappa", "Ha", "alpha1", "alpha2", "alpha3",
                                            "stabilization")}
        try:
            pr = get_problem(self.problem, **kw)
            pr.coeffs.validate()
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return pr


def parse_levels(text: str) -> list[int]:
    """``"1:4"`` (inclusive range), ``"1:9:2"`` (with step) or a comma list ``"2,4,8"``."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            step = parts[2] if len(parts) == 3 else 1
            if step < 1:
                raise ValueError
            return list(range(parts[0], parts[1] + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse levels {text!r}") from None


_CASTS = {"order": int, "levels": parse_levels, "form_degree": int, "load_degree": int, "threads": int,
          "Re": float, "Rm": float, "kappa": float, "Ha": float,
          "alpha1": float, "alpha2": float, "alpha3": float}


def _as_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean {text!r}")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys mean underscores."""
    names = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in names:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value):
    if isinstance(value, str):
        if key in ("postprocess", "monolithic"):
            return _as_bool(value)
        if key in _CASTS:
            try:
                return _CASTS[key](value)
            except ValueError:
                raise ConfigError(f"bad value {value!r} for {key}") from None
    return value


def make_config(args: argparse.Namespace, environ=None) -> RunConfig:
    """Defaults, then the environment thread count, then the config file, then flags."""
    environ = os.environ if environ is None else environ
    values: dict = {}
    if environ.get(THREADS_ENV):
        values["threads"] = environ[THREADS_ENV]
    if args.config:
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return cfg.validate()


# --- commands ---------------------------------------------------------------

def _print_orders(table, out):
    orders = table.orders()
    head = ["level", "h"] + [f"err_{v}" for v in VARIABLES] + [f"ord_{v}" for v in VARIABLES]
    out.write(" ".join(f"{h:>10}" for h in head) + "\n")
    for i, r in enumerate(table.rows):
        cells = [f"{r.level:>10d}", f"{r.h:10.4g}"] + [f"{r.errors[v]:10.3e}" for v in VARIABLES]
        cells += [f"{'-':>10}" if not np.isfinite(orders[v][i]) else f"{orders[v][i]:10.3f}" for v in VARIABLES]
        out.write(" ".join(cells) + "\n")


def cmd_run(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    problem = cfg.build_problem()
    try:
        degrees = degrees_for(problem, cfg.order, cfg.form_degree, cfg.load_degree)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for level in cfg.levels:
        n = estimated_dofs_for(problem, cfg.order, level)
        if n > DOF_LIMIT:
            raise ConfigError(f"level {level} needs about {n} global unknowns, above the {DOF_LIMIT} guard")

    mono_failures = []

    def progress(res):
        mesh = res.solution.space.mesh
        out.write(f"level {res.level}: {mesh.n_elements} elements, {res.solution.stats['dim']} unknowns, "
                  f"{res.seconds:.2f}s\n")
        if cfg.monolithic:
            sp_ = res.solution.space
            if 11 * sp_.N * mesh.n_elements + 4 * sp_.M * mesh.n_edges + 1 > MONOLITHIC_LIMIT:
                out.write("  monolithic check skipped (system too large)\n")
            else:
                ref = solve_monolithic(sp_, problem.coeffs, problem.g, problem.f, problem.bc, degrees)
                diff = max(relative_differences(res.solution, ref).values())
                out.write(f"  condensed vs monolithic: max relative difference {diff:.2e}\n")
                if diff > 1e-8:
                    mono_failures.append(res.level)
        if cfg.postprocess:
            p = res.post
            out.write(f"  post-processed: err_ubar {p['err_u']:.3e}, err_bbar {p['err_b']:.3e}, "
                      f"div {p['diag_u']['div_max']:.1e} / {p['diag_b']['div_max']:.1e}\n")
        out.flush()

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureWarning)
        table, results = convergence_study(problem, cfg.order, cfg.levels, degrees, threads=cfg.threads,
                                           postprocess=cfg.postprocess, callback=progress)
    path = cfg.output_path
    write_csv(path, table)
    _print_orders(table, out)
    out.write(f"wrote {path}\n")
    if cfg.postprocess:
        post_path = path.with_name(path.stem + "_post.csv")
        _write_post_csv(post_path, table, results)
        out.write(f"wrote {post_path}\n")
    if cfg.samples:
        last = results[-1]
        fields_ = {v: last.solution.field(v) for v in VARIABLES}
        if cfg.postprocess:
            fields_["ubar"], fields_["bbar"] = last.post["u"].coef, last.post["b"].coef
        write_samples(cfg.samples, last.solution.space, fields_)
        out.write(f"wrote {cfg.samples}\n")
    if mono_failures:
        out.write(f"condensed and monolithic solutions differ on levels {mono_failures}\n")
        return EXIT_SOLVER
    return EXIT_OK


def _write_post_csv(path, table, results):
    h = table.h
    eu = np.array([r.post["err_u"] for r in results])
    eb = np.array([r.post["err_b"] for r in results])
    ou, ob = pair_orders(eu, h), pair_orders(eb, h)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POST_HEADER)
        for i, (row, res) in enumerate(zip(table.rows, results)):
            w.writerow([row.level, f"{row.h:.12e}", f"{row.errors['u']:.12e}", f"{row.errors['b']:.12e}",
                        f"{eu[i]:.12e}", f"{eb[i]:.12e}",
                        "" if not np.isfinite(ou[i]) else f"{ou[i]:.6f}",
                        "" if not np.isfinite(ob[i]) else f"{ob[i]:.6f}",
                        f"{res.post['diag_u']['div_max']:.3e}", f"{res.post['diag_b']['div_max']:.3e}"])


def cmd_verify(args, out=None) -> int:
    out = sys.stdout if out is None else out
    alphas = {n: getattr(args, n) for n in ("alpha1", "alpha2", "alpha3") if getattr(args, n) is not None}
    try:
        results = run_suites(args.suite, alphas=alphas, flux_sign=args.flux_sign,
                             printer=lambda s: (out.write(s + "\n"), out.flush()))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    code = exit_code(results)
    out.write("all suites passed\n" if code == 0 else f"verification failed (exit {code})\n")
    return code


def cmd_report(args, out=None) -> int:
    out = sys.stdout if out is None else out
    if not args.csv:
        raise ConfigError("no CSV files given")
    orders = args.order or []
    if orders and len(orders) not in (1, len(args.csv)):
        raise ConfigError("give one --order for all files or one per file")
    studies = []
    for i, path in enumerate(args.csv):
        k = orders[0] if len(orders) == 1 else (orders[i] if orders else None)
        try:
            studies.append(read_csv(path, k))
        except CsvFormatError as exc:
            raise ConfigError(str(exc)) from exc
    written = write_report(studies, args.out)
    out.write(markdown_table(studies) + "\n")
    for p in written:
        out.write(f"wrote {p}\n")
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hdg-mhd", description="HDG solver for linearized incompressible resistive MHD")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", help="convergence study on a sequence of mesh levels")
    r.add_argument("--config", help="key = value file; flags take precedence")
    r.add_argument("--problem", help=f"one of {', '.join(PROBLEMS)}")
    r.add_argument("--order", type=int, help="polynomial order k in {1, 2, 3}")
    r.add_argument("--levels", type=parse_levels, help="'1:4', '1:9:2' or '2,4,8,16'")
    for name in ("Re", "Rm", "kappa", "Ha"):
        r.add_argument(f"--{name}", type=float, help="hartmann only")
    for name in ("alpha1", "alpha2", "alpha3"):
        r.add_argument(f"--{name}", type=float)
    r.add_argument("--stabilization", choices=("default", "coupled", "corner"))
    r.add_argument("--form-degree", dest="form_degree", type=int, help="quadrature degree for bilinear forms")
    r.add_argument("--load-degree", dest="load_degree", type=int, help="quadrature degree for loads and errors")
    r.add_argument("--output", help="CSV path (default <problem>_k<order>.csv)")
    r.add_argument("--samples", help="write field samples of the finest level to this CSV")
    r.add_argument("--postprocess", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--monolithic", action=argparse.BooleanOptionalAction, default=None,
                   help="compare every level against the uncondensed solve")
    r.add_argument("--threads", type=int, help=f"worker threads (also {THREADS_ENV})")

    v = sub.add_parser("verify", help="run the self-verification suites")
    v.add_argument("--suite", action="append", choices=SUITES, help="restrict to these suites")
    for name in ("alpha1", "alpha2", "alpha3"):
        v.add_argument(f"--{name}", type=float, help="override for the well-posedness suite")
    v.add_argument("--flux-sign", dest="flux_sign", type=float, default=1.0,
                   help="scale of the convective flux term in the consistency suite (mutation check)")

    rep = sub.add_parser("report", help="SVG plots and a markdown table from run CSVs")
    rep.add_argument("csv", nargs="*")
    rep.add_argument("--out", default="report", help="output directory")
    rep.add_argument("--order", type=int, action="append",
                     help="order k for the slope triangles (default: from '_k<d>' in the file name)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:          # --help exits 0, usage errors exit 3
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return cmd_run(make_config(args))
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_report(args)
    except ConfigError as exc:
        print(f"hdg-mhd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, LocalSolverError, np.linalg.LinAlgError, RuntimeError, MemoryError) as exc:
        print(f"hdg-mhd: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
