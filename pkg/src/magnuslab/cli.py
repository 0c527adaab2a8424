"""Command-line frontend: ``magnuslab <subcommand> [options]``.

Exit codes are 0 on success, 1 for usage or configuration errors and 2 for
numerical failures. Output is deterministic: the same arguments always give
byte-identical JSON.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import convergence, linalg, magnus, problem, report
from .errors import ConfigError, MagnusLabError, NumericalError
from .expr import parse_complex
from .propagator import DEFAULT_TOL, propagate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class _UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which collides with our numerical code
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    subcommand: str
    builtin: Optional[str] = None
    problem_file: Optional[str] = None
    params: Dict[str, complex] = field(default_factory=dict)
    t: Optional[float] = None
    eps: complex = 1.0
    K: int = 20
    tol: float = DEFAULT_TOL
    root_tol: float = convergence.ROOT_TOL
    search_radius: Optional[float] = None
    t_domain: bool = False
    t_max: Optional[float] = None
    out: Optional[Path] = None
    fmt: str = "json"
    jobs: int = 1

    def validate(self):
        if self.builtin is not None and self.problem_file is not None:
            raise ConfigError("give exactly one of --builtin and --problem")
        if self.t is not None and not (math.isfinite(self.t) and self.t >= 0):
            raise ConfigError("--t must be a finite non-negative number")
        if not 1e-13 <= self.tol <= 1e-3:
            raise ConfigError("--tol must lie in [1e-13, 1e-3]")
        if not 1e-14 <= self.root_tol <= 1e-3:
            raise ConfigError("--root-tol must lie in [1e-14, 1e-3]")
        if self.K < 1:
            raise ConfigError("--K must be at least 1")
        if self.K > magnus.K_MAX:
            raise ConfigError(f"--K must be at most {magnus.K_MAX}")
        if self.search_radius is not None and not self.search_radius > 0:
            raise ConfigError("--search-radius must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ConfigError("--t-max must be positive")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if not np.isfinite(self.eps):
            raise ConfigError("--eps must be finite")

    def load(self) -> problem.TimeDependentOperator:
        if self.problem_file is not None:
            import json

            op = problem.load_problem(self.problem_file)
            if not self.params:
                return op
            # re-read so that --param can supply values the file leaves unbound
            schema = json.loads(Path(self.problem_file).read_text())
            merged = dict(schema.get("params") or {})
            merged.update({k: [v.real, v.imag] for k, v in self.params.items()})
            return problem.from_schema({**schema, "params": merged})
        if self.builtin is None:
            raise ConfigError("no problem given; use --builtin NAME or --problem FILE")
        return problem.builtin(self.builtin, self.params)

    def require_t(self) -> float:
        if self.t is None:
            raise ConfigError(f"{self.subcommand} needs --t")
        return self.t


def _parse_param(text: str):
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise ConfigError(f"--param expects NAME=VALUE, got {text!r}")
    return name.strip(), parse_complex(value)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--builtin", metavar="NAME", help="catalog problem (see 'problems list')")
    src.add_argument("--problem", metavar="FILE", dest="problem_file", help="JSON problem file")
    common.add_argument("--param", action="append", default=[], metavar="K=V",
                        help="override a parameter, e.g. alpha=3.5 or beta=0+0.5i")
    common.add_argument("--t", type=float, help="final time")
    common.add_argument("--out", metavar="DIR", help="write output files into DIR")
    common.add_argument("--format", choices=("json", "csv"), default="json", dest="fmt")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for eps sampling")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="ODE tolerance")

    p = _Parser(prog="magnuslab", description="Magnus series convergence toolkit")
    sub = p.add_subparsers(dest="subcommand", parser_class=_Parser)

    s = sub.add_parser("propagate", parents=[common], help="fundamental matrix Y(t; eps)")
    s.add_argument("--eps", default="1", help="complex scale, e.g. 0.5 or 0+0.7i (default 1)")

    s = sub.add_parser("magnus", parents=[common], help="Magnus terms and reconstruction errors")
    s.add_argument("--K", type=int, default=20, help="number of Magnus terms (1..30)")
    s.add_argument("--eps", default="1", help="complex scale, e.g. 0.5 or 0+0.7i (default 1)")

    s = sub.add_parser("radius", parents=[common], help="full convergence report")
    s.add_argument("--K", type=int, default=20, help="number of Magnus terms (1..30)")
    s.add_argument("--search-radius", type=float, help="radius of the eps disk searched for roots")
    s.add_argument("--root-tol", type=float, default=convergence.ROOT_TOL,
                   help="Newton tolerance on the normalised discriminant")
    s.add_argument("--t-domain", action="store_true", help="also locate the Magnus t-domain")
    s.add_argument("--t-max", type=float, help="upper end of the t-domain search")

    sub.add_parser("certify", parents=[common], help="norm-certificate times")

    s = sub.add_parser("problems", help="catalog operations")
    s.add_argument("action", choices=("list",))
    s.add_argument("--format", choices=("json", "csv"), default="json", dest="fmt")

    s = sub.add_parser("xi", help="the norm constant xi")
    s.add_argument("--format", choices=("json", "csv"), default="json", dest="fmt")
    return p


def _config(ns) -> RunConfig:
    if ns.subcommand is None:
        raise _UsageError("magnuslab: a subcommand is required")
    cfg = RunConfig(ns.subcommand)
    for name in ("builtin", "problem_file", "t", "K", "tol", "root_tol", "search_radius",
                 "t_domain", "t_max", "jobs", "fmt"):
        if hasattr(ns, name):
            setattr(cfg, name, getattr(ns, name))
    if getattr(ns, "out", None):
        cfg.out = Path(ns.out)
    if hasattr(ns, "eps"):
        cfg.eps = parse_complex(ns.eps)
    cfg.params = dict(_parse_param(s) for s in getattr(ns, "param", []))
    cfg.validate()
    return cfg


def _emit(cfg: RunConfig, text: str, name: str, stdout):
    if cfg.out is None:
        stdout.write(text)
        return
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / name).write_text(text)


def _head(cfg, op, **extra):
    d = {"schema": report.SCHEMA_VERSION, "command": cfg.subcommand, "problem": op.name}
    d["params"] = {k: op.params[k] for k in sorted(op.params)}
    d.update(extra)
    return d


# ------------------------------------------------------------------ subcommands

def cmd_propagate(cfg: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    op = cfg.load()
    t = cfg.require_t()
    res = propagate(op, t, cfg.eps, cfg.tol)
    Y = res.Y
    # Liouville: det Y = exp(eps * int tr A)
    det_expected = np.exp(cfg.eps * problem.trace_integral(op, t))
    det = np.linalg.det(Y)
    det_residual = abs(det - det_expected) / max(abs(det_expected), 1e-300)
    # Gronwall: ||Y||, ||Y^-1|| <= exp(|eps| int ||A||)
    bound = math.exp(abs(cfg.eps) * problem.norm_integral(op, t))
    nY = linalg.spectral_norm(Y)
    nYi = linalg.spectral_norm(np.linalg.inv(Y))
    margin = bound - max(nY, nYi)
    if cfg.fmt == "csv":
        rows = [(i, j, Y[i, j].real, Y[i, j].imag) for i in range(op.n) for j in range(op.n)]
        _emit(cfg, report.csv_text(("i", "j", "re", "im"), rows), "propagate.csv", stdout)
        return EXIT_OK
    d = _head(cfg, op, t=t, eps=cfg.eps)
    d.update(Y=report.matrix_json(Y), est_error=res.est_error, steps=res.steps,
             det=det, det_residual=det_residual, norm_Y=nY, norm_Y_inv=nYi,
             gronwall_bound=bound, gronwall_margin=margin)
    _emit(cfg, report.dumps(d), "propagate.json", stdout)
    return EXIT_OK


def cmd_magnus(cfg: RunConfig, stdout=None, stderr=None) -> int:
    stdout, stderr = stdout or sys.stdout, stderr or sys.stderr
    op = cfg.load()
    t = cfg.require_t()
    series = magnus.magnus_terms(op, t, cfg.K)
    rec = magnus.reconstruct(op, t, cfg.K, cfg.eps, series, cfg.tol)
    emp = series.empirical_radius
    summary = f"empirical radius: {report.fmt_float(emp).strip(chr(34))}"
    if "terminates" in str(series.diagnostics.get("fit", "")):
        summary += " (series terminates)"
    terms_csv = report.csv_text(("k", "norm"), enumerate(series.term_norms, 1))
    rec_csv = report.csv_text(("M", "error"), enumerate(rec.errors_by_K, 1))
    if cfg.out is not None:
        _emit(cfg, terms_csv, "terms.csv", stdout)
        _emit(cfg, rec_csv, "reconstruction.csv", stdout)
        d = _head(cfg, op, t=t, eps=cfg.eps, K=cfg.K, empirical_radius=emp,
                  term_norms=series.term_norms, reconstruction_errors=rec.errors_by_K,
                  diagnostics=_plain(series.diagnostics))
        _emit(cfg, report.dumps(d), "magnus.json", stdout)
        stdout.write(summary + "\n")
    elif cfg.fmt == "csv":
        stdout.write(terms_csv)
        stderr.write(summary + "\n")
    else:
        d = _head(cfg, op, t=t, eps=cfg.eps, K=cfg.K, empirical_radius=emp,
                  term_norms=series.term_norms, reconstruction_errors=rec.errors_by_K,
                  diagnostics=_plain(series.diagnostics))
        stdout.write(report.dumps(d))
        stderr.write(summary + "\n")
    return EXIT_OK


def _plain(obj):
    """Make dataclass-free, JSON-friendly copies of diagnostics."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _root_json(r: convergence.DiscRoot) -> dict:
    return {
        "eps0": r.eps0, "abs": abs(r.eps0), "order": r.order, "residual": r.residual,
        "multiplicity_l": r.multiplicity_l, "rho0": r.rho0, "p": r.p, "q": r.q,
        "classification": r.classification,
        "clusters": _plain(list(r.clusters)), "note": r.note,
    }


def _norm_times_json(times: dict) -> list:
    return [{"constant": k, "r_c": convergence.NORM_CONSTANTS[k], "T": v} for k, v in times.items()]


def report_json(cfg: RunConfig, op, rep: convergence.ConvergenceReport) -> dict:
    rad = rep.spectral_radius
    d = _head(cfg, op, t=rep.t)
    d["norm_integral"] = problem.norm_integral(op, rep.t)
    d["norm_times"] = _norm_times_json(rep.norm_times)
    d["search_radius"] = rad.search_radius
    d["disc_roots"] = [_root_json(r) for r in rep.disc_roots]
    d["spectral_radius"] = {
        "value": rad.value, "kind": rad.kind,
        "root": None if rad.root is None else rad.root.eps0, "note": rad.note,
    }
    d["empirical_radius"] = rep.empirical_radius
    if rep.magnus_t_domain is not None:
        dom = rep.magnus_t_domain
        d["magnus_t_domain"] = {
            "value": dom.value, "flag": dom.flag, "note": dom.note,
            "evaluations": [{"t": e[0], "F": e[1], "kind": e[2]} for e in dom.evaluations],
        }
    d["identically_zero"] = rep.identically_zero
    d["notes"] = list(rep.notes)
    return d


def cmd_radius(cfg: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    op = cfg.load()
    t = cfg.require_t()
    rep = convergence.analyze(op, t, cfg.search_radius, cfg.t_domain, cfg.t_max, cfg.K,
                              cfg.root_tol, cfg.jobs)
    if cfg.fmt == "csv" and cfg.out is None:
        rows = [(r.eps0.real, r.eps0.imag, abs(r.eps0), r.multiplicity_l, r.p, r.q,
                 r.classification) for r in rep.disc_roots]
        stdout.write(report.csv_text(("re", "im", "abs", "l", "p", "q", "classification"), rows))
        return EXIT_OK
    _emit(cfg, report.dumps(report_json(cfg, op, rep)), "report.json", stdout)
    root = rep.spectral_radius.root
    if cfg.out is not None and root is not None:
        path = convergence.continue_eigenvalues(op, t, root.eps0, jobs=cfg.jobs)
        _emit(cfg, path.to_csv(), "eigenpath.csv", stdout)
    return EXIT_OK


def cmd_certify(cfg: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    op = cfg.load()
    times = convergence.norm_times(op)
    if cfg.fmt == "csv":
        rows = [(k, convergence.NORM_CONSTANTS[k], v) for k, v in times.items()]
        _emit(cfg, report.csv_text(("constant", "r_c", "T"), rows), "certify.csv", stdout)
        return EXIT_OK
    d = _head(cfg, op, norm_times=_norm_times_json(times))
    if cfg.t is not None:
        ni = problem.norm_integral(op, cfg.t)
        d["t"] = cfg.t
        d["norm_integral"] = ni
        d["certified"] = {k: ni < r for k, r in convergence.NORM_CONSTANTS.items()}
    _emit(cfg, report.dumps(d), "certify.json", stdout)
    return EXIT_OK


def cmd_problems(cfg: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    entries = [problem.CATALOG[k] for k in sorted(problem.CATALOG)]
    if cfg.fmt == "csv":
        rows = [(e.name, ";".join(f"{k}={report.fmt_float(v.real)}" for k, v in e.defaults.items()),
                 e.description) for e in entries]
        stdout.write(report.csv_text(("name", "defaults", "description"), rows))
        return EXIT_OK
    d = {"schema": report.SCHEMA_VERSION, "problems": [
        {"name": e.name, "description": e.description, "defaults": e.defaults,
         "schema": e.schema(), "notes": e.notes} for e in entries]}
    stdout.write(report.dumps(d))
    return EXIT_OK


def cmd_xi(cfg: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    xi = convergence.compute_xi()
    if cfg.fmt == "csv":
        stdout.write(report.csv_text(("name", "value"), [("xi", xi)]))
    else:
        stdout.write(report.dumps({"schema": report.SCHEMA_VERSION, "xi": xi}))
    return EXIT_OK


_COMMANDS = {
    "propagate": cmd_propagate, "magnus": cmd_magnus, "radius": cmd_radius,
    "certify": cmd_certify, "problems": cmd_problems, "xi": cmd_xi,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        cfg = _config(_build_parser().parse_args(argv))
        return _COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MagnusLabError as exc:  # pragma: no cover - every subclass is handled above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
