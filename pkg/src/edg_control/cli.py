"""
Command-line interface for convergence studies.

Example::

    edg-control --k 1 --approach both --levels 8,16,32 --output rates.csv
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields
from typing import Optional

from .assembly import dump_matrix
from .condensation import condense
from .errors import (CondensationError, EDGError, FactorizationError, InvalidArgument,
                     InvalidComparison, InvalidProblem, StabilizationError,
                     UnsupportedDegree)
from .harness import APPROACHES, StudyConfig, run_convergence
from .problems import PROBLEMS
from .solve import od_system, reduced_qp

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_STABILIZATION = 4
EXIT_FACTORIZATION = 5
EXIT_CONDENSATION = 6
EXIT_PROBLEM = 7
EXIT_COMPARISON = 8
EXIT_DEGREE = 9

EXIT_HELP = f"""exit status:
  {EXIT_OK}  success
  {EXIT_INTERNAL}  unexpected internal error
  {EXIT_USAGE}  usage error (bad flag, config key or value)
  {EXIT_IO}  cannot read the config file or write an output/dump file
  {EXIT_STABILIZATION}  stabilization condition violated on some face
  {EXIT_FACTORIZATION}  sparse factorization failed or residual too large
  {EXIT_CONDENSATION}  singular element block during condensation
  {EXIT_PROBLEM}  invalid problem definition
  {EXIT_COMPARISON}  OD/DO solutions cannot be compared
  {EXIT_DEGREE}  polynomial degree beyond the supported quadrature
"""

_ERROR_STATUS = (
    (StabilizationError, EXIT_STABILIZATION),
    (FactorizationError, EXIT_FACTORIZATION),
    (CondensationError, EXIT_CONDENSATION),
    (InvalidProblem, EXIT_PROBLEM),
    (InvalidComparison, EXIT_COMPARISON),
    (UnsupportedDegree, EXIT_DEGREE),
    (InvalidArgument, EXIT_USAGE),
)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem: str = "paper"
    k: int = 0
    approach: str = "od"
    levels: tuple = (8, 16, 32, 64)
    gamma: float = 1.0
    tau1: float = 1.0
    tau2_override: Optional[float] = None
    output: Optional[str] = None
    format: str = "csv"
    dump_matrices: Optional[str] = None
    dump_mesh: Optional[str] = None
    boundary_vertices: str = "constrained"

    def study(self):
        return StudyConfig(problem=self.problem, k=self.k, approach=self.approach,
                           levels=self.levels, gamma=self.gamma, tau1=self.tau1,
                           tau2=self.tau2_override, boundary_vertices=self.boundary_vertices)


def _levels(text):
    try:
        out = tuple(int(s) for s in str(text).split(",") if s.strip())
    except ValueError:
        raise UsageError(f"levels must be a comma-separated list of integers, got {text!r}")
    return out


def _positive(name):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise UsageError(f"{name} must be a number, got {text!r}")
        if not v > 0:
            raise UsageError(f"{name} must be positive, got {v}")
        return v
    return conv


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"expected a number, got {text!r}")


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise UsageError(f"k must be an integer, got {text!r}")
    if v < 0:
        raise UsageError(f"k must be nonnegative, got {v}")
    return v


def _choice(options, name):
    def conv(text):
        if text not in options:
            raise UsageError(f"{name} must be one of {', '.join(options)}; got {text!r}")
        return text
    return conv


CONVERTERS = {
    "problem": _choice(tuple(PROBLEMS), "problem"),
    "k": _nonneg_int,
    "approach": _choice(APPROACHES, "approach"),
    "levels": _levels,
    "gamma": _positive("gamma"),
    "tau1": _positive("tau1"),
    "tau2_override": _float,
    "output": str,
    "format": _choice(("csv", "json"), "format"),
    "dump_matrices": str,
    "dump_mesh": str,
    "boundary_vertices": _choice(("constrained", "free"), "boundary-vertices"),
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes equal underscores."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = CONVERTERS[key](value)
    return values


def build_parser():
    p = argparse.ArgumentParser(
        prog="edg-control",
        description="Convergence studies for the EDG discretization of optimal control "
                    "of convection-diffusion.",
        epilog=EXIT_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        argument_default=argparse.SUPPRESS,
    )
    p.add_argument("--config", help="file of key=value lines; flags override it")
    p.add_argument("--problem", help=f"built-in problem ({', '.join(PROBLEMS)}; default paper)")
    p.add_argument("--k", help="flux degree; scalars and traces use k+1 (default 0)")
    p.add_argument("--approach", help="od, do or both (default od)")
    p.add_argument("--levels", help="comma list of n, mesh size h = sqrt(2)/n "
                                    "(default 8,16,32,64)")
    p.add_argument("--gamma", help="control cost weight (default 1)")
    p.add_argument("--tau1", help="state stabilization (default 1)")
    p.add_argument("--tau2-override", dest="tau2_override",
                   help="constant tau2 instead of tau1 - beta.n")
    p.add_argument("--boundary-vertices", dest="boundary_vertices",
                   help="constrained (default) or free interior-face traces at "
                        "boundary vertices")
    p.add_argument("--output", help="report file (default: standard output)")
    p.add_argument("--format", help="csv (default) or json")
    p.add_argument("--dump-matrices", dest="dump_matrices", metavar="DIR",
                   help="write system matrices per level in coordinate format")
    p.add_argument("--dump-mesh", dest="dump_mesh", metavar="DIR",
                   help="write the mesh per level")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def parse_config(argv=None):
    """
    Build a :class:`RunConfig` from flags and an optional config file.

    Returns the config and the verbosity level.  Raises ``UsageError`` on
    bad input and ``OSError`` if the config file cannot be read.
    """
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    verbose = ns.pop("verbose", 0)
    values = {}
    if "config" in ns:
        values.update(read_config_file(ns.pop("config")))
    for key, text in ns.items():
        values[key] = CONVERTERS[key](text)
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in values.items() if k in known})
    if not cfg.levels:
        raise UsageError("at least one level is required")
    if any(n < 1 for n in cfg.levels):
        raise UsageError(f"levels must be >= 1, got {list(cfg.levels)}")
    if list(cfg.levels) != sorted(set(cfg.levels)):
        raise UsageError(f"levels must be strictly increasing, got {list(cfg.levels)}")
    return cfg, verbose


def _dumper(cfg):
    def hook(res):
        n = res.n
        if cfg.dump_mesh:
            res.mesh.dump(os.path.join(cfg.dump_mesh, f"mesh_n{n}.txt"))
        if cfg.dump_matrices:
            if "od" in res.solutions:
                A, _ = od_system(res.blocks)
                dump_matrix(A, os.path.join(cfg.dump_matrices, f"od_n{n}_k{cfg.k}.txt"))
            if "do" in res.solutions:
                A, _ = reduced_qp(res.blocks, condense(res.blocks)).kkt()
                dump_matrix(A, os.path.join(cfg.dump_matrices, f"kkt_n{n}_k{cfg.k}.txt"))
    return hook


def _check_dirs(cfg):
    for d in (cfg.dump_matrices, cfg.dump_mesh):
        if d and not os.path.isdir(d):
            raise OSError(f"dump directory {d} does not exist")
    if cfg.output:
        parent = os.path.dirname(os.path.abspath(cfg.output))
        if not os.path.isdir(parent):
            raise OSError(f"output directory {parent} does not exist")


def main(cfg, out=None):
    """Run the study described by ``cfg``; returns the exit status."""
    out = sys.stdout if out is None else out
    try:
        _check_dirs(cfg)
        hook = _dumper(cfg) if (cfg.dump_matrices or cfg.dump_mesh) else None
        report = run_convergence(cfg.study(), on_level=hook)
        text = report.to_csv() if cfg.format == "csv" else report.to_json() + "\n"
        print(report.table(), file=out)
        if cfg.output:
            with open(cfg.output, "w") as fh:
                fh.write(text)
        else:
            out.write(text)
    except OSError as exc:
        print(f"edg-control: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EDGError as exc:
        for cls, status in _ERROR_STATUS:
            if isinstance(exc, cls):
                print(f"edg-control: {exc}", file=sys.stderr)
                return status
        print(f"edg-control: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def run(argv=None):
    """Console entry point."""
    try:
        cfg, verbose = parse_config(argv)
    except UsageError as exc:
        print(f"edg-control: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except OSError as exc:
        print(f"edg-control: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return main(cfg)


if __name__ == "__main__":
    sys.exit(run())
