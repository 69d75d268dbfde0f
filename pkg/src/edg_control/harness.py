"""
Mesh-refinement studies: L2 errors, observed orders and reports.
"""

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import Discretization, assemble_blocks, error_exactness
from .basis import build_spaces
from .errors import InvalidArgument
from .mesh import build_structured
from .problems import Params, derive_data, get_problem
from .solve import check_commutativity, solve_do, solve_od

log = logging.getLogger(__name__)

REPORT_FIELDS = ("q", "p", "y", "z", "u")
FLUX_FIELDS = ("q", "p")
APPROACHES = ("od", "do", "both")
CSV_HEADER = ("level", "h_over_sqrt2", "field", "error", "order")


def _zero_beta(x):
    return np.zeros(np.shape(x))


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


class ErrorEvaluator:
    """
    L2 errors of discrete fields on one mesh, using the high-order rule.

    The quadrature data are built once and shared by all fields.
    """

    def __init__(self, mesh, spaces, params=None):
        if params is None:
            params = Params(beta=_zero_beta, div_beta=_zero)
        self.disc = Discretization(mesh, spaces, params, exactness=error_exactness(spaces.k))
        self._points = self.disc.xq.reshape(-1, 2)

    def __call__(self, coeffs, exact, kind=None):
        d = self.disc
        ex = np.asarray(exact(self._points), dtype=float)
        if kind is None:
            kind = "flux" if ex.ndim == 2 and ex.shape[-1] == 2 else "scalar"
        if kind == "flux":
            diff = d.flux_at_volume(coeffs) - ex.reshape(d.wq.shape + (2,))
            sq = np.sum(diff**2, axis=-1)
        elif kind == "scalar":
            diff = d.scalar_at_volume(coeffs) - ex.reshape(d.wq.shape)
            sq = diff**2
        else:
            raise InvalidArgument(f"kind must be 'flux' or 'scalar', got {kind!r}")
        return float(math.sqrt(np.sum(d.wq * sq)))


def l2_error(coeffs, exact, mesh, spaces, params=None, kind=None):
    """
    ``||exact - discrete||`` over the domain.

    Parameters
    ----------
    coeffs : array
        Flux or scalar coefficient vector.
    exact : callable
        Exact field; an output of shape (N, 2) marks a flux.
    kind : {"flux", "scalar"}, optional
        Overrides the inference from the exact field.
    """
    return ErrorEvaluator(mesh, spaces, params)(coeffs, exact, kind)


def observed_orders(levels, errors):
    """``log(e_i / e_{i+1}) / log(n_{i+1} / n_i)``; log2 of the ratio on dyadic levels."""
    out = []
    for (n0, e0), (n1, e1) in zip(zip(levels, errors), zip(levels[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(n1 / n0))
        else:
            out.append(float("nan"))
    return out


def format_error(x):
    return f"{x:.6e}"


def format_order(x):
    return "" if x is None else f"{x:.5f}"


@dataclass(frozen=True)
class StudyConfig:
    problem: str = "paper"
    k: int = 0
    approach: str = "od"
    levels: tuple = (8, 16, 32, 64)
    gamma: float = 1.0
    tau1: float = 1.0
    tau2: Optional[float] = None
    boundary_vertices: str = "constrained"

    def validate(self):
        if self.approach not in APPROACHES:
            raise InvalidArgument(f"approach must be one of {APPROACHES}, got {self.approach!r}")
        if int(self.k) != self.k or self.k < 0:
            raise InvalidArgument(f"k must be a nonnegative integer, got {self.k!r}")
        if not self.levels:
            raise InvalidArgument("at least one level is required")
        if any(int(n) != n or n < 1 for n in self.levels):
            raise InvalidArgument(f"levels must be positive integers, got {list(self.levels)}")
        if list(self.levels) != sorted(set(self.levels)):
            raise InvalidArgument(f"levels must be strictly increasing, got {list(self.levels)}")
        if not (self.gamma > 0 and self.tau1 > 0):
            raise InvalidArgument("gamma and tau1 must be positive")
        return self


@dataclass
class LevelResult:
    """Everything computed on one level; handed to the ``on_level`` hook."""

    n: int
    mesh: object
    spaces: object
    blocks: object
    solutions: dict
    errors: dict
    discrepancy: Optional[dict] = None
    optimality: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    levels: list
    errors: dict
    orders: dict
    config: dict
    discrepancy: list = field(default_factory=list)
    optimality: list = field(default_factory=list)

    def rows(self):
        """CSV rows as formatted strings."""
        out = []
        for i, n in enumerate(self.levels):
            for name in REPORT_FIELDS:
                order = self.orders[name][i - 1] if i > 0 else None
                out.append((str(n), repr(1.0 / n), name,
                            format_error(self.errors[name][i]), format_order(order)))
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(self.rows())
        return buf.getvalue()

    def to_dict(self):
        return {"levels": list(self.levels), "errors": self.errors, "orders": self.orders,
                "config": self.config, "discrepancy": self.discrepancy,
                "optimality": self.optimality}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self):
        """Human-readable table; every number is the string written to CSV."""
        rows = self.rows()
        lines = [f"problem={self.config['problem']} k={self.config['k']} "
                 f"approach={self.config['approach']} gamma={self.config['gamma']} "
                 f"tau1={self.config['tau1']}"]
        lines.append(f"{'level':>6} {'field':>5} {'error':>14} {'order':>9}")
        for n, _, name, err, order in rows:
            lines.append(f"{n:>6} {name:>5} {err:>14} {order:>9}")
        if self.discrepancy:
            lines.append("OD/DO relative discrepancy")
            for n, d in zip(self.levels, self.discrepancy):
                lines.append(f"{n:>6} max={max(d.values()):.3e}  "
                             + " ".join(f"{k}={v:.2e}" for k, v in d.items()))
        return "\n".join(lines)


def solve_level(config, n, spec=None, data=None):
    """Solve one level with the configured approach(es) and measure errors."""
    if spec is None:
        spec = get_problem(config.problem, gamma=config.gamma, tau1=config.tau1)
    if data is None:
        data = derive_data(spec)
    params = spec.params(config.tau2)
    mesh = build_structured(n)
    spaces = build_spaces(mesh, config.k, config.boundary_vertices)
    blocks = assemble_blocks(mesh, spaces, params, data)

    sols = {}
    if config.approach in ("od", "both"):
        sols["od"] = solve_od(mesh, spaces, params, data, blocks=blocks)
    if config.approach in ("do", "both"):
        sols["do"] = solve_do(mesh, spaces, params, data, blocks=blocks)
    main = sols["od"] if "od" in sols else sols["do"]

    ev = ErrorEvaluator(mesh, spaces, params)
    errors = {name: ev(getattr(main, name), data.exact(name),
                       "flux" if name in FLUX_FIELDS else "scalar")
              for name in REPORT_FIELDS}
    disc = check_commutativity(sols["od"], sols["do"]) if len(sols) == 2 else None
    optimality = {key: s.optimality_defect(config.gamma) for key, s in sols.items()}
    return LevelResult(n=n, mesh=mesh, spaces=spaces, blocks=blocks, solutions=sols,
                       errors=errors, discrepancy=disc, optimality=optimality)


def run_convergence(config, on_level: Optional[Callable] = None, workers=1):
    """
    Solve every level and collect errors and observed orders.

    ``on_level`` is called with each :class:`LevelResult` (in level order);
    ``workers > 1`` solves levels concurrently in threads.
    """
    config.validate()
    spec = get_problem(config.problem, gamma=config.gamma, tau1=config.tau1)
    data = derive_data(spec)
    levels = [int(n) for n in config.levels]

    def one(n):
        res = solve_level(config, n, spec, data)
        log.info("level n=%d done: %s", n,
                 " ".join(f"{k}={v:.3e}" for k, v in res.errors.items()))
        return res

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, levels))
    else:
        results = (one(n) for n in levels)

    errors = {name: [] for name in REPORT_FIELDS}
    discrepancy, optimality = [], []
    for res in results:
        if on_level is not None:
            on_level(res)
        for name in REPORT_FIELDS:
            errors[name].append(res.errors[name])
        if res.discrepancy is not None:
            discrepancy.append(res.discrepancy)
        optimality.append(res.optimality)
        res.blocks = None

    orders = {name: observed_orders(levels, errors[name]) for name in REPORT_FIELDS}
    return ConvergenceReport(levels=levels, errors=errors, orders=orders,
                             config=asdict(config) | {"levels": levels},
                             discrepancy=discrepancy, optimality=optimality)
