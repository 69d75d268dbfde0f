"""
Manufactured-solution problems.

A problem fixes the exact state ``y``, the exact dual state ``z`` (zero on
the boundary), the convection field and the parameters.  Data are derived
from the optimality system

    -lap y + beta . grad y = f + u,     y = g on the boundary,
    -lap z - div(beta z)   = y - y_d,   z = 0 on the boundary,
    z + gamma u            = 0.

All callables take points of shape (N, 2) and return (N,) or (N, 2).
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidProblem

Field = Callable[[np.ndarray], np.ndarray]

PI = np.pi


@dataclass(frozen=True)
class Params:
    """
    Discretization parameters.

    ``tau2=None`` selects ``tau2 = tau1 - beta.n`` (the choice that makes the
    two solution paths coincide); a number overrides it with a constant.
    """

    beta: Field
    div_beta: Field
    tau1: float = 1.0
    gamma: float = 1.0
    tau2: float | None = None


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    y: Field
    grad_y: Field
    lap_y: Field
    z: Field
    grad_z: Field
    lap_z: Field
    beta: Field
    div_beta: Field
    gamma: float = 1.0
    tau1: float = 1.0

    def params(self, tau2=None):
        return Params(beta=self.beta, div_beta=self.div_beta, tau1=self.tau1,
                      gamma=self.gamma, tau2=tau2)


@dataclass(frozen=True)
class ProblemData:
    """Derived data and exact fields of a problem."""

    spec: ProblemSpec
    f: Field
    g: Field
    y_d: Field
    y: Field
    z: Field
    u: Field
    q: Field
    p: Field

    def params(self, tau2=None):
        return self.spec.params(tau2)

    def exact(self, field):
        return getattr(self, field)


def _x(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1]


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


def _zero_vec(x):
    return np.zeros(np.shape(x))


def _swap_beta(x):
    x1, x2 = _x(x)
    return np.stack([x2, x1], axis=-1)


def _sin_z(x):
    x1, x2 = _x(x)
    return np.sin(PI * x1) * np.sin(PI * x2)


def _sin_z_grad(x):
    x1, x2 = _x(x)
    return PI * np.stack([np.cos(PI * x1) * np.sin(PI * x2),
                          np.sin(PI * x1) * np.cos(PI * x2)], axis=-1)


def _sin_z_lap(x):
    return -2 * PI**2 * _sin_z(x)


def paper_problem(gamma=1.0, tau1=1.0):
    """y = sin(pi x1), z = sin(pi x1) sin(pi x2), beta = (x2, x1)."""
    def y(x):
        return np.sin(PI * _x(x)[0])

    def grad_y(x):
        x1, x2 = _x(x)
        return np.stack([PI * np.cos(PI * x1), np.zeros_like(x2)], axis=-1)

    def lap_y(x):
        return -PI**2 * np.sin(PI * _x(x)[0])

    return ProblemSpec("paper", y, grad_y, lap_y, _sin_z, _sin_z_grad, _sin_z_lap,
                       _swap_beta, _zero, gamma, tau1)


def divergent_problem(gamma=1.0, tau1=1.0, strength=0.5):
    """
    y = exp(x1) cos(x2), z = sin(pi x1) sin(pi x2), beta = -strength (x1, x2).

    Here div(beta) = -2 strength < 0, which exercises the divergence terms.
    """
    def y(x):
        x1, x2 = _x(x)
        return np.exp(x1) * np.cos(x2)

    def grad_y(x):
        x1, x2 = _x(x)
        return np.stack([np.exp(x1) * np.cos(x2), -np.exp(x1) * np.sin(x2)], axis=-1)

    def beta(x):
        return -strength * np.asarray(x, dtype=float)

    def div_beta(x):
        return np.full(np.shape(x)[:-1], -2.0 * strength)

    return ProblemSpec("divergent", y, grad_y, _zero, _sin_z, _sin_z_grad, _sin_z_lap,
                       beta, div_beta, gamma, tau1)


def linear_problem(gamma=1.0, tau1=1.0):
    """y = 1 + 2 x1 - x2 with z = 0; reproduced exactly for every k >= 0."""
    def y(x):
        x1, x2 = _x(x)
        return 1 + 2 * x1 - x2

    def grad_y(x):
        return np.broadcast_to(np.array([2.0, -1.0]), np.shape(x)).copy()

    return ProblemSpec("linear", y, grad_y, _zero, _zero, _zero_vec, _zero,
                       _swap_beta, _zero, gamma, tau1)


def quadratic_problem(gamma=1.0, tau1=1.0):
    """y = x1^2 - x2^2 + x1 x2 + x1 with z = 0; reproduced exactly for k >= 1."""
    def y(x):
        x1, x2 = _x(x)
        return x1**2 - x2**2 + x1 * x2 + x1

    def grad_y(x):
        x1, x2 = _x(x)
        return np.stack([2 * x1 + x2 + 1, -2 * x2 + x1], axis=-1)

    return ProblemSpec("quadratic", y, grad_y, _zero, _zero, _zero_vec, _zero,
                       _swap_beta, _zero, gamma, tau1)


def zero_problem(gamma=1.0, tau1=1.0):
    return ProblemSpec("zero", _zero, _zero_vec, _zero, _zero, _zero_vec, _zero,
                       _swap_beta, _zero, gamma, tau1)


PROBLEMS = {
    "paper": paper_problem,
    "divergent": divergent_problem,
    "linear": linear_problem,
    "quadratic": quadratic_problem,
    "zero": zero_problem,
}


def get_problem(name, gamma=1.0, tau1=1.0):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise InvalidProblem(
            f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(gamma=gamma, tau1=tau1)


def _validate(spec, n_samples=41):
    if not spec.gamma > 0:
        raise InvalidProblem(f"gamma must be positive, got {spec.gamma}")
    if not spec.tau1 > 0:
        raise InvalidProblem(f"tau1 must be positive, got {spec.tau1}")
    s = np.linspace(0, 1, n_samples)
    X, Y = np.meshgrid(s, s)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if np.max(spec.div_beta(pts)) > 1e-14:
        raise InvalidProblem(f"{spec.name}: div(beta) must be <= 0")
    zero, one = np.zeros_like(s), np.ones_like(s)
    edges = np.concatenate([np.column_stack([s, zero]), np.column_stack([s, one]),
                            np.column_stack([zero, s]), np.column_stack([one, s])])
    if np.max(np.abs(spec.z(edges))) > 1e-14:
        raise InvalidProblem(f"{spec.name}: exact dual state must vanish on the boundary")


def derive_data(spec):
    """Generate f, g, y_d and the exact u, q, p for a problem."""
    _validate(spec)
    gamma = spec.gamma

    def u(x):
        return -spec.z(x) / gamma

    def f(x):
        conv = np.sum(spec.beta(x) * spec.grad_y(x), axis=-1)
        return -spec.lap_y(x) + conv - u(x)

    def y_d(x):
        div_bz = (np.sum(spec.beta(x) * spec.grad_z(x), axis=-1)
                  + spec.div_beta(x) * spec.z(x))
        return spec.y(x) + spec.lap_z(x) + div_bz

    def q(x):
        return -spec.grad_y(x)

    def p(x):
        return -spec.grad_z(x)

    return ProblemData(spec=spec, f=f, g=spec.y, y_d=y_d, y=spec.y, z=spec.z,
                       u=u, q=q, p=p)
