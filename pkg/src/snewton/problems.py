"""Problem definitions: residual maps with first and second derivatives.

A ProblemDefinition wraps F: R^d -> R^d together with optional analytic
derivative callables and finite-difference fallbacks.  The builtin
registry carries the small corpus of test problems used throughout the
package (well-posed, singular-line, and range-degenerate cases).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .linalg import vec_norm

Array = np.ndarray


class NonFiniteError(Exception):
    """An evaluation produced NaN or infinity."""


@dataclass(frozen=True)
class ProblemDefinition:
    """A residual map with derivative information.

    f evaluates F(x); jac (optional) evaluates the Jacobian DF(x); d2f
    (optional) evaluates the bilinear action D2F(x)(u, w).  When analytic
    callables are missing, jacobian_mode / d2f_mode select the
    finite-difference fallbacks with the given relative steps.
    """

    name: str
    dimension: int
    f: Callable[[Array], Array]
    jac: Optional[Callable[[Array], Array]] = None
    d2f: Optional[Callable[[Array, Array, Array], Array]] = None
    jacobian_mode: str = "central_fd"  # analytic | forward_fd | central_fd
    d2f_mode: str = "fd_of_jacobian"   # analytic | fd_of_jacobian
    fd_step_jacobian: float = 1e-6
    fd_step_hessian: float = 1e-4
    domain_lo: Optional[Array] = None
    domain_hi: Optional[Array] = None

    def __post_init__(self):
        if self.jacobian_mode not in ("analytic", "forward_fd", "central_fd"):
            raise ValueError(f"unknown jacobian_mode {self.jacobian_mode!r}")
        if self.d2f_mode not in ("analytic", "fd_of_jacobian"):
            raise ValueError(f"unknown d2f_mode {self.d2f_mode!r}")
        if self.jacobian_mode == "analytic" and self.jac is None:
            raise ValueError("jacobian_mode='analytic' requires jac")
        if self.d2f_mode == "analytic" and self.d2f is None:
            raise ValueError("d2f_mode='analytic' requires d2f")


def _check_finite(arr: Array, what: str, name: str) -> Array:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} of {name!r} is not finite")
    return arr


def evaluate(problem: ProblemDefinition, x: Array) -> Array:
    """F(x) as a 1-D float array; raises NonFiniteError on NaN/inf."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != problem.dimension:
        raise ValueError(
            f"point has size {x.size}, problem dimension is {problem.dimension}"
        )
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = np.asarray(problem.f(x), dtype=float).reshape(-1)
    if out.size != problem.dimension:
        raise ValueError("residual dimension mismatch")
    return _check_finite(out, "residual", problem.name)


def jacobian(problem: ProblemDefinition, x: Array) -> Array:
    """DF(x); analytic when provided, else finite differences.

    Central differences use step fd_step_jacobian * max(1, |x_i|) per
    coordinate; forward differences use the same step with one-sided
    stencils.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = problem.dimension
    if problem.jacobian_mode == "analytic":
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            j = np.asarray(problem.jac(x), dtype=float).reshape(d, d)
        return _check_finite(j, "jacobian", problem.name)
    j = np.empty((d, d))
    for i in range(d):
        h = problem.fd_step_jacobian * max(1.0, abs(x[i]))
        e = np.zeros(d)
        e[i] = h
        if problem.jacobian_mode == "central_fd":
            j[:, i] = (evaluate(problem, x + e) - evaluate(problem, x - e)) / (2.0 * h)
        else:
            j[:, i] = (evaluate(problem, x + e) - evaluate(problem, x)) / h
    return _check_finite(j, "jacobian", problem.name)


def second_derivative_action(
    problem: ProblemDefinition, x: Array, u: Array, w: Array
) -> Array:
    """Bilinear action D2F(x)(u, w) as a vector.

    The fallback differentiates the Jacobian along u with step
    h = fd_step_hessian * max(1, ||x||) / max(1, ||u||):
    (J(x + h u) w - J(x - h u) w) / (2 h).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if problem.d2f_mode == "analytic":
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = np.asarray(problem.d2f(x, u, w), dtype=float).reshape(-1)
        return _check_finite(out, "second derivative", problem.name)
    un = vec_norm(u)
    if un == 0.0:
        return np.zeros(problem.dimension)
    h = problem.fd_step_hessian * max(1.0, vec_norm(x)) / max(1.0, un)
    jp = jacobian(problem, x + h * u)
    jm = jacobian(problem, x - h * u)
    return _check_finite((jp @ w - jm @ w) / (2.0 * h), "second derivative",
                         problem.name)


def self_check_derivatives(
    problem: ProblemDefinition,
    rng: np.random.Generator,
    n_points: int = 10,
    scale: float = 1.0,
    rtol: float = 1e-4,
) -> None:
    """Compare analytic derivatives against central differences.

    Raises AssertionError on disagreement; used by the test-suite and by
    downstream sanity tooling for freshly constructed problems.
    """
    d = problem.dimension
    fd = replace(problem, jacobian_mode="central_fd", d2f_mode="fd_of_jacobian")
    # Check one derivative order at a time: the hessian reference differences
    # the problem's own Jacobian (analytic when available).  Differencing an
    # already-differenced Jacobian amplifies rounding when the residual
    # carries a large constant offset.
    fd2 = replace(problem, d2f_mode="fd_of_jacobian")
    for _ in range(n_points):
        x = rng.uniform(-scale, scale, size=d)
        j_ref = jacobian(fd, x)
        j = jacobian(problem, x)
        denom = max(1.0, float(np.max(np.abs(j_ref))))
        assert np.max(np.abs(j - j_ref)) <= rtol * denom, (
            f"jacobian self-check failed for {problem.name} at {x}"
        )
        u = rng.standard_normal(d)
        w = rng.standard_normal(d)
        h_ref = second_derivative_action(fd2, x, u, w)
        h = second_derivative_action(problem, x, u, w)
        denom = max(1.0, float(np.max(np.abs(h_ref))))
        assert np.max(np.abs(h - h_ref)) <= rtol * denom, (
            f"second-derivative self-check failed for {problem.name} at {x}"
        )


# ---------------------------------------------------------------------------
# builtin corpus
# ---------------------------------------------------------------------------


def _identity() -> ProblemDefinition:
    return ProblemDefinition(
        name="identity",
        dimension=2,
        f=lambda x: x.copy(),
        jac=lambda x: np.eye(2),
        d2f=lambda x, u, w: np.zeros(2),
        jacobian_mode="analytic",
        d2f_mode="analytic",
    )


def scalar_quadratic(c: float = 1.0, name: str = "scalar_quadratic") -> ProblemDefinition:
    """F(x) = x^2 + c in one dimension (no real root for c > 0)."""
    return ProblemDefinition(
        name=name,
        dimension=1,
        f=lambda x: np.array([x[0] ** 2 + c]),
        jac=lambda x: np.array([[2.0 * x[0]]]),
        d2f=lambda x, u, w: np.array([2.0 * u[0] * w[0]]),
        jacobian_mode="analytic",
        d2f_mode="analytic",
    )


def _diag_quadratic() -> ProblemDefinition:
    return ProblemDefinition(
        name="diag_quadratic",
        dimension=2,
        f=lambda x: np.array([x[0] ** 2, x[1] ** 2]),
        jac=lambda x: np.diag([2.0 * x[0], 2.0 * x[1]]),
        d2f=lambda x, u, w: np.array([2.0 * u[0] * w[0], 2.0 * u[1] * w[1]]),
        jacobian_mode="analytic",
        d2f_mode="analytic",
    )


def _expsin() -> ProblemDefinition:
    def f(x):
        s = x[0] ** 2 + x[1] ** 2
        t = x[0] + x[1]
        return np.array([np.exp(s) - 3.0, t - np.sin(3.0 * t)])

    def jac(x):
        es = np.exp(x[0] ** 2 + x[1] ** 2)
        c = 1.0 - 3.0 * np.cos(3.0 * (x[0] + x[1]))
        return np.array([[2.0 * x[0] * es, 2.0 * x[1] * es], [c, c]])

    def d2f(x, u, w):
        es = np.exp(x[0] ** 2 + x[1] ** 2)
        quad = 2.0 * (u @ w) + 4.0 * (x @ u) * (x @ w)
        s2 = 9.0 * np.sin(3.0 * (x[0] + x[1]))
        return np.array([es * quad, s2 * (u[0] + u[1]) * (w[0] + w[1])])

    return ProblemDefinition(
        name="expsin",
        dimension=2,
        f=f,
        jac=jac,
        d2f=d2f,
        jacobian_mode="analytic",
        d2f_mode="analytic",
        domain_lo=np.array([-3.0, -3.0]),
        domain_hi=np.array([3.0, 3.0]),
    )


_CROSS_A1 = np.array([[5.0, 10.0], [2.0, 4.0]])
_CROSS_A2 = np.array([[4.0, 2.0], [6.0, 3.0]])
_CROSS_B = 1.0e6 * np.array([1.1, 1.0])
_COIN_D = np.array([[1.0, 7.0], [8.0, 3.0]])


def _crossing_singular() -> ProblemDefinition:
    def mat(x):
        return x[0] * _CROSS_A1 + x[1] * _CROSS_A2

    def f(x):
        return -(mat(x) @ x) - _CROSS_B

    def jac(x):
        cols = np.column_stack([_CROSS_A1 @ x, _CROSS_A2 @ x])
        return -(mat(x) + cols)

    def d2f(x, u, w):
        return -(mat(u) @ w + mat(w) @ u)

    return ProblemDefinition(
        name="crossing_singular",
        dimension=2,
        f=f,
        jac=jac,
        d2f=d2f,
        jacobian_mode="analytic",
        d2f_mode="analytic",
    )


def _coinciding_singular() -> ProblemDefinition:
    def f(x):
        return -(x[0] * (_COIN_D @ x)) - _CROSS_B

    def jac(x):
        j = x[0] * _COIN_D.copy()
        j[:, 0] += _COIN_D @ x
        return -j

    def d2f(x, u, w):
        return -(u[0] * (_COIN_D @ w) + w[0] * (_COIN_D @ u))

    return ProblemDefinition(
        name="coinciding_singular",
        dimension=2,
        f=f,
        jac=jac,
        d2f=d2f,
        jacobian_mode="analytic",
        d2f_mode="analytic",
    )


def _not_in_range_demo() -> ProblemDefinition:
    return ProblemDefinition(
        name="not_in_range_demo",
        dimension=2,
        f=lambda x: np.array([x[0] ** 2, x[1]]),
        jac=lambda x: np.array([[2.0 * x[0], 0.0], [0.0, 1.0]]),
        d2f=lambda x, u, w: np.array([2.0 * u[0] * w[0], 0.0]),
        jacobian_mode="analytic",
        d2f_mode="analytic",
    )


def builtin_registry() -> dict[str, ProblemDefinition]:
    """The named builtin problems, keyed by name."""
    problems = [
        _identity(),
        scalar_quadratic(1.0),
        _diag_quadratic(),
        _expsin(),
        _crossing_singular(),
        _coinciding_singular(),
        _not_in_range_demo(),
    ]
    return {p.name: p for p in problems}


def get_problem(name: str) -> ProblemDefinition:
    registry = builtin_registry()
    if name not in registry:
        known = ", ".join(sorted(registry))
        raise KeyError(f"unknown problem {name!r}; known problems: {known}")
    return registry[name]


def linear_compose(m: Array, problem: ProblemDefinition) -> ProblemDefinition:
    """The problem M @ F with derivatives composed accordingly.

    Newton trajectories are invariant under such left compositions with
    invertible M, which makes this the natural fixture for affine
    covariance checks.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape != (problem.dimension, problem.dimension):
        raise ValueError("composition matrix has the wrong shape")
    base_f, base_jac, base_d2f = problem.f, problem.jac, problem.d2f
    return replace(
        problem,
        name=f"{problem.name}@linear",
        f=lambda x: m @ base_f(x),
        jac=(lambda x: m @ base_jac(x)) if base_jac is not None else None,
        d2f=(lambda x, u, w: m @ base_d2f(x, u, w)) if base_d2f is not None else None,
    )


# ---------------------------------------------------------------------------
# singular-set geometry for the expsin problem
# ---------------------------------------------------------------------------

# det DF = 2 exp(x^2+y^2) (1 - 3 cos(3(x+y))) (x - y) vanishes on y = x and
# on the lines x + y = +-(1/3) arccos(1/3) + (2/3) pi k.
_EXPSIN_SUM_OFFSET = math.acos(1.0 / 3.0) / 3.0
_EXPSIN_SUM_PERIOD = 2.0 * math.pi / 3.0


def expsin_singular_sums(lo: float = -10.0, hi: float = 10.0) -> np.ndarray:
    """Values s with 1 - 3 cos(3 s) = 0 inside [lo, hi], sorted."""
    sums = []
    k_min = int(math.floor((lo - _EXPSIN_SUM_OFFSET) / _EXPSIN_SUM_PERIOD)) - 1
    k_max = int(math.ceil((hi + _EXPSIN_SUM_OFFSET) / _EXPSIN_SUM_PERIOD)) + 1
    for k in range(k_min, k_max + 1):
        for sign in (+1.0, -1.0):
            s = sign * _EXPSIN_SUM_OFFSET + _EXPSIN_SUM_PERIOD * k
            if lo <= s <= hi:
                sums.append(s)
    return np.array(sorted(sums))


def singular_line_distance(problem_name: str, x: Array) -> Optional[float]:
    """Euclidean distance to the known singular-line set, when one exists.

    Implemented for the expsin problem (diagonal plus anti-diagonal line
    family); returns None for problems without a derived line set.
    """
    if problem_name != "expsin":
        return None
    x = np.asarray(x, dtype=float).reshape(-1)
    s = x[0] + x[1]
    d_diag = abs(x[0] - x[1]) / math.sqrt(2.0)
    sums = expsin_singular_sums(s - 2.0 * _EXPSIN_SUM_PERIOD,
                                s + 2.0 * _EXPSIN_SUM_PERIOD)
    d_anti = float(np.min(np.abs(sums - s))) / math.sqrt(2.0)
    return min(d_diag, d_anti)


def expsin_nearest_line_id(x: Array) -> tuple[str, float]:
    """Identify the nearest singular line of expsin: ('diag', 0.0) for
    y = x, or ('sum', s) for x + y = s."""
    x = np.asarray(x, dtype=float).reshape(-1)
    s = x[0] + x[1]
    d_diag = abs(x[0] - x[1]) / math.sqrt(2.0)
    sums = expsin_singular_sums(s - 2.0 * _EXPSIN_SUM_PERIOD,
                                s + 2.0 * _EXPSIN_SUM_PERIOD)
    idx = int(np.argmin(np.abs(sums - s)))
    d_anti = float(abs(sums[idx] - s)) / math.sqrt(2.0)
    if d_diag <= d_anti:
        return ("diag", 0.0)
    return ("sum", float(sums[idx]))
