"""Scalar singularity indicator g for Newton paths.

For a residual map F with Jacobian J, the indicator at a point x is

    g = ||F|| / ||J^-1 F||            (J nonsingular, F != 0)
    g = 0                             (F not in the range of J)
    g = directional limit             (otherwise),

so g vanishes exactly where the Newton flow runs into a Jacobian
singularity that obstructs it.  The module also provides the analytic
directional derivative of g, an equivalent bordered-system evaluation,
and a grid scan producing the raw data for indicator heat maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import linalg
from .linalg import DEFAULT_RANK_TOL, SvdFactorization, vec_norm
from .problems import NonFiniteError, ProblemDefinition, evaluate, jacobian, \
    second_derivative_action

DEFAULT_RANGE_TOL = 1e-8
DEFAULT_ROOT_TOL = 1e-13
_LIMIT_EPS0 = 1e-3
_LIMIT_SAMPLES = 9
_LIMIT_RTOL = 1e-3


class CaseTag(str, Enum):
    REGULAR = "Regular"
    NOT_IN_RANGE = "NotInRange"
    DIRECTIONAL_LIMIT = "DirectionalLimit"


class RootEncountered(Exception):
    """||F(x)|| is below the root tolerance; g is undefined at roots."""

    def __init__(self, f_norm: float, tol: float):
        super().__init__(f"residual norm {f_norm:.3e} below root tolerance {tol:.3e}")
        self.f_norm = f_norm


class LimitUnstable(Exception):
    """Directional-limit extrapolation did not settle."""


class BorderedSingular(Exception):
    """The bordered matrix of the generalized-eigenvalue form is singular."""


@dataclass(frozen=True)
class IndicatorEval:
    """One evaluation of g, with the byproducts of the regular case."""

    g_value: float
    case_tag: CaseTag
    newton_step: Optional[np.ndarray]      # -J^-1 F when J is regular
    unit_direction_t: Optional[np.ndarray]  # J^-1 F / ||J^-1 F||
    residual_norm: float
    sigma_min_ratio: float


@dataclass(frozen=True)
class BorderedIndicator:
    """Indicator value plus the solution blocks of the bordered system."""

    g: float
    v: np.ndarray
    u: np.ndarray


def _sigma_ratio(fac: SvdFactorization) -> float:
    smax = float(fac.sigmas[0]) if fac.sigmas.size else 0.0
    if smax == 0.0:
        return 0.0
    return float(fac.sigmas[-1]) / smax


def _is_regular(fac: SvdFactorization, rank_tol: float) -> bool:
    smax = float(fac.sigmas[0]) if fac.sigmas.size else 0.0
    return smax > 0.0 and float(fac.sigmas[-1]) > rank_tol * smax


def range_membership(
    f_vec: np.ndarray, fac: SvdFactorization, rank_tol: float = DEFAULT_RANK_TOL,
    range_tol: float = DEFAULT_RANGE_TOL,
) -> bool:
    """Is f_vec in the numerical column range of the factored matrix?"""
    fn = vec_norm(f_vec)
    if fn == 0.0:
        return True
    basis = fac.range_basis(rank_tol)
    resid = f_vec - basis @ (basis.T @ f_vec)
    return vec_norm(resid) <= range_tol * fn


def _regular_eval(
    f_vec: np.ndarray, fn: float, fac: SvdFactorization
) -> IndicatorEval:
    jinv_f = linalg._apply_svd_inverse(fac, f_vec, fac.sigmas.size)
    jn = vec_norm(jinv_f)
    return IndicatorEval(
        g_value=fn / jn,
        case_tag=CaseTag.REGULAR,
        newton_step=-jinv_f,
        unit_direction_t=jinv_f / jn,
        residual_norm=fn,
        sigma_min_ratio=_sigma_ratio(fac),
    )


def _richardson_limit(samples: list[float], line_rtol: float) -> float:
    """Two-level Richardson extrapolation for step-halving samples.

    Raises LimitUnstable when the last successive level-2 extrapolants
    differ by more than line_rtol relatively.
    """
    n = len(samples)
    if n < 3:
        raise LimitUnstable("fewer than 3 usable samples for the limit")
    level1 = [2.0 * samples[i + 1] - samples[i] for i in range(n - 1)]
    level2 = [
        level1[i + 1] + (level1[i + 1] - level1[i]) / 3.0
        for i in range(len(level1) - 1)
    ]
    if len(level2) >= 2:
        a, b = level2[-2], level2[-1]
        scale = max(abs(a), abs(b), 1e-30)
        if abs(a - b) > line_rtol * scale:
            raise LimitUnstable(
                f"extrapolants {a:.6e} and {b:.6e} differ beyond tolerance"
            )
    return level2[-1]


def compute_g(
    problem: ProblemDefinition,
    x: np.ndarray,
    v: Optional[np.ndarray] = None,
    rank_tol: float = DEFAULT_RANK_TOL,
    range_tol: float = DEFAULT_RANGE_TOL,
    root_tol: float = DEFAULT_ROOT_TOL,
) -> IndicatorEval:
    """Evaluate the singularity indicator at x.

    v is the probing direction for the directional-limit case; it defaults
    to the all-ones direction and is ignored in the regular and
    not-in-range cases.  Raises RootEncountered when ||F(x)|| <= root_tol
    and LimitUnstable when the directional limit does not settle.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    f_vec = evaluate(problem, x)
    fn = vec_norm(f_vec)
    if fn <= root_tol:
        raise RootEncountered(fn, root_tol)
    jac_x = jacobian(problem, x)
    fac = linalg.svd(jac_x)
    if _is_regular(fac, rank_tol):
        return _regular_eval(f_vec, fn, fac)
    ratio = _sigma_ratio(fac)
    if not range_membership(f_vec, fac, rank_tol, range_tol):
        return IndicatorEval(
            g_value=0.0,
            case_tag=CaseTag.NOT_IN_RANGE,
            newton_step=None,
            unit_direction_t=None,
            residual_norm=fn,
            sigma_min_ratio=ratio,
        )

    # Directional limit along v: sample at geometrically shrinking offsets
    # and extrapolate to 0.
    if v is None:
        v = np.ones(problem.dimension)
    v = np.asarray(v, dtype=float).reshape(-1)
    vn = vec_norm(v)
    if vn == 0.0:
        raise ValueError("probing direction v must be nonzero")
    v_hat = v / vn
    samples: list[float] = []
    for k in range(_LIMIT_SAMPLES):
        eps = _LIMIT_EPS0 * 2.0**-k
        xk = x + eps * v_hat
        try:
            fk = evaluate(problem, xk)
        except NonFiniteError:
            samples.clear()
            continue
        fk_n = vec_norm(fk)
        fac_k = linalg.svd(jacobian(problem, xk))
        if fk_n == 0.0 or not _is_regular(fac_k, rank_tol):
            # unusable sample; restart the halving chain from the next k
            samples.clear()
            continue
        jinv_fk = linalg._apply_svd_inverse(fac_k, fk, fac_k.sigmas.size)
        samples.append(fk_n / vec_norm(jinv_fk))
    g_limit = max(_richardson_limit(samples, _LIMIT_RTOL), 0.0)
    return IndicatorEval(
        g_value=g_limit,
        case_tag=CaseTag.DIRECTIONAL_LIMIT,
        newton_step=None,
        unit_direction_t=None,
        residual_norm=fn,
        sigma_min_ratio=ratio,
    )


def directional_derivative_g(
    problem: ProblemDefinition,
    x: np.ndarray,
    v: np.ndarray,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> float:
    """Derivative of g at a regular point along the direction v.

    With R = F/||F||, T = J^-1 F / ||J^-1 F|| and H the second derivative,

        Dg(v) = ||J^-1 R||^-2 <T, J^-1 H(v, .) J^-1 R - J^-1 DR(v)>,
        DR(v) = (I - R R^T) J v / ||F||.

    Propagates SingularMatrix at rank-deficient points.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    f_vec = evaluate(problem, x)
    fn = vec_norm(f_vec)
    if fn == 0.0:
        raise ValueError("directional derivative of g undefined at a root")
    jac_x = jacobian(problem, x)
    fac = linalg.svd(jac_x)
    if not _is_regular(fac, rank_tol):
        smax = float(fac.sigmas[0]) if fac.sigmas.size else 0.0
        raise linalg.SingularMatrix(float(fac.sigmas[-1]), smax)
    n = fac.sigmas.size
    r_vec = f_vec / fn
    jinv_r = linalg._apply_svd_inverse(fac, r_vec, n)
    jinv_r_norm = vec_norm(jinv_r)
    t_vec = jinv_r / jinv_r_norm
    h_action = second_derivative_action(problem, x, v, jinv_r)
    jinv_h = linalg._apply_svd_inverse(fac, h_action, n)
    jv = jac_x @ v
    dr_v = (jv - r_vec * float(r_vec @ jv)) / fn
    jinv_dr = linalg._apply_svd_inverse(fac, dr_v, n)
    return float(t_vec @ (jinv_h - jinv_dr)) / jinv_r_norm**2


def griewank_reddien_g(
    a: np.ndarray,
    t_vec: np.ndarray,
    r_vec: np.ndarray,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> BorderedIndicator:
    """Indicator from the bordered system [[A, -R], [T^T, 0]].

    Solves A V = g R, T^T V = 1 for (V, g) and the adjoint system
    A^T u = g T, R^T u = 1 for u.  For nonsingular A this reproduces
    g = ||T||^2 / <T, A^-1 R>; for rank-deficient A with R spanning the
    cokernel it returns g = 0.  Raises BorderedSingular when the bordered
    matrix itself fails the rank test.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    t_vec = np.asarray(t_vec, dtype=float).reshape(-1)
    r_vec = np.asarray(r_vec, dtype=float).reshape(-1)
    n = a.shape[0]
    if a.shape != (n, n) or t_vec.size != n or r_vec.size != n:
        raise ValueError("bordered system needs square A and size-n T, R")
    bordered = np.zeros((n + 1, n + 1))
    bordered[:n, :n] = a
    bordered[:n, n] = -r_vec
    bordered[n, :n] = t_vec
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    try:
        sol = linalg.solve(bordered, rhs, rank_tol)
        adj = linalg.solve(bordered.T, rhs, rank_tol)
    except linalg.SingularMatrix as exc:
        raise BorderedSingular(str(exc)) from exc
    # transposed system: A^T u + T h = 0, -R^T u = 1 with h = -g
    return BorderedIndicator(g=float(sol[n]), v=sol[:n], u=-adj[:n])


@dataclass(frozen=True)
class FieldCell:
    """One grid cell of a field scan."""

    x: np.ndarray
    g_value: Optional[float]
    case_tag: str  # Regular | NotInRange | DirectionalLimit | Root | LimitUnstable | Error
    sigma_min_ratio: Optional[float]


@dataclass(frozen=True)
class FieldScanResult:
    """Row-major field-scan cells over a rectangular grid."""

    nx: int
    ny: int
    xs: np.ndarray
    ys: np.ndarray
    cells: list[FieldCell]


def field_scan(
    problem: ProblemDefinition,
    box: tuple[float, float, float, float],
    resolution: int | tuple[int, int],
    rank_tol: float = DEFAULT_RANK_TOL,
    root_tol: float = DEFAULT_ROOT_TOL,
) -> FieldScanResult:
    """Evaluate the indicator on a grid (2-D problems).

    Cells are emitted row-major with the first coordinate outermost.  The
    probing direction for directional limits is the Newton direction of
    the most recent regular cell.  Per-cell failures are recorded in the
    cell tag rather than aborting the scan.
    """
    if problem.dimension != 2:
        raise ValueError("field_scan requires a 2-D problem")
    if isinstance(resolution, int):
        nx = ny = resolution
    else:
        nx, ny = resolution
    x_min, x_max, y_min, y_max = box
    xs = np.linspace(x_min, x_max, nx)
    ys = np.linspace(y_min, y_max, ny)
    cells: list[FieldCell] = []
    last_dir = np.ones(2) / np.sqrt(2.0)
    for x1 in xs:
        for x2 in ys:
            point = np.array([x1, x2])
            try:
                ev = compute_g(problem, point, last_dir,
                               rank_tol=rank_tol, root_tol=root_tol)
            except RootEncountered:
                cells.append(FieldCell(point, None, "Root",
                                       _cell_ratio(problem, point)))
                continue
            except LimitUnstable:
                cells.append(FieldCell(point, None, "LimitUnstable",
                                       _cell_ratio(problem, point)))
                continue
            except NonFiniteError:
                cells.append(FieldCell(point, None, "Error", None))
                continue
            if ev.case_tag is CaseTag.REGULAR and ev.newton_step is not None:
                step_norm = vec_norm(ev.newton_step)
                if step_norm > 0.0:
                    last_dir = ev.newton_step / step_norm
            cells.append(FieldCell(point, ev.g_value, ev.case_tag.value,
                                   ev.sigma_min_ratio))
    return FieldScanResult(nx=nx, ny=ny, xs=xs, ys=ys, cells=cells)


def _cell_ratio(problem: ProblemDefinition, point: np.ndarray) -> Optional[float]:
    try:
        fac = linalg.svd(jacobian(problem, point))
    except (NonFiniteError, linalg.NonConvergence):
        return None
    return _sigma_ratio(fac)
