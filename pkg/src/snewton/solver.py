"""Damped Newton iteration with singularity detection.

The driver runs x <- x + lambda * dx with dx = -J^-1 F and lambda chosen
by the configured rule, evaluates the singularity indicator g at every
iterate, and classifies terminations: convergence to a root, convergence
to a Jacobian singularity (g -> 0), stalling, breakdown, or iteration
exhaustion.  Each iterate is recorded for reporting and diagnostics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import linalg
from . import stepsize as _stepsize
from .indicator import (
    CaseTag,
    DEFAULT_RANGE_TOL,
    LimitUnstable,
    RootEncountered,
    compute_g,
    range_membership,
    _sigma_ratio,
)
from .linalg import DEFAULT_RANK_TOL, vec_norm
from .problems import (
    NonFiniteError,
    ProblemDefinition,
    evaluate,
    jacobian,
    second_derivative_action,
    singular_line_distance,
)
from .smooth_svd import ClusteredSingularValues, init_smallest_triple
from .stepsize import (
    AsErrorDiagnostics,
    RuleTag,
    _decision_approx,
    _decision_exact,
    _decision_hybrid,
    as_error_diagnostics,
)

# The solver keeps taking damped steps well past the point where the
# standalone indicator would declare the Jacobian rank deficient: the
# stepsize rules shrink lambda in proportion, and the extra iterations
# land the final iterate on the singular manifold to near machine
# precision instead of to the (much looser) generic rank tolerance.
_STEP_RANK_TOL = 1e-13

# A numerically tiny sigma ratio alone does not prove a singular-manifold
# landing: extreme row scaling (e.g. an exponential residual component
# evaluated far out) produces the same ratio at perfectly regular points.
# Landings are distinguished by the indicator having already collapsed.
_LANDING_G_MAX = 1e-6


class Rule(str, Enum):
    FULL_STEP = "full_step"
    ES = "ES"
    AS = "AS"
    HYBRID = "Hybrid"


class Status(str, Enum):
    CONVERGED_ROOT = "ConvergedRoot"
    CONVERGED_SINGULAR = "ConvergedSingular"
    MAX_ITER = "MaxIter"
    STALLED = "Stalled"
    LIMIT_UNSTABLE = "LimitUnstable"
    BREAKDOWN = "Breakdown"


@dataclass(frozen=True)
class SolverConfig:
    """Solver tolerances and the damping rule.

    tol_root is relative to 1 + ||F(x0)||.  Singularity classification
    needs g <= tol_singular_g or sigma ratio <= tol_sigma_ratio on two
    consecutive iterates (one suffices when the Jacobian is outright rank
    deficient and F leaves its range, which pins g = 0).  Stalling means
    lambda < lambda_min on three consecutive iterations.
    """

    rule: Rule = Rule.HYBRID
    tol_root: float = 1e-12
    tol_singular_g: float = 1e-10
    tol_sigma_ratio: float = 1e-12
    lambda_min: float = 1e-12
    max_iter: int = 200
    agreement_factor: float = 2.0
    record_diagnostics: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))
        for name in ("tol_root", "tol_singular_g", "tol_sigma_ratio"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.lambda_min < 1.0:
            raise ValueError("lambda_min must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.agreement_factor < 1.0:
            raise ValueError("agreement_factor must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    """Per-iterate data: location, residual, indicator, damping."""

    k: int
    x: np.ndarray
    f_norm: float
    g_value: Optional[float]
    g_case: str
    sigma_min_ratio: Optional[float]
    lam: Optional[float]
    rule_tag: Optional[str]
    es_inner: Optional[float]
    as_norm: Optional[float]
    diagnostics: Optional[AsErrorDiagnostics] = None


@dataclass(frozen=True)
class TerminationReport:
    """Outcome of a solve: status, final point, and the iterate trail."""

    status: Status
    final_x: np.ndarray
    records: list[IterationRecord]
    quadratic_tail_ratio: Optional[float]

    @property
    def iterations(self) -> int:
        return self.records[-1].k if self.records else 0

    @property
    def final_f_norm(self) -> Optional[float]:
        return self.records[-1].f_norm if self.records else None


def quadratic_tail_check(records: list[IterationRecord]) -> Optional[float]:
    """max g_{k+1} / g_k^2 over the final three regular-case transitions.

    Requires at least four regular records with decreasing g values;
    returns None when that precondition is unmet.  Values of order one
    certify a quadratically converging indicator tail.
    """
    gs = [
        r.g_value
        for r in records
        if r.g_case == CaseTag.REGULAR.value and r.g_value is not None
    ]
    if len(gs) < 4:
        return None
    tail = gs[-4:]
    if any(tail[i + 1] >= tail[i] for i in range(3)) or any(g <= 0.0 for g in tail):
        return None
    return max(tail[i + 1] / tail[i] ** 2 for i in range(3))


def _diagnostics_for(
    problem: ProblemDefinition, x: np.ndarray, jac_x: np.ndarray,
) -> Optional[AsErrorDiagnostics]:
    try:
        state = init_smallest_triple(jac_x)
        return as_error_diagnostics(problem, x, state)
    except (ClusteredSingularValues, linalg.SingularMatrix, ValueError):
        return None


def solve(
    problem: ProblemDefinition,
    x0: np.ndarray,
    config: Optional[SolverConfig] = None,
) -> TerminationReport:
    """Run the damped Newton iteration from x0.

    Never raises for numerical failures: breakdowns and stalls are
    reported through the termination status.  Identical inputs produce
    identical reports.
    """
    if config is None:
        config = SolverConfig()
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.size != problem.dimension:
        raise ValueError("start point dimension mismatch")
    d = problem.dimension

    records: list[IterationRecord] = []
    f_scale: Optional[float] = None
    singular_streak = 0
    stall_streak = 0
    last_direction = np.ones(d) / np.sqrt(d)
    status: Optional[Status] = None

    for k in range(config.max_iter + 1):
        try:
            f_vec = evaluate(problem, x)
        except NonFiniteError:
            status = Status.BREAKDOWN
            break
        fn = vec_norm(f_vec)
        if f_scale is None:
            f_scale = 1.0 + fn
        root_tol = config.tol_root * f_scale

        try:
            jac_x = jacobian(problem, x)
        except NonFiniteError:
            status = Status.BREAKDOWN
            break
        fac = linalg.svd(jac_x)
        ratio = _sigma_ratio(fac)

        if fn <= root_tol:
            records.append(IterationRecord(
                k=k, x=x.copy(), f_norm=fn, g_value=None, g_case="Root",
                sigma_min_ratio=ratio, lam=None, rule_tag=None,
                es_inner=None, as_norm=None,
            ))
            status = Status.CONVERGED_ROOT
            break

        smax = float(fac.sigmas[0]) if fac.sigmas.size else 0.0
        smin = float(fac.sigmas[-1]) if fac.sigmas.size else 0.0
        g_val: Optional[float] = None
        if smin > 0.0:
            jinv_f = linalg._apply_svd_inverse(fac, f_vec, d)
            step_norm = vec_norm(jinv_f)
            if not np.isfinite(step_norm):
                # the Newton step itself overflowed; records only hold
                # finite scalars, so classify as a numerical breakdown
                status = Status.BREAKDOWN
                break
            if step_norm > 0.0:
                g_val = fn / step_norm
                if not np.isfinite(g_val):
                    status = Status.BREAKDOWN
                    break
        regular = (
            smin > 0.0
            and g_val is not None
            and (smin > _STEP_RANK_TOL * smax or g_val > _LANDING_G_MAX)
        )

        if not regular:
            # Rank-deficient iterate: classify or stop, no Newton step exists.
            if not range_membership(f_vec, fac, DEFAULT_RANK_TOL, DEFAULT_RANGE_TOL):
                records.append(IterationRecord(
                    k=k, x=x.copy(), f_norm=fn, g_value=0.0,
                    g_case=CaseTag.NOT_IN_RANGE.value, sigma_min_ratio=ratio,
                    lam=None, rule_tag=None, es_inner=None, as_norm=None,
                ))
                status = Status.CONVERGED_SINGULAR
                break
            try:
                ev = compute_g(problem, x, last_direction, root_tol=root_tol)
            except LimitUnstable:
                records.append(IterationRecord(
                    k=k, x=x.copy(), f_norm=fn, g_value=None,
                    g_case="LimitUnstable", sigma_min_ratio=ratio,
                    lam=None, rule_tag=None, es_inner=None, as_norm=None,
                ))
                status = Status.LIMIT_UNSTABLE
                break
            except RootEncountered:
                records.append(IterationRecord(
                    k=k, x=x.copy(), f_norm=fn, g_value=None, g_case="Root",
                    sigma_min_ratio=ratio, lam=None, rule_tag=None,
                    es_inner=None, as_norm=None,
                ))
                status = Status.CONVERGED_ROOT
                break
            records.append(IterationRecord(
                k=k, x=x.copy(), f_norm=fn, g_value=ev.g_value,
                g_case=ev.case_tag.value, sigma_min_ratio=ratio,
                lam=None, rule_tag=None, es_inner=None, as_norm=None,
            ))
            if ev.g_value <= config.tol_singular_g:
                status = Status.CONVERGED_SINGULAR
            else:
                # F is in the range and g stays positive: the iteration
                # cannot advance through an exactly singular Jacobian.
                status = Status.STALLED
            break

        # Regular iterate: indicator value and Newton step from one SVD.
        dx = -jinv_f

        trigger = g_val <= config.tol_singular_g or (
            ratio <= config.tol_sigma_ratio and g_val <= _LANDING_G_MAX)
        singular_streak = singular_streak + 1 if trigger else 0
        if singular_streak >= 2:
            records.append(IterationRecord(
                k=k, x=x.copy(), f_norm=fn, g_value=g_val,
                g_case=CaseTag.REGULAR.value, sigma_min_ratio=ratio,
                lam=None, rule_tag=None, es_inner=None, as_norm=None,
            ))
            status = Status.CONVERGED_SINGULAR
            break

        if k == config.max_iter:
            records.append(IterationRecord(
                k=k, x=x.copy(), f_norm=fn, g_value=g_val,
                g_case=CaseTag.REGULAR.value, sigma_min_ratio=ratio,
                lam=None, rule_tag=None, es_inner=None, as_norm=None,
            ))
            status = Status.MAX_ITER
            break

        if config.rule is Rule.FULL_STEP:
            lam, tag = 1.0, RuleTag.UNRESTRICTED
            es_inner = as_norm = None
        else:
            dx_hat = dx / step_norm
            try:
                h_action = second_derivative_action(problem, x, dx, dx_hat)
            except NonFiniteError:
                status = Status.BREAKDOWN
                break
            w = linalg._apply_svd_inverse(fac, h_action, d)
            es_inner = float(dx_hat @ w) * (1.0 + _stepsize._ES_FAULT)
            as_norm = vec_norm(w)
            if config.rule is Rule.ES:
                decision = _decision_exact(es_inner, as_norm)
            elif config.rule is Rule.AS:
                decision = _decision_approx(es_inner, as_norm)
            else:
                decision = _decision_hybrid(es_inner, as_norm,
                                            config.agreement_factor)
            lam, tag = decision.lam, decision.rule_tag

        diag = None
        if config.record_diagnostics:
            diag = _diagnostics_for(problem, x, jac_x)

        records.append(IterationRecord(
            k=k, x=x.copy(), f_norm=fn, g_value=g_val,
            g_case=CaseTag.REGULAR.value, sigma_min_ratio=ratio,
            lam=lam, rule_tag=tag.value, es_inner=es_inner, as_norm=as_norm,
            diagnostics=diag,
        ))

        x = x + lam * dx
        last_direction = dx

        stall_streak = stall_streak + 1 if lam < config.lambda_min else 0
        if stall_streak >= 3:
            status = Status.STALLED
            break

    if status is None:
        status = Status.MAX_ITER

    tail = (
        quadratic_tail_check(records)
        if status is Status.CONVERGED_SINGULAR
        else None
    )
    final_x = records[-1].x if status in (
        Status.CONVERGED_ROOT, Status.CONVERGED_SINGULAR, Status.MAX_ITER,
    ) and records else x
    return TerminationReport(
        status=status,
        final_x=np.asarray(final_x, dtype=float).copy(),
        records=records,
        quadratic_tail_ratio=tail,
    )


@dataclass(frozen=True)
class GridCellResult:
    """Summary of one grid start: where it began and how it ended."""

    x0: np.ndarray
    status: Status
    iterations: int
    final_x: np.ndarray
    final_f_norm: Optional[float]
    dist_to_singular_line: Optional[float]


def grid_run(
    problem: ProblemDefinition,
    box: tuple[float, ...],
    resolution: int | tuple[int, ...],
    config: Optional[SolverConfig] = None,
) -> list[GridCellResult]:
    """Run the solver from every node of a rectangular start grid.

    box holds (min, max) bounds per coordinate (2*d floats); resolution
    is one int shared by all axes or one per axis.  Starts are emitted
    row-major with the first coordinate outermost.  The singular-line
    distance column is filled for problems with a known singular-line set
    (None otherwise).
    """
    d = problem.dimension
    if config is None:
        config = SolverConfig()
    bounds = tuple(float(b) for b in box)
    if len(bounds) != 2 * d:
        raise ValueError(f"box needs {2 * d} bounds for a {d}-D problem")
    if isinstance(resolution, (int, np.integer)):
        res = (int(resolution),) * d
    else:
        res = tuple(int(r) for r in resolution)
        if len(res) != d:
            raise ValueError("resolution must be an int or one per axis")
    axes = [np.linspace(bounds[2 * i], bounds[2 * i + 1], res[i])
            for i in range(d)]
    out: list[GridCellResult] = []
    for coords in itertools.product(*axes):
        start = np.array(coords)
        report = solve(problem, start, config)
        dist = None
        if report.status is Status.CONVERGED_SINGULAR:
            dist = singular_line_distance(problem.name, report.final_x)
        out.append(GridCellResult(
            x0=start,
            status=report.status,
            iterations=report.iterations,
            final_x=report.final_x,
            final_f_norm=report.final_f_norm,
            dist_to_singular_line=dist,
        ))
    return out
