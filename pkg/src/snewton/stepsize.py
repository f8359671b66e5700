"""Damping controls for Newton steps near Jacobian singularities.

Both controls are built from one shared core quantity, the curvature
vector w = J^-1 D2F(x)(dx, dx/||dx||):

  exact control (ES)       lambda <= 1 / |<dx/||dx||, w>|
  approximate control (AS) lambda <= 1 / ||w||,

clamped to (0, 1].  Cauchy-Schwarz gives lambda_AS <= lambda_ES, with
equality in one dimension.  The hybrid rule uses ES only while the two
unclamped bounds agree within a configurable factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import linalg
from .linalg import DEFAULT_RANK_TOL, vec_norm
from .problems import ProblemDefinition, jacobian, second_derivative_action
from .smooth_svd import ClusteredSingularValues, SmoothSvdState

# Fault-injection hook for the verification suite: scales the exact-control
# inner product by (1 + _ES_FAULT).  Leave at 0.0 in normal operation.
_ES_FAULT = 0.0


class RuleTag(str, Enum):
    ES = "ES"
    AS = "AS"
    HYBRID_ES = "Hybrid_ES"
    HYBRID_AS = "Hybrid_AS"
    UNRESTRICTED = "Unrestricted"


@dataclass(frozen=True)
class StepsizeDecision:
    """A damping factor plus the quantities that produced it.

    es_inner is the signed inner product <dx/||dx||, w>; as_norm is ||w||.
    toward_singularity records whether the indicator g decreases along the
    step (es_inner < 0 for the descent Newton step), purely as a
    diagnostic.
    """

    lam: float
    rule_tag: RuleTag
    es_inner: float
    as_norm: float
    toward_singularity: bool

    @property
    def lambda_es(self) -> float:
        return _exact_lambda(self.es_inner)

    @property
    def lambda_as(self) -> float:
        return _approx_lambda(self.as_norm)


@dataclass(frozen=True)
class AsErrorDiagnostics:
    """First-order error data for the approximate control.

    predicted_lambda = |sigma_n / <u_n, D2F(v_n, -dx)>| estimates the AS
    damping factor from the smallest-singular-value branch; it approaches
    as_lambda as the iterates near a singular manifold.  None when the
    branch derivative vanishes.
    """

    sigma_n: float
    sigma_ratio: float
    grad_sigma_step: float
    predicted_lambda: Optional[float]
    as_lambda: float


def core_quantities(
    problem: ProblemDefinition,
    x: np.ndarray,
    dx: np.ndarray,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> tuple[np.ndarray, float, float]:
    """Shared curvature quantities (w, es_inner, as_norm) at (x, dx).

    Propagates SingularMatrix when the Jacobian fails the rank test.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    dx = np.asarray(dx, dtype=float).reshape(-1)
    dxn = vec_norm(dx)
    if dxn == 0.0:
        raise ValueError("step dx must be nonzero")
    dx_hat = dx / dxn
    h_action = second_derivative_action(problem, x, dx, dx_hat)
    w = linalg.solve(jacobian(problem, x), h_action, rank_tol)
    es_inner = float(dx_hat @ w) * (1.0 + _ES_FAULT)
    as_norm = vec_norm(w)
    return w, es_inner, as_norm


def _exact_lambda(es_inner: float) -> float:
    if es_inner == 0.0:
        return 1.0
    return min(1.0, 1.0 / abs(es_inner))


def _approx_lambda(as_norm: float) -> float:
    if as_norm == 0.0:
        return 1.0
    return min(1.0, 1.0 / as_norm)


def _decision_exact(es_inner: float, as_norm: float) -> StepsizeDecision:
    tag = RuleTag.UNRESTRICTED if es_inner == 0.0 else RuleTag.ES
    return StepsizeDecision(
        lam=_exact_lambda(es_inner),
        rule_tag=tag,
        es_inner=es_inner,
        as_norm=as_norm,
        toward_singularity=es_inner < 0.0,
    )


def _decision_approx(es_inner: float, as_norm: float) -> StepsizeDecision:
    tag = RuleTag.UNRESTRICTED if as_norm == 0.0 else RuleTag.AS
    return StepsizeDecision(
        lam=_approx_lambda(as_norm),
        rule_tag=tag,
        es_inner=es_inner,
        as_norm=as_norm,
        toward_singularity=es_inner < 0.0,
    )


def _decision_hybrid(
    es_inner: float, as_norm: float, agreement_factor: float
) -> StepsizeDecision:
    if agreement_factor < 1.0:
        raise ValueError("agreement_factor must be >= 1")
    # Compare the unclamped bounds 1/|es| and 1/||w||; a vanishing inner
    # product means the exact bound imposes no restriction at all, which
    # never "agrees" with a finite approximate bound.
    if abs(es_inner) > 0.0:
        ratio = as_norm / abs(es_inner)
    else:
        ratio = 1.0 if as_norm == 0.0 else float("inf")
    if ratio <= agreement_factor:
        lam, tag = _exact_lambda(es_inner), RuleTag.HYBRID_ES
    else:
        lam, tag = _approx_lambda(as_norm), RuleTag.HYBRID_AS
    return StepsizeDecision(
        lam=lam,
        rule_tag=tag,
        es_inner=es_inner,
        as_norm=as_norm,
        toward_singularity=es_inner < 0.0,
    )


def exact_control(
    problem: ProblemDefinition,
    x: np.ndarray,
    dx: np.ndarray,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> StepsizeDecision:
    """Damping from the exact control: lambda = min(1, 1/|es_inner|).

    A vanishing inner product leaves the step unrestricted (lambda = 1,
    rule_tag Unrestricted).
    """
    _, es_inner, as_norm = core_quantities(problem, x, dx, rank_tol)
    return _decision_exact(es_inner, as_norm)


def approximate_control(
    problem: ProblemDefinition,
    x: np.ndarray,
    dx: np.ndarray,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> StepsizeDecision:
    """Damping from the approximate control: lambda = min(1, 1/||w||)."""
    _, es_inner, as_norm = core_quantities(problem, x, dx, rank_tol)
    return _decision_approx(es_inner, as_norm)


def hybrid_control(
    problem: ProblemDefinition,
    x: np.ndarray,
    dx: np.ndarray,
    agreement_factor: float = 2.0,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> StepsizeDecision:
    """ES while the two bounds agree within agreement_factor, else AS."""
    _, es_inner, as_norm = core_quantities(problem, x, dx, rank_tol)
    return _decision_hybrid(es_inner, as_norm, agreement_factor)


def as_error_diagnostics(
    problem: ProblemDefinition,
    x: np.ndarray,
    svd_state: SmoothSvdState,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> AsErrorDiagnostics:
    """First-order prediction of the AS damping from the sigma branch.

    svd_state must be anchored at the Jacobian of x.  Raises
    ClusteredSingularValues when the smallest singular value is not
    isolated there.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    jac_x = jacobian(problem, x)
    anchor = svd_state.anchor_matrix
    scale = max(float(np.max(np.abs(jac_x))), 1.0)
    if np.max(np.abs(jac_x - anchor)) > 1e-8 * scale:
        raise ValueError("svd_state is not anchored at the Jacobian of x")
    if np.isfinite(svd_state.gap):
        sigma_next = svd_state.gap + abs(svd_state.sigma)
        if svd_state.gap <= 1e-10 * max(sigma_next, 1e-300):
            raise ClusteredSingularValues("sigma branch not isolated at x")
        sigma_ratio = svd_state.sigma / sigma_next
    else:
        sigma_ratio = 0.0

    from .problems import evaluate  # local import to avoid cycle noise

    f_vec = evaluate(problem, x)
    dx = -linalg.solve(jac_x, f_vec, rank_tol)
    _, _, as_norm = core_quantities(problem, x, dx, rank_tol)
    grad = float(
        svd_state.u @ second_derivative_action(problem, x, svd_state.v, -dx)
    )
    predicted = abs(svd_state.sigma / grad) if grad != 0.0 else None
    return AsErrorDiagnostics(
        sigma_n=svd_state.sigma,
        sigma_ratio=sigma_ratio,
        grad_sigma_step=grad,
        predicted_lambda=predicted,
        as_lambda=_approx_lambda(as_norm),
    )
