"""Smooth tracking of the smallest singular triple along a matrix path.

The standard SVD orders singular values as nonnegative numbers, which
kinks |sigma_min| when the underlying smooth branch crosses zero.  This
module keeps a signed sigma together with continuously varying singular
vectors (u, v): a first-order predictor moves the triple from the anchor
matrix to a nearby one, and shifted inverse iteration on A^T A and A A^T
restores the invariants.  The signed value passes through zero without a
kink and its sign change is detectable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import vec_norm

_GAP_RTOL = 1e-10
# Entries below this (the vectors are unit length) are treated as zero by
# the deterministic sign convention.
_SIGN_EPS = 1e-12


class ClusteredSingularValues(Exception):
    """The two smallest singular values are too close to isolate a branch."""


class StepTooLarge(Exception):
    """||A_new - anchor|| exceeds the trust fraction of the isolation gap."""


@dataclass(frozen=True)
class SmoothSvdState:
    """Signed smallest singular triple anchored at a concrete matrix.

    sigma is the signed branch value (|sigma| equals the smallest singular
    value of anchor_matrix); gap = sigma_{n-1} - |sigma_n| at the anchor
    (inf for 1x1 matrices, where no second singular value exists).
    """

    u: np.ndarray
    v: np.ndarray
    sigma: float
    anchor_matrix: np.ndarray
    gap: float


def _first_significant_sign(vec: np.ndarray) -> float:
    for entry in vec:
        if abs(entry) > _SIGN_EPS:
            return 1.0 if entry > 0.0 else -1.0
    return 1.0


def init_smallest_triple(
    a: np.ndarray, gap_tol: float = _GAP_RTOL
) -> SmoothSvdState:
    """Initialize the tracked triple from a full SVD of a.

    Preconditions: the smallest singular value is isolated,
    sigma_{n-1} - sigma_n > gap_tol * sigma_1 (raises
    ClusteredSingularValues otherwise).  The sign convention makes the
    first significant entry of v positive and starts with sigma >= 0.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n, m = a.shape
    if n != m:
        raise ValueError("init_smallest_triple expects a square matrix")
    u_full, s, vt = np.linalg.svd(a)
    if n == 1:
        gap = float("inf")
    else:
        gap = float(s[-2] - s[-1])
        if gap <= gap_tol * max(s[0], 1e-300):
            raise ClusteredSingularValues(
                f"sigma_{n-1}={s[-2]:.6e} and sigma_{n}={s[-1]:.6e} too close"
            )
    sigma = float(s[-1])
    v = vt[-1, :].copy()
    u = u_full[:, -1].copy()
    flip = _first_significant_sign(v)
    v *= flip
    if sigma > _SIGN_EPS * max(s[0], 1.0):
        # keep A v = sigma u intact
        u *= flip
    else:
        # sigma ~ 0: u is only determined up to sign; normalize it too
        u *= _first_significant_sign(u)
    return SmoothSvdState(
        u=u, v=v, sigma=sigma, anchor_matrix=a.copy(), gap=gap
    )


def _shifted_pinv_apply(
    eigvals: np.ndarray, eigvecs: np.ndarray, lam: float, rhs: np.ndarray
) -> np.ndarray:
    """Apply pinv(lam*I - S) to rhs, S = eigvecs diag(eigvals) eigvecs^T.

    The eigenvalue closest to lam is the tracked branch itself and is
    projected out (that is the pseudo-inverse under branch isolation).
    """
    diffs = lam - eigvals
    skip = int(np.argmin(np.abs(diffs)))
    coeff = eigvecs.T @ rhs
    out = np.zeros_like(coeff)
    for i, d in enumerate(diffs):
        if i != skip and d != 0.0:
            out[i] = coeff[i] / d
    return eigvecs @ out


def _inverse_iteration(mat: np.ndarray, shift: float, start: np.ndarray) -> np.ndarray:
    """Two shifted inverse-iteration sweeps on a symmetric matrix.

    The second sweep reuses the Rayleigh quotient of the first, which is
    enough to restore the eigenvector to machine precision under the step
    restriction.  Signs follow the start vector.
    """
    n = mat.shape[0]
    vec = start
    for _ in range(2):
        shifted = mat - shift * np.eye(n)
        try:
            cand = np.linalg.solve(shifted, vec)
        except np.linalg.LinAlgError:
            cand = None
        if cand is None or not np.all(np.isfinite(cand)):
            # exact shift hit: nudge relative to the matrix scale
            scale = max(abs(shift), float(np.max(np.abs(mat))), 1.0)
            shifted = mat - (shift + 1e-14 * scale) * np.eye(n)
            cand = np.linalg.lstsq(shifted, vec, rcond=None)[0]
        nrm = vec_norm(cand)
        if nrm == 0.0 or not np.all(np.isfinite(cand)):
            break
        cand = cand / nrm
        if float(cand @ vec) < 0.0:
            cand = -cand
        vec = cand
        shift = float(vec @ (mat @ vec))
    return vec


def propagate(
    state: SmoothSvdState,
    a_new: np.ndarray,
    max_step_fraction: float = 0.25,
) -> SmoothSvdState:
    """Move the tracked triple from the anchor to a_new.

    Preconditions: ||a_new - anchor||_2 <= max_step_fraction * gap (raises
    StepTooLarge otherwise).  First-order predictor:
        d(sigma) = <u, dA v>,
        dv = pinv(lam - A^T A) d(A^T A) v,   lam = sigma^2,
        du = pinv(lam - A A^T) d(A A^T) u,
    then inverse-iteration correction at a_new with signs carried over, so
    sigma crosses zero continuously.
    """
    a_new = np.atleast_2d(np.asarray(a_new, dtype=float))
    anchor = state.anchor_matrix
    if a_new.shape != anchor.shape:
        raise ValueError("a_new must match the anchor shape")
    da = a_new - anchor
    step = float(np.linalg.svd(da, compute_uv=False)[0]) if da.size else 0.0
    if np.isfinite(state.gap) and step > max_step_fraction * state.gap:
        raise StepTooLarge(
            f"step {step:.6e} exceeds {max_step_fraction} * gap {state.gap:.6e}"
        )

    n = anchor.shape[0]
    lam = state.sigma**2
    sigma_pred = state.sigma + float(state.u @ (da @ state.v))

    if n == 1:
        v_new = state.v.copy()
        u_new = state.u.copy()
    else:
        btb = anchor.T @ anchor
        dbtb = da.T @ anchor + anchor.T @ da
        evals_v, evecs_v = np.linalg.eigh(btb)
        dv = _shifted_pinv_apply(evals_v, evecs_v, lam, dbtb @ state.v)
        v_pred = state.v + dv
        v_pred /= vec_norm(v_pred)

        bbt = anchor @ anchor.T
        dbbt = da @ anchor.T + anchor @ da.T
        evals_u, evecs_u = np.linalg.eigh(bbt)
        du = _shifted_pinv_apply(evals_u, evecs_u, lam, dbbt @ state.u)
        u_pred = state.u + du
        u_pred /= vec_norm(u_pred)

        lam_pred = sigma_pred**2
        v_new = _inverse_iteration(a_new.T @ a_new, lam_pred, v_pred)
        u_new = _inverse_iteration(a_new @ a_new.T, lam_pred, u_pred)

    sigma_new = float(u_new @ (a_new @ v_new))

    s = np.linalg.svd(a_new, compute_uv=False)
    gap_new = float("inf") if n == 1 else float(s[-2] - abs(sigma_new))

    return SmoothSvdState(
        u=u_new,
        v=v_new,
        sigma=sigma_new,
        anchor_matrix=a_new.copy(),
        gap=gap_new,
    )


def sigma_directional_derivative(state: SmoothSvdState, da: np.ndarray) -> float:
    """Derivative of the signed sigma along a matrix direction: <u, dA v>."""
    da = np.atleast_2d(np.asarray(da, dtype=float))
    if da.shape != state.anchor_matrix.shape:
        raise ValueError("dA must match the anchor shape")
    return float(state.u @ (da @ state.v))
