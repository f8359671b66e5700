"""Dense linear-algebra kernel.

Factorization-backed solves with an explicit rank test, SVD helpers, and a
constructive toolkit for inverses of singularly perturbed matrices
(A + eps*B with A rank deficient).  Everything here is dense and direct;
the intended problem dimensions are small (n <= 8).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-8

# Relative residual target for the defect-correction iteration in
# range_restricted_inverse_apply.
_RANGE_SOLVE_RTOL = 1e-12
# Relative tolerance for deciding membership of a vector in a column range.
_RANGE_MEMBERSHIP_RTOL = 1e-8


class SingularMatrix(Exception):
    """Rank test failed: sigma_min <= rank_tol * sigma_max."""

    def __init__(self, sigma_min: float, sigma_max: float):
        super().__init__(
            "matrix numerically singular "
            f"(sigma_min={sigma_min:.6e}, sigma_max={sigma_max:.6e})"
        )
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)


class NonConvergence(Exception):
    """The underlying SVD iteration did not converge."""


class NotApplicable(Exception):
    """Perturbation-bound precondition violated (||M - L|| >= 1/||L^-1||)."""


class SharedNullspace(Exception):
    """N(A) and N(B) intersect nontrivially; the decomposition is undefined."""


class DegenerateSum(Exception):
    """B*N(A) + R(A) does not span the whole space; no valid projector exists."""


class NoConvergence(Exception):
    """Defect-correction iteration stopped contracting (eps too large)."""


def vec_norm(v: np.ndarray) -> float:
    """Euclidean norm of a vector.

    Computed as abs(v[0]) for one-element vectors so that scalar problems
    keep exact arithmetic identities (|<t, w>| == ||w|| bitwise in 1-D).
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 1:
        return float(abs(v[0]))
    return float(np.linalg.norm(v))


def spectral_norm(a: np.ndarray) -> float:
    """Largest singular value of a (0.0 for an all-zero or empty matrix)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[0])


@dataclass(frozen=True)
class SvdFactorization:
    """Full singular value decomposition a = u @ diag(sigmas) @ v.T.

    u is (m, m) and v is (n, n) with orthonormal columns; sigmas holds the
    min(m, n) singular values in non-increasing order.
    """

    u: np.ndarray
    sigmas: np.ndarray
    v: np.ndarray

    def rank(self, rank_tol: float = DEFAULT_RANK_TOL) -> int:
        if self.sigmas.size == 0 or self.sigmas[0] <= 0.0:
            return 0
        return int(np.count_nonzero(self.sigmas > rank_tol * self.sigmas[0]))

    def range_basis(self, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
        """Orthonormal basis of the column range (left singular vectors)."""
        return self.u[:, : self.rank(rank_tol)]

    def null_basis(self, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
        """Orthonormal basis of the null space (right singular vectors)."""
        return self.v[:, self.rank(rank_tol):]

    def reconstruct(self) -> np.ndarray:
        k = self.sigmas.size
        return (self.u[:, :k] * self.sigmas) @ self.v[:, :k].T


def svd(a: np.ndarray) -> SvdFactorization:
    """Full SVD of a real matrix.

    Raises NonConvergence if the iterative kernel fails (exceedingly rare
    for the dense sizes used here).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    return SvdFactorization(u=u, sigmas=s, v=vt.T)


def _apply_svd_inverse(fac: SvdFactorization, b: np.ndarray, rank: int) -> np.ndarray:
    """x = V_r diag(1/sigma_r) U_r^T b using the leading `rank` triples."""
    coeff = (fac.u[:, :rank].T @ b) / fac.sigmas[:rank]
    return fac.v[:, :rank] @ coeff


def solve(
    a: np.ndarray, b: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL
) -> np.ndarray:
    """Solve a @ x = b for square a, with an explicit SVD rank test.

    Raises SingularMatrix when sigma_min <= rank_tol * sigma_max, carrying
    both extreme singular values for diagnostics.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    n, m = a.shape
    if n != m:
        raise ValueError(f"solve expects a square matrix, got {a.shape}")
    if b.size != n:
        raise ValueError(f"rhs size {b.size} does not match matrix size {n}")
    fac = svd(a)
    smax = float(fac.sigmas[0]) if fac.sigmas.size else 0.0
    smin = float(fac.sigmas[-1]) if fac.sigmas.size else 0.0
    if smin <= rank_tol * smax or smax == 0.0:
        raise SingularMatrix(smin, smax)
    return _apply_svd_inverse(fac, b, n)


def pseudoinverse_apply(
    a: np.ndarray, b: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL
) -> np.ndarray:
    """Minimum-norm least-squares solution pinv(a) @ b with rank truncation."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != a.shape[0]:
        raise ValueError(f"rhs size {b.size} does not match row count {a.shape[0]}")
    fac = svd(a)
    r = fac.rank(rank_tol)
    if r == 0:
        return np.zeros(a.shape[1])
    return _apply_svd_inverse(fac, b, r)


def inverse_perturbation_bounds(
    norm_l_inv: float, norm_diff: float
) -> tuple[float, float]:
    """Bounds on ||M^-1|| and ||L^-1 - M^-1|| from ||L^-1|| and ||L - M||.

    Requires norm_diff < 1 / norm_l_inv; otherwise the Neumann-series
    argument breaks down and NotApplicable is raised.  Returns
    (norm_l_inv / (1 - norm_l_inv * norm_diff),
     norm_l_inv**2 * norm_diff / (1 - norm_l_inv * norm_diff)).
    """
    if norm_l_inv < 0.0 or norm_diff < 0.0:
        raise ValueError("norms must be nonnegative")
    product = norm_l_inv * norm_diff
    if product >= 1.0:
        raise NotApplicable(
            f"||L - M|| * ||L^-1|| = {product:.6e} >= 1; no bound available"
        )
    denom = 1.0 - product
    bound_inv = norm_l_inv / denom
    bound_diff = norm_l_inv**2 * norm_diff / denom
    return bound_inv, bound_diff


@dataclass(frozen=True)
class PerturbationDecomposition:
    """Structural data for inverting A + eps*B with A rank deficient.

    Holds orthonormal bases of N(A) and R(A), the (generally oblique) image
    basis B*N(A), the projector P onto B*N(A) along R(A), a basis W of the
    chosen complement of N(A), and matrices astar / bstar realizing the
    restricted inverses (A restricted to W, B restricted to N(A)).
    All blocks are eps-independent.
    """

    null_basis_a: np.ndarray
    range_basis_a: np.ndarray
    image_basis_bn: np.ndarray
    projector_p: np.ndarray
    complement_basis: np.ndarray
    astar: np.ndarray
    bstar: np.ndarray
    complement_choice: str


def perturbation_decompose(
    a: np.ndarray,
    b: np.ndarray,
    complement_choice: str = "orthogonal",
    rank_tol: float = DEFAULT_RANK_TOL,
) -> PerturbationDecomposition:
    """Build the projector/restricted-inverse data for A + eps*B.

    complement_choice selects the complement of N(A) on which A is
    inverted: "orthogonal" takes N(A)^perp, "b_preimage_of_range" takes
    {x : B x in R(A)} (required by range_restricted_inverse_apply).

    Raises SharedNullspace when B is not injective on N(A), DegenerateSum
    when B*N(A) + R(A) fails to span the space.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] != a.shape[1] or a.shape != b.shape:
        raise ValueError("perturbation_decompose expects square A, B of equal shape")
    if complement_choice not in ("orthogonal", "b_preimage_of_range"):
        raise ValueError(f"unknown complement_choice {complement_choice!r}")
    n = a.shape[0]
    fac = svd(a)
    r = fac.rank(rank_tol)
    k = n - r
    null_a = fac.null_basis(rank_tol)       # (n, k)
    range_a = fac.range_basis(rank_tol)     # (n, r)
    image_bn = b @ null_a                   # (n, k)

    if k > 0:
        smax_b = spectral_norm(b)
        s_bn = np.linalg.svd(image_bn, compute_uv=False)
        if smax_b == 0.0 or s_bn[-1] <= rank_tol * smax_b:
            raise SharedNullspace(
                "B is numerically singular on N(A); nullspaces intersect"
            )

        stacked = np.hstack([image_bn, range_a])
        col_scale = np.linalg.norm(stacked, axis=0)
        s_stack = np.linalg.svd(stacked / col_scale, compute_uv=False)
        if s_stack[-1] <= rank_tol * s_stack[0]:
            raise DegenerateSum(
                "B*N(A) + R(A) is numerically rank deficient; no projector exists"
            )
        # P maps onto span(image_bn) along span(range_a): expand in the
        # stacked basis and keep the image_bn coordinates.
        stacked_inv = np.linalg.inv(stacked)
        projector = image_bn @ stacked_inv[:k, :]
    else:
        projector = np.zeros((n, n))

    if complement_choice == "orthogonal":
        complement = fac.v[:, :r]
    else:
        # x in complement  <=>  B x in R(A)  <=>  (I - Pi_R) B x = 0.
        resid_map = b - range_a @ (range_a.T @ b)
        fac_c = svd(resid_map)
        rank_c = fac_c.rank(rank_tol)
        if rank_c != k:
            raise DegenerateSum(
                "B-preimage of R(A) does not have complementary dimension"
            )
        complement = fac_c.null_basis(rank_tol)  # (n, r)
        if k > 0 and r > 0:
            joint = np.hstack([null_a, complement])
            s_joint = np.linalg.svd(joint, compute_uv=False)
            if s_joint[-1] <= rank_tol * s_joint[0]:
                raise DegenerateSum("complement intersects N(A)")

    astar = complement @ np.linalg.pinv(a @ complement) if r > 0 else np.zeros((n, n))
    bstar = null_a @ np.linalg.pinv(b @ null_a) if k > 0 else np.zeros((n, n))

    return PerturbationDecomposition(
        null_basis_a=null_a,
        range_basis_a=range_a,
        image_basis_bn=image_bn,
        projector_p=projector,
        complement_basis=complement,
        astar=astar,
        bstar=bstar,
        complement_choice=complement_choice,
    )


def approximate_perturbed_inverse_apply(
    decomp: PerturbationDecomposition, eps: float, b: np.ndarray
) -> np.ndarray:
    """Apply the eps-split approximate inverse of A + eps*B to b.

    Returns astar @ (I - P) b + (1/eps) * bstar @ P b.  The error against
    the true inverse stays O(1) as eps -> 0 even though the inverse itself
    blows up like 1/eps.
    """
    if eps == 0.0:
        raise ValueError("eps must be nonzero")
    b = np.asarray(b, dtype=float).reshape(-1)
    pb = decomp.projector_p @ b
    return decomp.astar @ (b - pb) + decomp.bstar @ pb / eps


def range_restricted_inverse_apply(
    decomp: PerturbationDecomposition,
    a: np.ndarray,
    b: np.ndarray,
    eps: float,
    y: np.ndarray,
    max_iter: int = 60,
) -> np.ndarray:
    """Solve (A + eps*B) x = y for y in R(A), accurate to O(eps)-free residual.

    Uses defect correction seeded with astar @ y: the residual stays in
    R(A) when the decomposition was built with the B-preimage complement,
    and each sweep contracts it by a factor O(eps).  Raises NoConvergence
    when the contraction factor exceeds 0.5 or max_iter is exhausted.
    """
    if decomp.complement_choice != "b_preimage_of_range":
        raise ValueError(
            "range_restricted_inverse_apply needs complement_choice="
            "'b_preimage_of_range'"
        )
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    yn = vec_norm(y)
    if yn == 0.0:
        return np.zeros(y.size)
    range_a = decomp.range_basis_a
    outside = y - range_a @ (range_a.T @ y)
    if vec_norm(outside) > _RANGE_MEMBERSHIP_RTOL * yn:
        raise ValueError("y is not in the range of A")

    m = a + eps * b
    x = decomp.astar @ y
    prev = None
    for _ in range(max_iter):
        r = m @ x - y
        rn = vec_norm(r)
        if rn <= _RANGE_SOLVE_RTOL * yn:
            return x
        if prev is not None and rn > 0.5 * prev:
            raise NoConvergence(
                f"residual contraction {rn / prev:.3f} > 0.5 (eps too large)"
            )
        x = x - decomp.astar @ r
        prev = rn
    raise NoConvergence(f"no convergence within {max_iter} sweeps")
