"""Indicator tests: case handling, directional limits, derivative formula,
bordered-system evaluation, and field scans."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from snewton import linalg
from snewton.indicator import (
    BorderedSingular,
    CaseTag,
    LimitUnstable,
    RootEncountered,
    compute_g,
    directional_derivative_g,
    field_scan,
    griewank_reddien_g,
)
from snewton.linalg import vec_norm
from snewton.problems import (
    evaluate,
    get_problem,
    jacobian,
    linear_compose,
    second_derivative_action,
    singular_line_distance,
)

rng = np.random.default_rng(91230456)


# ---------------------------------------------------------------------------
# compute_g case handling
# ---------------------------------------------------------------------------


def test_identity_is_regular_with_g_one():
    prob = get_problem("identity")
    for x in ([1.0, 0.0], [0.3, -2.0], [1e-6, 1e-6]):
        ev = compute_g(prob, x)
        assert ev.case_tag is CaseTag.REGULAR
        assert ev.g_value == pytest.approx(1.0, rel=1e-14)
        assert_allclose(ev.newton_step, -np.asarray(x), rtol=1e-14)
        assert vec_norm(ev.unit_direction_t) == pytest.approx(1.0, rel=1e-14)


def test_root_encountered_at_exact_root():
    with pytest.raises(RootEncountered):
        compute_g(get_problem("identity"), [0.0, 0.0])


def test_regular_identity_relation_random_points():
    """g * ||J^-1 F|| recovers ||F|| in the regular case."""
    prob = get_problem("expsin")
    for _ in range(50):
        x = rng.uniform(-1.2, 1.2, size=2)
        try:
            ev = compute_g(prob, x)
        except (RootEncountered, LimitUnstable):
            continue
        if ev.case_tag is not CaseTag.REGULAR:
            continue
        assert ev.g_value > 0.0
        fn = vec_norm(evaluate(prob, x))
        step = vec_norm(ev.newton_step)
        assert ev.g_value * step == pytest.approx(fn, rel=1e-12)


def test_directional_limit_on_diag_quadratic():
    """F = (x1^2, x2^2) at (0, t): the one-sided limit is 2|t| from any
    probing direction."""
    prob = get_problem("diag_quadratic")
    for t in (0.7, -0.3):
        ev = compute_g(prob, [0.0, t], [1.0, 0.0])
        assert ev.case_tag is CaseTag.DIRECTIONAL_LIMIT
        assert ev.g_value == pytest.approx(2.0 * abs(t), rel=1e-6)
        ev = compute_g(prob, [0.0, t])  # default probing direction
        assert ev.g_value == pytest.approx(2.0 * abs(t), rel=1e-6)


def test_not_in_range_demo_limit_is_one():
    ev = compute_g(get_problem("not_in_range_demo"), [0.0, 1.0], [1.0, 0.0])
    assert ev.case_tag is CaseTag.DIRECTIONAL_LIMIT
    assert ev.g_value == pytest.approx(1.0, abs=1e-4)


def test_expsin_diagonal_point_not_in_range():
    ev = compute_g(get_problem("expsin"), [0.6, 0.6], [1.0, 0.0])
    assert ev.case_tag is CaseTag.NOT_IN_RANGE
    assert ev.g_value == 0.0
    assert ev.sigma_min_ratio <= 1e-12


def test_crossing_singular_small_but_nonzero_ratio():
    ev = compute_g(get_problem("crossing_singular"), [0.05, 0.0])
    assert ev.case_tag is CaseTag.REGULAR
    assert 0.0 < ev.sigma_min_ratio < 0.2


def test_limit_unstable_when_no_usable_samples():
    """Far out on the exponential plateau the Jacobian is numerically
    rank-deficient everywhere nearby, so the epsilon sweep cannot collect
    regular samples."""
    with pytest.raises(LimitUnstable):
        compute_g(get_problem("expsin"), [-5.62, 4.93], [1.0, 0.0])


def test_zero_probing_direction_rejected():
    with pytest.raises(ValueError):
        compute_g(get_problem("diag_quadratic"), [0.0, 0.5], [0.0, 0.0])


def test_g_scales_linearly_with_residual_scale():
    """Scaling the problem to c*F scales g by c while leaving the Newton
    step (and hence the classification geometry) unchanged."""
    prob = get_problem("expsin")
    x = np.array([0.9, 0.1])
    base = compute_g(prob, x)
    for c in (3.0, 0.25):
        scaled = compute_g(linear_compose(c * np.eye(2), prob), x)
        assert scaled.g_value == pytest.approx(c * base.g_value, rel=1e-12)
        assert_allclose(scaled.newton_step, base.newton_step, rtol=1e-12)


def test_g_invariant_under_orthogonal_composition():
    prob = get_problem("expsin")
    x = np.array([0.9, 0.1])
    base = compute_g(prob, x)
    q = np.array([[0.6, -0.8], [0.8, 0.6]])
    rot = compute_g(linear_compose(q, prob), x)
    assert rot.g_value == pytest.approx(base.g_value, rel=1e-12)


# ---------------------------------------------------------------------------
# directional derivative
# ---------------------------------------------------------------------------


def test_directional_derivative_identity_vanishes():
    """g is constant 1 for the identity, so every derivative is zero."""
    prob = get_problem("identity")
    x = np.array([0.8, -0.4])
    for v in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-0.3, 2.0]):
        assert directional_derivative_g(prob, x, v) == pytest.approx(0.0, abs=1e-13)


def test_directional_derivative_newton_direction_identity():
    """Along dx = -J^-1 F the general formula collapses to
    (||F||/||dx||) <dx/||dx||, J^-1 H(dx, dx/||dx||)>."""
    prob = get_problem("expsin")
    for x in ([0.7, 0.2], [-0.4, 0.9], [1.1, -0.3]):
        x = np.asarray(x)
        f_vec = evaluate(prob, x)
        jac_x = jacobian(prob, x)
        dx = -np.linalg.solve(jac_x, f_vec)
        dxn = vec_norm(dx)
        dx_hat = dx / dxn
        w = np.linalg.solve(jac_x, second_derivative_action(prob, x, dx, dx_hat))
        simplified = vec_norm(f_vec) / dxn * float(dx_hat @ w)
        full = directional_derivative_g(prob, x, dx)
        assert full == pytest.approx(simplified, rel=1e-10)


def test_directional_derivative_matches_fd():
    prob = get_problem("expsin")
    h = 1e-6
    for x, v in (
        ([0.7, 0.2], [1.0, 0.0]),
        ([-0.4, 0.9], [0.6, -0.8]),
        ([1.1, -0.3], [1.0, 1.0]),
    ):
        x = np.asarray(x)
        v = np.asarray(v, dtype=float)
        v = v / vec_norm(v)
        analytic = directional_derivative_g(prob, x, v)
        gp = compute_g(prob, x + h * v).g_value
        gm = compute_g(prob, x - h * v).g_value
        fd = (gp - gm) / (2.0 * h)
        assert analytic == pytest.approx(fd, rel=1e-4)


def test_directional_derivative_scalar_hand_value():
    """F = x^2 + 1 at 0.5: dx = -F/F' = -1.25, and along dx the derivative
    is -2.5 (worked by hand from the collapsed form)."""
    prob = get_problem("scalar_quadratic")
    val = directional_derivative_g(prob, [0.5], [-1.25])
    assert val == pytest.approx(-2.5, rel=1e-12)


def test_directional_derivative_raises_at_singular_jacobian():
    with pytest.raises(linalg.SingularMatrix):
        directional_derivative_g(get_problem("expsin"), [0.6, 0.6], [1.0, 0.0])


# ---------------------------------------------------------------------------
# bordered-system indicator
# ---------------------------------------------------------------------------


def test_bordered_identity_case():
    out = griewank_reddien_g(np.eye(2), [1.0, 0.0], [1.0, 0.0])
    assert out.g == pytest.approx(1.0, rel=1e-14)
    assert_allclose(out.v, [1.0, 0.0], atol=1e-14)
    assert_allclose(out.u, [1.0, 0.0], atol=1e-14)


def test_bordered_rank_deficient_gives_zero():
    out = griewank_reddien_g(np.diag([1.0, 0.0]), [0.0, 1.0], [0.0, 1.0])
    assert out.g == pytest.approx(0.0, abs=1e-14)
    assert_allclose(out.v, [0.0, 1.0], atol=1e-14)
    assert_allclose(out.u, [0.0, 1.0], atol=1e-14)


def test_bordered_matches_closed_form_for_unit_t():
    """For nonsingular A and unit T the bordered system reproduces
    1/<T, A^-1 R>."""
    for _ in range(100):
        a = rng.standard_normal((4, 4))
        if np.linalg.cond(a) > 1e3:
            continue
        t_vec = rng.standard_normal(4)
        t_vec /= vec_norm(t_vec)
        r_vec = rng.standard_normal(4)
        denom = float(t_vec @ np.linalg.solve(a, r_vec))
        if abs(denom) < 1e-3:
            continue
        out = griewank_reddien_g(a, t_vec, r_vec)
        assert out.g == pytest.approx(1.0 / denom, rel=1e-10)


def test_bordered_general_t_scaling():
    """Without normalizing T the system solves T^T V = 1, which rescales
    g to 1/<T, A^-1 R>."""
    a = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
    t_vec = np.array([2.0, 0.0, 1.0])
    r_vec = np.array([0.5, -1.0, 0.3])
    out = griewank_reddien_g(a, t_vec, r_vec)
    expected = 1.0 / float(t_vec @ np.linalg.solve(a, r_vec))
    assert out.g == pytest.approx(expected, rel=1e-10)


def test_bordered_solution_invariants():
    """A V = g R and T^T V = 1 hold for the returned blocks; the adjoint
    block u solves the transposed system."""
    for _ in range(25):
        n = int(rng.integers(2, 6))
        a = rng.standard_normal((n, n))
        t_vec = rng.standard_normal(n)
        r_vec = rng.standard_normal(n)
        bordered = np.zeros((n + 1, n + 1))
        bordered[:n, :n] = a
        bordered[:n, n] = -r_vec
        bordered[n, :n] = t_vec
        if np.linalg.cond(bordered) > 1e6:
            continue
        out = griewank_reddien_g(a, t_vec, r_vec)
        scale = max(1.0, np.linalg.norm(a) * vec_norm(out.v))
        assert vec_norm(a @ out.v - out.g * r_vec) <= 1e-9 * scale
        assert abs(float(t_vec @ out.v) - 1.0) <= 1e-9
        # u lies in the preimage of span{T} and is normalized against R
        assert float(r_vec @ out.u) == pytest.approx(1.0, abs=1e-9)
        resid = a.T @ out.u
        resid -= t_vec * float(t_vec @ resid) / float(t_vec @ t_vec)
        assert vec_norm(resid) <= 1e-8 * max(1.0, vec_norm(a.T @ out.u))


def test_bordered_singular_bordered_matrix_raises():
    # A = diag(1, 0) with T = R = e1 zeroes an entire bordered row
    with pytest.raises(BorderedSingular):
        griewank_reddien_g(np.diag([1.0, 0.0]), [1.0, 0.0], [1.0, 0.0])


def test_bordered_shape_validation():
    with pytest.raises(ValueError):
        griewank_reddien_g(np.eye(2), [1.0, 0.0, 0.0], [1.0, 0.0])


# ---------------------------------------------------------------------------
# field scan
# ---------------------------------------------------------------------------


def test_field_scan_identity_three_by_three():
    res = field_scan(get_problem("identity"), (-1.0, 1.0, -1.0, 1.0), 3)
    assert res.nx == res.ny == 3
    assert len(res.cells) == 9
    for cell in res.cells:
        if np.all(cell.x == 0.0):
            assert cell.case_tag == "Root"
            assert cell.g_value is None
        else:
            assert cell.case_tag == "Regular"
            assert cell.g_value == pytest.approx(1.0, rel=1e-12)


def test_field_scan_row_major_order():
    res = field_scan(get_problem("identity"), (0.0, 1.0, 10.0, 11.0), (2, 3))
    assert res.nx == 2 and res.ny == 3
    assert_allclose(res.xs, [0.0, 1.0])
    assert_allclose(res.ys, [10.0, 10.5, 11.0])
    pts = np.array([c.x for c in res.cells])
    expected = [(x1, x2) for x1 in res.xs for x2 in res.ys]
    assert_allclose(pts, expected)


def test_field_scan_requires_2d_problem():
    with pytest.raises(ValueError):
        field_scan(get_problem("scalar_quadratic"), (0.0, 1.0, 0.0, 1.0), 3)


def test_field_scan_crossing_minimum_at_origin():
    """The rank-deficiency-by-two point dominates the sigma-ratio map."""
    res = field_scan(get_problem("crossing_singular"), (-1.0, 1.0, -1.0, 1.0), 41)
    ratios = np.array([c.sigma_min_ratio for c in res.cells])
    k = int(np.argmin(ratios))
    assert_allclose(res.cells[k].x, [0.0, 0.0], atol=0.0)
    assert ratios[k] == 0.0
    assert res.cells[k].case_tag == "NotInRange"
    assert sorted(ratios)[1] > 1e-2  # the zero is isolated on this grid


def test_field_scan_coinciding_singular_axis():
    """The whole x1 = 0 grid column is rank-deficient; off-axis cells are
    regular."""
    res = field_scan(get_problem("coinciding_singular"), (-1.0, 1.0, -1.0, 1.0), 21)
    for cell in res.cells:
        if cell.x[0] == 0.0:
            assert cell.case_tag == "NotInRange"
            assert cell.sigma_min_ratio == 0.0
        elif abs(cell.x[0]) >= 0.5:
            assert cell.case_tag == "Regular"
            assert cell.sigma_min_ratio > 1e-2


def test_field_scan_expsin_small_ratio_clusters_near_lines():
    """Calibrated form of the line-clustering claim: at threshold 3e-4
    every flagged cell sits within 0.05 of a derived singular line, and
    diagonal grid points are flagged at machine level."""
    res = field_scan(get_problem("expsin"), (-1.5, 1.5, -1.5, 1.5), 41)
    flagged = [c for c in res.cells
               if c.sigma_min_ratio is not None and c.sigma_min_ratio <= 3e-4]
    assert len(flagged) >= 41
    for cell in flagged:
        assert singular_line_distance("expsin", cell.x) <= 0.05
    for cell in res.cells:
        if cell.x[0] == cell.x[1]:
            assert abs(cell.sigma_min_ratio) <= 1e-12


def test_field_scan_records_evaluation_errors():
    res = field_scan(get_problem("expsin"), (30.0, 30.1, 30.0, 30.1), 2)
    assert all(c.case_tag == "Error" for c in res.cells)
    assert all(c.g_value is None for c in res.cells)


def test_field_scan_records_limit_unstable():
    res = field_scan(get_problem("expsin"), (-5.63, -5.61, 4.92, 4.94), 2)
    assert any(c.case_tag == "LimitUnstable" for c in res.cells)
