import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from snewton.problems import get_problem, jacobian
from snewton.smooth_svd import (
    ClusteredSingularValues,
    StepTooLarge,
    init_smallest_triple,
    propagate,
    sigma_directional_derivative,
)

rng = np.random.default_rng(7120231)


def rotation2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def test_init_diagonal():
    state = init_smallest_triple(np.diag([3.0, 2.0, 1.0]))
    assert state.sigma == pytest.approx(1.0)
    assert_allclose(np.abs(state.v), [0, 0, 1], atol=1e-14)
    assert_allclose(state.anchor_matrix @ state.v, state.sigma * state.u,
                    atol=1e-12)
    assert state.gap == pytest.approx(1.0)


def test_init_sign_convention():
    """v's first significant entry is positive and A v = sigma u holds."""
    for _ in range(20):
        n = int(rng.integers(2, 6))
        a = rng.standard_normal((n, n))
        try:
            state = init_smallest_triple(a)
        except ClusteredSingularValues:
            continue
        nz = state.v[np.abs(state.v) > 1e-12]
        assert nz[0] > 0
        assert_allclose(a @ state.v, state.sigma * state.u, atol=1e-10)
        assert state.sigma >= 0.0


def test_init_1x1_gap_is_infinite():
    state = init_smallest_triple(np.array([[4.0]]))
    assert state.gap == math.inf
    assert state.sigma == pytest.approx(4.0)
    assert state.u[0] * state.v[0] > 0


def test_init_rejects_clustered():
    with pytest.raises(ClusteredSingularValues):
        init_smallest_triple(np.eye(3))


def test_init_rejects_nonsquare():
    with pytest.raises(ValueError):
        init_smallest_triple(np.ones((2, 3)))


def test_init_at_exact_singularity():
    """Smallest sigma ~ 0 still initializes (the branch starts at zero)."""
    problem = get_problem("expsin")
    j = jacobian(problem, np.array([0.6, 0.6]))  # on the y = x line
    state = init_smallest_triple(j)
    assert abs(state.sigma) < 1e-12 * np.linalg.norm(j)
    assert state.gap > 0.1


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------


def test_propagate_tracks_sigma_min():
    a0 = np.diag([2.0, 1.0, 0.5])
    state = init_smallest_triple(a0)
    for t in np.linspace(0.0, 1.0, 80)[1:]:
        u_rot = rotation3(0.4 * t)
        a_t = u_rot @ np.diag([2.0, 1.0, 0.5 + 0.3 * t]) @ u_rot.T
        state = propagate(state, a_t)
        sigma_min = np.linalg.svd(a_t, compute_uv=False)[-1]
        assert abs(abs(state.sigma) - sigma_min) < 1e-10
        assert_allclose(a_t @ state.v, state.sigma * state.u, atol=1e-9)


def rotation3(theta):
    r = np.eye(3)
    r[:2, :2] = rotation2(theta)
    return r


def test_sign_crossing_diag_family():
    """On diag(t, 2) the tracked sigma passes through zero linearly."""
    ts = np.arange(-0.1, 0.1001, 0.01)
    state = init_smallest_triple(np.diag([ts[0], 2.0]))
    sigmas = [state.sigma]
    for t in ts[1:]:
        state = propagate(state, np.diag([t, 2.0]))
        sigmas.append(state.sigma)
    sigmas = np.array(sigmas)
    assert sigmas[0] * sigmas[-1] < 0  # crossed zero
    diffs = np.diff(sigmas)
    assert np.all(diffs > 0) or np.all(diffs < 0)  # no kink
    assert_allclose(np.abs(sigmas), np.abs(ts), atol=1e-12)


def test_propagate_step_guard():
    state = init_smallest_triple(np.diag([1.0, 3.0]))  # gap = 2
    with pytest.raises(StepTooLarge):
        propagate(state, np.diag([1.0, 3.0]) + np.diag([0.6, 0.0]))
    # a quarter-gap step is fine
    propagate(state, np.diag([1.4, 3.0]))


def test_propagate_shape_mismatch():
    state = init_smallest_triple(np.diag([1.0, 3.0]))
    with pytest.raises(ValueError):
        propagate(state, np.eye(3))


def test_propagate_1x1():
    state = init_smallest_triple(np.array([[0.5]]))
    for t in np.linspace(0.5, -0.5, 21)[1:]:
        state = propagate(state, np.array([[t]]))
    assert state.sigma == pytest.approx(-0.5, abs=1e-14)


# ---------------------------------------------------------------------------
# directional derivative
# ---------------------------------------------------------------------------


def test_directional_derivative_matches_fd():
    for _ in range(10):
        n = int(rng.integers(2, 5))
        a = rng.standard_normal((n, n)) + n * np.eye(n)
        try:
            state = init_smallest_triple(a)
        except ClusteredSingularValues:
            continue
        da = rng.standard_normal((n, n))
        da /= np.linalg.norm(da, 2)
        h = 1e-7
        s_plus = np.linalg.svd(a + h * da, compute_uv=False)[-1]
        s_minus = np.linalg.svd(a - h * da, compute_uv=False)[-1]
        fd = (s_plus - s_minus) / (2 * h)
        # state.sigma >= 0 right after init, so signs agree with sigma_min
        assert sigma_directional_derivative(state, da) == pytest.approx(
            fd, abs=1e-6)


def test_directional_derivative_zero_for_rotations():
    """Rigid rotations keep all singular values constant."""
    a = np.diag([2.0, 1.0])
    state = init_smallest_triple(a)
    generator = np.array([[0.0, -1.0], [1.0, 0.0]])
    da = generator @ a  # tangent of t -> R(t) A at t = 0
    fd = (np.linalg.svd(rotation2(1e-6) @ a, compute_uv=False)[-1] -
          np.linalg.svd(rotation2(-1e-6) @ a, compute_uv=False)[-1]) / 2e-6
    assert sigma_directional_derivative(state, da) == pytest.approx(0.0, abs=1e-10)
    assert fd == pytest.approx(0.0, abs=1e-6)


def test_directional_derivative_shape_check():
    state = init_smallest_triple(np.diag([2.0, 1.0]))
    with pytest.raises(ValueError):
        sigma_directional_derivative(state, np.eye(3))
