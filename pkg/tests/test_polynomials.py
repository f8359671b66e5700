"""Polynomial system loader tests: parsing, derivatives, error reporting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from snewton.polynomials import DimensionMismatch, ParseError, load_polynomial_system
from snewton.problems import (
    evaluate,
    jacobian,
    second_derivative_action,
    self_check_derivatives,
)


def test_two_variable_system():
    prob = load_polynomial_system("f1 = x1^2 - 1\nf2 = x2")
    assert prob.dimension == 2
    assert_allclose(evaluate(prob, [2.0, 3.0]), [3.0, 3.0])
    assert_allclose(jacobian(prob, [2.0, 3.0]), [[4.0, 0.0], [0.0, 1.0]])


def test_one_variable_identity():
    prob = load_polynomial_system("f1 = x1")
    assert prob.dimension == 1
    assert_allclose(evaluate(prob, [5.0]), [5.0])
    assert_allclose(jacobian(prob, [5.0]), [[1.0]])


def test_products_and_coefficients():
    prob = load_polynomial_system("f1 = 2*x1*x2 + 3\nf2 = -0.5*x2^3")
    x = np.array([1.5, -2.0])
    assert_allclose(evaluate(prob, x), [2 * 1.5 * (-2.0) + 3, -0.5 * (-2.0) ** 3])
    assert_allclose(
        jacobian(prob, x),
        [[2 * x[1], 2 * x[0]], [0.0, -1.5 * x[1] ** 2]],
    )


def test_second_derivatives_mixed_term():
    # f = x1^2 * x2 has hessian [[2 x2, 2 x1], [2 x1, 0]]
    prob = load_polynomial_system("f1 = x1^2*x2\nf2 = x1")
    x = np.array([3.0, 4.0])
    u = np.array([1.0, 0.0])
    w = np.array([0.0, 1.0])
    out = second_derivative_action(prob, x, u, w)
    assert_allclose(out, [2.0 * x[0], 0.0])


def test_leading_sign_and_scientific_notation():
    prob = load_polynomial_system("f1 = -x1 + 1.5e2")
    assert_allclose(evaluate(prob, [2.0]), [148.0])
    prob = load_polynomial_system("f1 = +x1")
    assert_allclose(evaluate(prob, [7.0]), [7.0])


def test_comments_and_blank_lines():
    text = """
    # a comment line
    f1 = x1 - 1   # trailing comment

    f2 = x2 + x1
    """
    prob = load_polynomial_system(text)
    assert prob.dimension == 2
    assert_allclose(evaluate(prob, [1.0, -1.0]), [0.0, 0.0])


def test_like_terms_collected():
    prob = load_polynomial_system("f1 = x1 + x1 + 2*x1")
    assert_allclose(jacobian(prob, [0.0]), [[4.0]])


def test_power_of_product_via_merge():
    # x1*x1 and x1^2 are the same monomial
    prob = load_polynomial_system("f1 = x1*x1 - x1^2 + x1")
    assert_allclose(evaluate(prob, [9.0]), [9.0])


def test_custom_name():
    prob = load_polynomial_system("f1 = x1", name="mine")
    assert prob.name == "mine"


def test_parse_error_truncated_expression():
    with pytest.raises(ParseError) as exc:
        load_polynomial_system("f1 = x1 +")
    assert exc.value.line == 1


def test_parse_error_bad_character():
    with pytest.raises(ParseError, match="unexpected character"):
        load_polynomial_system("f1 = x1 $ 2")


def test_parse_error_missing_head():
    with pytest.raises(ParseError, match="expected 'fK"):
        load_polynomial_system("x1 = 2")


def test_parse_error_duplicate_equation():
    with pytest.raises(ParseError, match="duplicate") as exc:
        load_polynomial_system("f1 = x1\nf1 = x1 + 1")
    assert exc.value.line == 2


def test_parse_error_line_number_after_comments():
    text = "# header\n\nf1 = x1\nf2 = x2 *\n"
    with pytest.raises(ParseError) as exc:
        load_polynomial_system(text)
    assert exc.value.line == 4


def test_parse_error_bad_exponent():
    with pytest.raises(ParseError, match="exponent"):
        load_polynomial_system("f1 = x1^x1")
    with pytest.raises(ParseError, match="exponent"):
        load_polynomial_system("f1 = x1^0")


def test_parse_error_empty_input():
    with pytest.raises(ParseError, match="no equations"):
        load_polynomial_system("# only a comment\n")


def test_parse_error_consecutive_operators():
    with pytest.raises(ParseError):
        load_polynomial_system("f1 = x1 * * x1")


def test_dimension_mismatch_non_contiguous():
    with pytest.raises(DimensionMismatch, match="contiguous"):
        load_polynomial_system("f1 = x1\nf3 = x2")


def test_dimension_mismatch_variable_exceeds_count():
    with pytest.raises(DimensionMismatch):
        load_polynomial_system("f1 = x2")


def test_dimension_mismatch_too_few_variables():
    with pytest.raises(DimensionMismatch):
        load_polynomial_system("f1 = x1\nf2 = x1 + 1")


def test_identically_zero_equation_loses_its_variables():
    # coefficients collapse to zero, so x1 never contributes to the
    # inferred dimension and the count check fails
    with pytest.raises(DimensionMismatch):
        load_polynomial_system("f1 = 0*x1")


def test_loaded_derivatives_consistent_with_fd():
    text = "f1 = x1^3 - 2*x1*x2 + 0.5\nf2 = x2^2 + x1^2*x2 - 1"
    prob = load_polynomial_system(text)
    self_check_derivatives(prob, np.random.default_rng(5), scale=1.5)


@settings(max_examples=30, deadline=None)
@given(
    coeffs=st.lists(
        st.floats(min_value=-5.0, max_value=5.0, allow_nan=False).filter(
            lambda c: abs(c) > 1e-3
        ),
        min_size=1,
        max_size=4,
    ),
    exps=st.lists(
        st.integers(min_value=1, max_value=5), min_size=4, max_size=4, unique=True
    ),
)
def test_univariate_evaluation_matches_horner(coeffs, exps):
    """Round-trip: render monomials to text, load, and compare against
    direct evaluation at a few points."""
    pieces = []
    for c, e in zip(coeffs, exps):
        term = f"{abs(c)!r}*x1^{e}"
        if not pieces:
            pieces.append(("-" + term) if c < 0 else term)
        else:
            pieces.append(("- " if c < 0 else "+ ") + term)
    text = "f1 = " + " ".join(pieces)
    prob = load_polynomial_system(text)
    for x in (-1.3, 0.0, 0.7, 2.0):
        expected = sum(c * x**e for c, e in zip(coeffs, exps))
        got = evaluate(prob, [x])[0]
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)
