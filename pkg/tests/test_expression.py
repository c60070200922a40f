"""
Unit tests for the expression module.
"""

import math
import unittest

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from timed_abstraction.exceptions import ExpressionDomainError, ExpressionSyntaxError
from timed_abstraction.expression import (
    Add,
    Call,
    Constant,
    IfPos,
    Mul,
    Neg,
    Pow,
    Sub,
    Var,
    differentiate,
    evaluate,
    evaluate_batch,
    gradient,
    jacobian,
    lie_derivative,
    max_variable_index,
    parse,
    to_source,
)


class TestParse(unittest.TestCase):
    """Test cases for parsing expression source text."""

    def test_parse_variable_and_negation(self):
        """Test that a negated variable parses to Neg(Var)."""
        self.assertEqual(parse("-x1", 2), Neg(Var(1)))

    def test_parse_power_binds_tighter_than_negation(self):
        """Test that -x2^2 is the negation of a square."""
        self.assertEqual(parse("-x2^2", 2), Neg(Pow(Var(2), 2.0)))

    def test_parse_function_and_ifpos(self):
        """Test parsing function calls and ifpos."""
        self.assertEqual(parse("sin(x1)", 1), Call("sin", Var(1)))
        self.assertEqual(parse("ifpos(x1, 1, 0)", 1), IfPos(Var(1), Constant(1.0), Constant(0.0)))

    def test_operator_precedence_and_associativity(self):
        """Test arithmetic precedence through evaluation."""
        cases = {"2*3^2": 18.0, "-2^2": -4.0, "1-2-3": -4.0, "8/4/2": 1.0, "(1+2)*3": 9.0, "2*-3": -6.0}
        for source, expected in cases.items():
            with self.subTest(source=source):
                self.assertEqual(evaluate(parse(source, 1), [0.0]), expected)

    def test_scientific_notation(self):
        """Test numbers with exponents."""
        self.assertEqual(parse("1.5e-3", 1), Constant(1.5e-3))
        self.assertEqual(parse(".5", 1), Constant(0.5))

    def test_unexpected_end_reports_position(self):
        """Test that a truncated expression reports the end position."""
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse("x1 +", 2)
        self.assertEqual(ctx.exception.position, 4)

    def test_unexpected_character(self):
        """Test that a stray character is rejected with its position."""
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse("x1 $ 2", 1)
        self.assertEqual(ctx.exception.position, 3)

    def test_variable_out_of_range(self):
        """Test that x3 is rejected in a planar system."""
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse("x1 + x3", 2)
        self.assertIn("out of range", str(ctx.exception))

    def test_non_constant_exponent(self):
        """Test that only numeric exponents are accepted."""
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse("x1^x2", 2)
        self.assertIn("Non-constant exponent", str(ctx.exception))

    def test_unknown_identifier(self):
        """Test that unknown functions are rejected."""
        with self.assertRaises(ExpressionSyntaxError):
            parse("foo(x1)", 1)

    def test_empty_source(self):
        """Test that empty text is not an expression."""
        with self.assertRaises(ExpressionSyntaxError):
            parse("", 1)

    def test_invalid_dimension(self):
        """Test that the dimension must be positive."""
        with self.assertRaises(ValueError):
            parse("x1", 0)


class TestPrinting(unittest.TestCase):
    """Test cases for printing expressions back to source text."""

    def test_print_source_expressions(self):
        """Test that parsed source prints back verbatim."""
        for source in ("-x1", "x1^2", "-x2^2", "x1 + x2", "sin(x1)*x2", "ifpos(x1, x2, 0)"):
            with self.subTest(source=source):
                self.assertEqual(to_source(parse(source, 2)), source)

    def test_structural_round_trip_of_parsed_source(self):
        """Test that parse(to_source(e)) == e for parsed expressions."""
        for source in ("-x1", "x1^2", "-x2^2", "x1 - (x2 - 1)", "x1/(x2*3)", "(x1^2)^3", "-(x1 + x2)"):
            with self.subTest(source=source):
                expr = parse(source, 2)
                self.assertEqual(parse(to_source(expr), 2), expr)

    def test_negative_constant_prints_parenthesized(self):
        """Test that a negative constant survives printing as a negation."""
        self.assertEqual(to_source(Constant(-3.0)), "(-3)")
        self.assertEqual(evaluate(parse(to_source(Pow(Constant(-3.0), 2.0)), 1), [0.0]), 9.0)

    def test_negative_exponent_prints_as_reciprocal(self):
        """Test that negative exponents are written without a negative literal."""
        expr = Pow(Var(1), -2.0)
        self.assertEqual(to_source(expr), "1/x1^2")
        self.assertAlmostEqual(evaluate(parse(to_source(expr), 1), [2.0]), 0.25)

    def test_str_uses_source_form(self):
        """Test that str() of a node is its source text."""
        self.assertEqual(str(Add(Var(1), Constant(2.0))), "x1 + 2")


def _expressions():
    leaves = st.one_of(
        st.floats(min_value=-5, max_value=5, allow_nan=False, allow_infinity=False).map(Constant),
        st.integers(min_value=1, max_value=2).map(Var),
    )

    def extend(children):
        return st.one_of(
            children.map(Neg),
            st.tuples(children, children).map(lambda p: Add(*p)),
            st.tuples(children, children).map(lambda p: Sub(*p)),
            st.tuples(children, children).map(lambda p: Mul(*p)),
            st.tuples(children, st.integers(min_value=1, max_value=3)).map(lambda p: Pow(p[0], float(p[1]))),
            st.tuples(st.sampled_from(["sin", "cos", "tanh"]), children).map(lambda p: Call(*p)),
            st.tuples(children, children, children).map(lambda p: IfPos(*p)),
        )

    return st.recursive(leaves, extend, max_leaves=12)


class TestRoundTripProperty(unittest.TestCase):
    """Property tests for printing and re-parsing."""

    @settings(max_examples=150, deadline=None)
    @given(
        expr=_expressions(),
        x1=st.floats(min_value=-2, max_value=2),
        x2=st.floats(min_value=-2, max_value=2),
    )
    def test_reparsed_expression_evaluates_equal(self, expr, x1, x2):
        """Test that the printed form of any expression denotes the same function."""
        expected = evaluate(expr, [x1, x2])
        assume(math.isfinite(expected))
        actual = evaluate(parse(to_source(expr), 2), [x1, x2])
        self.assertTrue(math.isclose(actual, expected, rel_tol=1e-12, abs_tol=1e-12), (to_source(expr), actual))


class TestEvaluate(unittest.TestCase):
    """Test cases for evaluation."""

    def test_evaluate_point(self):
        """Test evaluating at a single point."""
        expr = parse("x1^2 + 3*x2 - exp(0)", 2)
        self.assertAlmostEqual(evaluate(expr, [2.0, 1.0]), 6.0)

    def test_evaluate_batch_shape(self):
        """Test vectorised evaluation returns one value per row."""
        values = evaluate_batch(parse("x1*x2", 2), np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 5.0]]))
        np.testing.assert_allclose(values, [2.0, 12.0, 0.0])

    def test_constant_expression_broadcasts(self):
        """Test that a constant evaluates to a full column."""
        values = evaluate_batch(parse("7", 2), np.zeros((4, 2)))
        np.testing.assert_allclose(values, [7.0] * 4)

    def test_division_by_zero(self):
        """Test that division by zero is a domain error."""
        with self.assertRaises(ExpressionDomainError):
            evaluate(parse("1/x1", 1), [0.0])

    def test_logarithm_of_nonpositive(self):
        """Test ln domain."""
        with self.assertRaises(ExpressionDomainError):
            evaluate(parse("ln(x1)", 1), [0.0])

    def test_square_root_of_negative(self):
        """Test sqrt domain."""
        with self.assertRaises(ExpressionDomainError):
            evaluate(parse("sqrt(x1)", 1), [-1.0])

    def test_ifpos_is_lazy(self):
        """Test that the untaken branch is not checked for domain errors."""
        expr = parse("ifpos(x1, sqrt(x1), -x1)", 1)
        np.testing.assert_allclose(evaluate_batch(expr, [[-4.0], [4.0]]), [4.0, 2.0])
        self.assertEqual(evaluate(parse("ifpos(x1, ln(x1), 0)", 1), [-1.0]), 0.0)

    def test_ifpos_zero_takes_otherwise(self):
        """Test that ifpos selects the otherwise branch at cond = 0."""
        self.assertEqual(evaluate(parse("ifpos(x1, 1, 2)", 1), [0.0]), 2.0)

    def test_point_must_be_a_vector(self):
        """Test shape validation."""
        with self.assertRaises(ValueError):
            evaluate(parse("x1", 1), [[1.0]])


class TestDifferentiate(unittest.TestCase):
    """Test cases for symbolic differentiation."""

    def test_polynomial_derivative(self):
        """Test d/dx1 of x1^3."""
        derivative = differentiate(parse("x1^3", 1), 1)
        self.assertAlmostEqual(evaluate(derivative, [2.0]), 12.0)

    def test_product_and_chain_rule(self):
        """Test d/dx1 and d/dx2 of x1^2*sin(x2)."""
        expr = parse("x1^2*sin(x2)", 2)
        point = [1.5, 0.3]
        self.assertAlmostEqual(evaluate(differentiate(expr, 1), point), 2 * 1.5 * math.sin(0.3))
        self.assertAlmostEqual(evaluate(differentiate(expr, 2), point), 1.5**2 * math.cos(0.3))

    def test_quotient_rule(self):
        """Test d/dx1 of 1/(1 + x1^2)."""
        derivative = differentiate(parse("1/(1 + x1^2)", 1), 1)
        self.assertAlmostEqual(evaluate(derivative, [1.0]), -0.5)

    def test_elementary_functions(self):
        """Test derivatives of exp, ln, sqrt, tanh and cos."""
        x = 0.7
        cases = {
            "exp(2*x1)": 2 * math.exp(2 * x),
            "ln(x1)": 1 / x,
            "sqrt(x1)": 0.5 / math.sqrt(x),
            "tanh(x1)": 1 - math.tanh(x) ** 2,
            "cos(x1)": -math.sin(x),
        }
        for source, expected in cases.items():
            with self.subTest(source=source):
                self.assertAlmostEqual(evaluate(differentiate(parse(source, 1), 1), [x]), expected)

    def test_derivative_of_other_variable_is_zero(self):
        """Test that folding removes terms without the variable."""
        self.assertEqual(differentiate(parse("x1^2", 2), 2), Constant(0.0))

    def test_ifpos_differentiates_branchwise(self):
        """Test ifpos derivative away from the switching surface."""
        derivative = differentiate(parse("ifpos(x1, x1^2, -x1)", 1), 1)
        self.assertAlmostEqual(evaluate(derivative, [3.0]), 6.0)
        self.assertAlmostEqual(evaluate(derivative, [-3.0]), -1.0)

    def test_invalid_index(self):
        """Test that variable indices are 1-based."""
        with self.assertRaises(ValueError):
            differentiate(parse("x1", 1), 0)

    def test_gradient_and_jacobian(self):
        """Test gradient and Jacobian of the saddle."""
        grad = gradient(parse("x1^2 + x2^2", 2), 2)
        self.assertEqual([evaluate(g, [1.0, -2.0]) for g in grad], [2.0, -4.0])
        jac = jacobian([parse("-x1", 2), parse("x2", 2)])
        values = [[evaluate(entry, [0.0, 0.0]) for entry in row] for row in jac]
        self.assertEqual(values, [[-1.0, 0.0], [0.0, 1.0]])

    def test_lie_derivative_along_saddle(self):
        """Test psi = -2 x1^2 for phi = x1^2 under x1' = -x1."""
        psi = lie_derivative(parse("x1^2", 2), [parse("-x1", 2), parse("x2", 2)])
        for point in ([1.0, 5.0], [-2.0, 0.0], [0.5, -3.0]):
            with self.subTest(point=point):
                self.assertAlmostEqual(evaluate(psi, point), -2 * point[0] ** 2)

    def test_matches_central_differences(self):
        """Test symbolic partials against central differences with h = 1e-6 at seeded points."""
        sources = [
            "x1^3 - 2*x1*x2 + x2^2",
            "(x1 + x2^2) / (1 + x1^2)",
            "ln(x1 + x2^2)",
            "sqrt(x1) * exp(-x2^2 / 2)",
            "tanh(x1 * x2) + sin(x1) * cos(x2)",
            "x1^2.5 + 1/x1^1.5 - x2^3",
            "ifpos(x2 - 0.3, x1 * x2^2, exp(x1) - x2)",
        ]
        h = 1e-6
        rng = np.random.default_rng(5)
        points = np.column_stack([rng.uniform(0.5, 2.0, 20), rng.uniform(-1.5, 1.5, 20)])
        for source in sources:
            expr = parse(source, 2)
            for i in (1, 2):
                partial = differentiate(expr, i)
                step = np.eye(2)[i - 1] * h
                for x in points:
                    if "ifpos" in source and abs(x[1] - 0.3) < 1e-3:
                        continue
                    with self.subTest(source=source, i=i, x=tuple(x)):
                        central = (evaluate(expr, x + step) - evaluate(expr, x - step)) / (2 * h)
                        symbolic = evaluate(partial, x)
                        self.assertLess(abs(symbolic - central), 1e-5 * max(1.0, abs(symbolic)))

    def test_max_variable_index(self):
        """Test the variable-index scan."""
        self.assertEqual(max_variable_index(parse("x1 + sin(x3)", 3)), 3)
        self.assertEqual(max_variable_index(parse("2*4", 3)), 0)
        self.assertEqual(max_variable_index(Mul(Var(2), IfPos(Var(1), Var(4), Constant(0.0)))), 4)


if __name__ == "__main__":
    unittest.main()
