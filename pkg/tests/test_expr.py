from fractions import Fraction

import numpy as np
import pytest

from levilab.exceptions import (
    DimensionMismatchError,
    ExprDomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
    VariableIndexError,
)
from levilab.services.expr import (
    Const,
    Point,
    Ref,
    abs2,
    const,
    evaluate,
    evaluate_many,
    guard,
    mul,
    parse,
    substitute,
    to_text,
    var,
)

SOURCES = [
    "-abs2(z1) + abs2(z2)",
    "z1^2 * conj(z2) - 3/4",
    "log(1 + abs2(z1)) / (2 + re(z2))",
    "exp(i * z1) + (1.5-2i) * im(z2)",
    "max(re(z1), abs(z2) - 1)",
    "guard(z2, conj(z1) * z2^3 / conj(z2), 0)",
    "-(z1 - z2)^2",
    "sqrt(abs2(z1) + 1) ^ (-1)",
]


def test_parse_and_evaluate():
    e = parse("z1 * conj(z1)", 1)
    assert evaluate(e, [1 + 1j]) == pytest.approx(2.0)


@pytest.mark.parametrize("source", SOURCES)
def test_printer_reparses_to_equal_tree(source):
    e = parse(source, 2)
    assert parse(to_text(e), 2) == e


def _depth(e):
    return 1 + max((_depth(c) for c in e.operands), default=0)


def test_printer_round_trips_random_trees(random_trees, tree_definitions):
    for e in random_trees(1000, 8, 3):
        assert _depth(e) <= 8
        assert parse(to_text(e), 3, tree_definitions) == e


def test_rational_and_complex_literals():
    assert parse("3/4", 1) == Const(Fraction(3, 4))
    assert evaluate(parse("2i", 1), [0]) == 2j
    assert evaluate(parse("(1-2i)", 1), [0]) == 1 - 2j


def test_syntax_error_reports_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse("z1 + * z2", 2)
    assert err.value.line == 1
    assert err.value.column == 6


def test_unknown_names_are_rejected():
    with pytest.raises(UnknownIdentifierError):
        parse("foo(z1)", 1)
    with pytest.raises(UnknownIdentifierError):
        parse("w + 1", 1)


def test_variable_index_beyond_dimension():
    with pytest.raises(VariableIndexError):
        parse("z3", 2)


def test_domain_errors_carry_node_path():
    e = parse("log(abs2(z1))", 1)
    with pytest.raises(ExprDomainError) as err:
        evaluate(e, [0])
    assert err.value.path[0] == "log"
    values = evaluate_many(e, np.array([[0], [1]]))
    assert np.isnan(values[0])
    assert values[1] == 0


def test_guard_switches_on_exact_zero():
    e = guard(var(2), var(1) / var(2), const(0))
    assert evaluate(e, [1, 0]) == 0
    assert evaluate(e, [1, 2]) == pytest.approx(0.5)


def test_definitions_print_by_name():
    e = parse("r2 - 1", 2, {"r2": "abs2(z1) + abs2(z2)"})
    assert isinstance(e.left, Ref)
    assert to_text(e) == "r2 - 1"
    assert evaluate(e, [1, 0]) == pytest.approx(0.0)


def test_aliases():
    assert parse("s + t", 2, names={"s": 1, "t": 2}) == parse("z1 + z2", 2)


def test_substitute():
    e = substitute(abs2(var(1)), {1: mul(const(2), var(1))})
    assert evaluate(e, [1]) == pytest.approx(4.0)


def test_vectorized_matches_pointwise(random_points):
    e = parse("conj(z1) * z2^3 + log(2 + abs2(z1 - z2))", 2)
    P = random_points(20, 2)
    batch = evaluate_many(e, P)
    single = np.array([evaluate(e, p) for p in P])
    assert np.allclose(batch, single, rtol=1e-14, atol=0)


def test_max_of_non_real_argument_fails():
    with pytest.raises(ExprDomainError):
        evaluate(parse("max(z1, 0)", 1), [1j])


def test_point_dimension_checks():
    with pytest.raises(DimensionMismatchError):
        evaluate(parse("z2", 2), [1])
    with pytest.raises(ExprDomainError):
        Point.of(1, 1j, real_mask=(False, True))


def test_holomorphy_flag():
    assert parse("z1^2 + exp(z2)", 2).is_holomorphic
    assert not parse("z1 * conj(z2)", 2).is_holomorphic
    assert not parse("max(re(z1), 0)", 1).is_smooth
